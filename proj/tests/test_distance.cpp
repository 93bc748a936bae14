#include <gtest/gtest.h>

#include "support.hpp"

using namespace obsdesign;
using testing_support::frame_of;
using testing_support::shifted_normal_frame;

TEST(ExactDistance, Examples) {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 3}, c{1, 2, 4};
  EXPECT_EQ(exact_distance(a, b), 0.0);
  EXPECT_EQ(exact_distance(a, c), kInf);
  EXPECT_THROW(exact_distance(a, std::vector<double>{1, 2}), Error);
}

TEST(ExactDistance, CoarsenedSameBin) {
  const std::vector<double> a{2.4}, b{2.6}, c{3.1};
  const std::vector<std::vector<double>> edges{{2, 3}};
  EXPECT_EQ(coarsened_exact_distance(a, b, edges), 0.0);
  EXPECT_EQ(coarsened_exact_distance(a, c, edges), kInf);
}

TEST(Mahalanobis, Examples) {
  const Eigen::Vector2d zero(0, 0);
  EXPECT_DOUBLE_EQ(mahalanobis_distance(Eigen::Vector2d(3, 4), zero, Eigen::Matrix2d::Identity()), 25.0);
  Eigen::Matrix2d s = Eigen::Vector2d(4, 1).asDiagonal();
  EXPECT_NEAR(mahalanobis_distance(Eigen::Vector2d(2, 1), zero, s), 2.0, 1e-12);
  Eigen::Matrix2d full;
  full << 2, 0.5, 0.5, 1;
  EXPECT_EQ(mahalanobis_distance(Eigen::Vector2d(1.5, -2), Eigen::Vector2d(1.5, -2), full), 0.0);
}

TEST(Mahalanobis, SingularSigma) {
  Eigen::Matrix2d s;
  s << 1, 1, 1, 1;
  try {
    mahalanobis_distance(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularSigma);
  }
}

TEST(Mahalanobis, IdentityIsSquaredEuclidean) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd a(4), b(4);
    for (int k = 0; k < 4; ++k) {
      a(k) = z(gen);
      b(k) = z(gen);
    }
    EXPECT_NEAR(mahalanobis_distance(a, b, Eigen::Matrix4d::Identity()), (a - b).squaredNorm(), 1e-12);
  }
}

TEST(PropensityDistance, Examples) {
  EXPECT_EQ(propensity_distance(0.4, 0.4, true), 0.0);
  EXPECT_EQ(propensity_distance(0.4, 0.4, false), 0.0);
  EXPECT_NEAR(propensity_distance(0.5, 1.0 / (1.0 + std::exp(-1.0)), true), 1.0, 1e-12);
  EXPECT_NEAR(propensity_distance(0.2, 0.5, false), 0.3, 1e-12);
  try {
    propensity_distance(0.0, 0.5, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScoreOutOfRange);
  }
}

TEST(MahalanobisWithinCaliper, BoundaryIsInside) {
  const Eigen::Vector2d zi(1, 2), zj(2, 2);
  const Eigen::Matrix2d s = Eigen::Matrix2d::Identity();
  const double at = mahalanobis_within_caliper(zi, zj, s, 0.0, 0.5, 0.5);
  EXPECT_TRUE(std::isfinite(at));
  EXPECT_DOUBLE_EQ(at, 1.0);
  EXPECT_EQ(mahalanobis_within_caliper(zi, zj, s, 0.0, 0.75, 0.5), kInf);
  EXPECT_EQ(mahalanobis_within_caliper(zi, zi, s, 0.1, 0.2, 0.5), 0.0);
}

TEST(BuildMatrix, ShapeAndConstantScores) {
  const auto f = frame_of({"x"}, {{1, 2, 3, 4, 5}}, {1, 1, 0, 0, 0});
  const auto m = PropensityModel::from_scores(Eigen::VectorXd::Constant(5, 0.5));
  DistanceSpec spec;
  const auto d = build_matrix(f, spec, &m);
  EXPECT_EQ(d.d.rows(), 2);
  EXPECT_EQ(d.d.cols(), 3);
  EXPECT_EQ(d.d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BuildMatrix, ExactWithoutTwinsIsAllInfinite) {
  const auto f = frame_of({"x"}, {{1, 2, 3, 4, 5}}, {1, 1, 0, 0, 0});
  DistanceSpec spec;
  spec.kind = DistanceKind::exact;
  const auto d = build_matrix(f, spec);
  EXPECT_TRUE((d.d.array() == kInf).all());
}

TEST(BuildMatrix, SymmetricMeasure) {
  const auto f = shifted_normal_frame(8, 12, 3, 0.5, 11);
  const auto m = fit_logistic(f, f.covariates.names());
  const Eigen::MatrixXd x = f.design(f.covariates.names());
  for (auto kind : {DistanceKind::mahalanobis, DistanceKind::linear_propensity, DistanceKind::propensity}) {
    DistanceSpec spec;
    spec.kind = kind;
    const auto d = build_matrix(f, spec, &m);
    const Eigen::MatrixXd sigma = covariance(x, f.arm(0));
    for (std::size_t r = 0; r < d.rows.size(); ++r)
      for (std::size_t c = 0; c < d.cols.size(); ++c) {
        const auto i = static_cast<Eigen::Index>(d.rows[r]), j = static_cast<Eigen::Index>(d.cols[c]);
        double reverse = 0.0;
        if (kind == DistanceKind::mahalanobis)
          reverse = mahalanobis_distance(x.row(j).transpose(), x.row(i).transpose(), sigma);
        else
          reverse = propensity_distance(m.scores(j), m.scores(i), kind == DistanceKind::linear_propensity);
        EXPECT_NEAR(d.d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), reverse, 1e-9);
      }
  }
}

TEST(BuildMatrix, MahalanobisAffineInvariance) {
  const auto f = shifted_normal_frame(10, 15, 3, 0.5, 12);
  DistanceSpec spec;
  spec.kind = DistanceKind::mahalanobis;
  const auto base = build_matrix(f, spec);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::Matrix3d a;
    do {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a(r, c) = z(gen);
    } while (std::abs(a.determinant()) < 0.2);
    StudyFrame g = f;
    g.covariates.values = (f.covariates.values * a.transpose()).rowwise() + Eigen::RowVector3d(z(gen), z(gen), z(gen));
    const auto d = build_matrix(g, spec);
    EXPECT_LT((d.d - base.d).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(BuildMatrix, ExactPatternSurvivesMonotoneMaps) {
  const auto f = frame_of({"a", "b"}, {{1, 2, 1, 2, 3}, {0, 1, 0, 5, 1}}, {1, 1, 0, 0, 0});
  DistanceSpec spec;
  spec.kind = DistanceKind::exact;
  const auto base = build_matrix(f, spec);
  StudyFrame g = f;
  g.covariates.values = f.covariates.values.array().exp() * 3.0 - 1.0;
  const auto d = build_matrix(g, spec);
  EXPECT_TRUE(((base.d.array() == 0.0) == (d.d.array() == 0.0)).all());
}

TEST(BuildMatrix, ConstantCovariateInSigmaGroup) {
  const auto f = frame_of({"a", "b"}, {{1, 2, 3, 4, 5, 6}, {0, 1, 7, 7, 7, 7}}, {1, 1, 0, 0, 0, 0});
  DistanceSpec spec;
  spec.kind = DistanceKind::mahalanobis;
  try {
    build_matrix(f, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateVariance);
  }
}
