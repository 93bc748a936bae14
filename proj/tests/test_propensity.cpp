#include <gtest/gtest.h>

#include "support.hpp"

using namespace obsdesign;
using testing_support::frame_of;
using testing_support::shifted_normal_frame;

TEST(FitLogistic, InterceptOnlyMatchesSampleProportion) {
  std::vector<int> t = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const auto f = frame_of({"x"}, {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}, t);
  const auto m = fit_logistic(f, {});
  EXPECT_NEAR(m.coefficients(0), std::log(0.3 / 0.7), 1e-12);
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_NEAR(m.scores(i), 0.3, 1e-12);
}

TEST(FitLogistic, SymmetricDataGivesOneHalf) {
  const auto f = frame_of({"x"}, {{0, 0, 1, 1}}, {1, 0, 1, 0});
  const auto m = fit_logistic(f, {"x"});
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(m.scores(i), 0.5, 1e-12);
}

TEST(FitLogistic, TwoUnitsCannotIdentifyTwoTerms) {
  const auto f = frame_of({"x"}, {{0, 0}}, {1, 0});
  EXPECT_THROW(fit_logistic(f, {"x"}), Error);
}

TEST(FitLogistic, PerfectSeparation) {
  const auto f = frame_of({"x"}, {{1, 2, 3, 4}}, {0, 0, 1, 1});
  try {
    fit_logistic(f, {"x"});
    FAIL() << "expected Separation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Separation);
  }
}

TEST(FitLogistic, CollinearColumnsAreSingular) {
  const auto f = frame_of({"a", "b"}, {{1, 2, 3, 4, 5, 6}, {2, 4, 6, 8, 10, 12}}, {1, 0, 0, 1, 1, 0});
  try {
    fit_logistic(f, {"a", "b"});
    FAIL() << "expected SingularDesign";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularDesign);
  }
}

TEST(FitLogistic, ScoreEquationsAndRange) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto f = shifted_normal_frame(150, 250, 3, 0.4, seed);
    const auto m = fit_logistic(f, f.covariates.names());
    EXPECT_TRUE(m.converged);
    EXPECT_LT(max_score_residual(f, m), 1e-6 * static_cast<double>(f.n_units()));
    EXPECT_NEAR(m.scores.sum(), static_cast<double>(f.n_treated()), 1e-6);
    EXPECT_GT(m.scores.minCoeff(), 0.0);
    EXPECT_LT(m.scores.maxCoeff(), 1.0);
  }
}

TEST(FitLogistic, AffineEquivariance) {
  const auto f = shifted_normal_frame(120, 180, 3, 0.5, 7);
  const auto base = fit_logistic(f, f.covariates.names());
  std::mt19937_64 gen(99);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::Matrix3d a;
    do {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a(r, c) = z(gen);
    } while (std::abs(a.determinant()) < 0.2);
    const Eigen::RowVector3d b(z(gen), z(gen), z(gen));
    StudyFrame g = f;
    g.covariates.values = (f.covariates.values * a.transpose()).rowwise() + b;
    const auto m = fit_logistic(g, g.covariates.names());
    EXPECT_LT((m.scores - base.scores).cwiseAbs().maxCoeff(), 1e-6);
  }
}

namespace {

BalanceReport report_with(const std::vector<std::pair<std::string, double>>& post) {
  BalanceReport r;
  for (const auto& [name, v] : post) {
    BalanceRecord rec;
    rec.name = name;
    rec.std_diff_post = v;
    r.records.push_back(rec);
  }
  return r;
}

}  // namespace

TEST(Respecify, BalancedModelIsUnchanged) {
  const auto f = shifted_normal_frame(100, 100, 2, 0.3, 3);
  const auto m = fit_logistic(f, {"x1", "x2"});
  const auto r = respecify(f, m, report_with({{"x1", 0.1}, {"x2", -0.2}}), 0.25);
  EXPECT_TRUE(r.added_terms.empty());
  EXPECT_LT((r.model.coefficients - m.coefficients).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Respecify, AddsSquareOfImbalancedCovariate) {
  const auto f = shifted_normal_frame(100, 100, 2, 0.3, 4);
  const auto m = fit_logistic(f, {"x1", "x2"});
  const auto r = respecify(f, m, report_with({{"x1", 0.30}, {"x2", 0.1}}), 0.25);
  EXPECT_EQ(r.added_terms, std::vector<std::string>{square_name("x1")});
  EXPECT_EQ(r.model.column_names.size(), 3u);
  EXPECT_TRUE(r.frame.covariates.find(square_name("x1")).has_value());
}

TEST(Respecify, ZeroThresholdSquaresEveryImbalancedCovariate) {
  const auto f = shifted_normal_frame(100, 100, 2, 0.3, 5);
  const auto m = fit_logistic(f, {"x1", "x2"});
  const auto r = respecify(f, m, report_with({{"x1", 0.01}, {"x2", -0.02}}), 0.0);
  for (const auto* name : {"x1", "x2"})
    EXPECT_NE(std::find(r.added_terms.begin(), r.added_terms.end(), square_name(name)), r.added_terms.end());
}
