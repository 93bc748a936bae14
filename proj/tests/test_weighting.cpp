#include <gtest/gtest.h>

#include "support.hpp"

using namespace obsdesign;
using testing_support::frame_of;

namespace {

struct ScoredFrame {
  StudyFrame frame;
  PropensityModel model;
};

ScoredFrame scored(std::vector<double> e, std::vector<int> t) {
  ScoredFrame s{frame_of({"x"}, {e}, std::move(t)), {}};
  s.model = PropensityModel::from_scores(Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size())));
  return s;
}

}  // namespace

TEST(Iptw, Examples) {
  const auto s = scored({0.5, 0.3, 0.2, 0.7}, {1, 1, 0, 0});
  const auto w = iptw(s.model, s.frame);
  EXPECT_DOUBLE_EQ(w.w[0], 2.0);
  EXPECT_DOUBLE_EQ(w.w[2], 1.25);
  EXPECT_EQ(w.estimand, Estimand::ATE);
}

TEST(Iptw, DegenerateScore) {
  const auto s = scored({0.5, 0.4, 1.0 - 1e-9, 0.3}, {1, 1, 0, 0});
  try {
    iptw(s.model, s.frame);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateScore);
  }
  ScoreWeightOptions clamp;
  clamp.clamp = true;
  const auto w = iptw(s.model, s.frame, nullptr, clamp);
  EXPECT_NEAR(w.w[2], 1.0 / clamp.eps, 1e-3);
}

TEST(OddsWeights, Examples) {
  const auto s = scored({0.9, 0.5, 0.8, 0.3}, {1, 0, 0, 1});
  const auto w = odds_weights(s.model, s.frame);
  EXPECT_DOUBLE_EQ(w.w[0], 1.0);
  EXPECT_DOUBLE_EQ(w.w[3], 1.0);
  EXPECT_DOUBLE_EQ(w.w[1], 1.0);
  EXPECT_NEAR(w.w[2], 4.0, 1e-12);
}

TEST(Trim, CapsAndIdentity) {
  WeightVector w;
  w.w = {1, 3, 10};
  EXPECT_EQ(trim(w, 5).w, (std::vector<double>{1, 3, 5}));
  EXPECT_EQ(trim(w, 5).n_capped, 1u);
  EXPECT_EQ(trim(w, 50).w, w.w);
}

TEST(Trim, CapOneOnOdds) {
  const auto s = scored({0.6, 0.9, 0.8, 0.2, 0.5}, {1, 0, 0, 0, 1});
  const auto w = trim(odds_weights(s.model, s.frame), 1.0);
  for (std::size_t i = 0; i < 5; ++i)
    if (!s.frame.treated(i)) {
      EXPECT_LE(w.w[i], 1.0);
    }
}

TEST(Trim, IdempotentAndMonotone) {
  std::mt19937_64 gen(2);
  std::exponential_distribution<double> ex(0.3);
  WeightVector w;
  for (int i = 0; i < 100; ++i) w.w.push_back(ex(gen));
  for (double cap : {0.5, 2.0, 5.0}) {
    EXPECT_EQ(trim(trim(w, cap), cap).w, trim(w, cap).w);
    const auto lo = trim(w, cap), hi = trim(w, cap * 1.5);
    for (std::size_t i = 0; i < w.w.size(); ++i) EXPECT_LE(lo.w[i], hi.w[i]);
  }
}

TEST(WeightsFromMatch, RatioReuseAndUnmatched) {
  MatchResult r;
  r.kind = MatchKind::pair;
  r.unit_weight.assign(7, 0.0);
  r.sets = {{{0}, {2, 3, 4}}, {{1}, {5}}, {{6}, {5}}};
  r.with_replacement = true;
  // unit 6 plays a second treated unit; control 5 is drawn twice.
  const auto w = weights_from_match(r);
  EXPECT_NEAR(w.w[2], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.w[4], 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(w.w[5], 2.0);
  EXPECT_EQ(w.scheme, WeightScheme::frequency);
  MatchResult s;
  s.kind = MatchKind::pair;
  s.unit_weight.assign(4, 0.0);
  s.sets = {{{0}, {2}}};
  EXPECT_DOUBLE_EQ(weights_from_match(s).w[3], 0.0);
  s.kind = MatchKind::subclass;
  EXPECT_THROW(weights_from_match(s), Error);
}

TEST(SubclassWeights, AttControlsGetTreatedShare) {
  const auto s = scored({0.6, 0.6, 0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0, 0, 0});
  Subclassification sub;
  sub.n_subclasses = 1;
  sub.subclass_of.assign(6, 0);
  const auto w = subclass_weights(sub, s.frame, Estimand::ATT);
  EXPECT_EQ(w.w, (std::vector<double>{1, 1, 0.5, 0.5, 0.5, 0.5}));
}

TEST(SubclassWeights, SingleSubclassIsUnadjustedComparison) {
  const std::vector<double> y{3, 5, 1, 2, 4};
  StudyFrame f = frame_of({"x"}, {{0, 0, 0, 0, 0}}, {1, 1, 0, 0, 0}, y);
  Subclassification sub;
  sub.n_subclasses = 1;
  sub.subclass_of.assign(5, 0);
  const auto w = subclass_weights(sub, f, Estimand::ATT);
  const auto ones = std::vector<double>(5, 1.0);
  EXPECT_NEAR(diff_in_means(f, w.w).tau_hat, diff_in_means(f, ones).tau_hat, 1e-12);
}

TEST(SubclassWeights, AteEqualSizesGiveEqualWeights) {
  const auto s = scored({0.1, 0.1, 0.2, 0.2, 0.7, 0.7, 0.8, 0.8}, {1, 1, 0, 0, 1, 1, 0, 0});
  Subclassification sub;
  sub.n_subclasses = 2;
  sub.subclass_of = {0, 0, 0, 0, 1, 1, 1, 1};
  const auto w = subclass_weights(sub, s.frame, Estimand::ATE);
  for (double v : w.w) EXPECT_DOUBLE_EQ(v, w.w[0]);
}
