#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/design.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/matchers.hpp"
#include "obsdesign/propensity.hpp"

namespace obsdesign::sim {

/// One normally distributed covariate with arm-specific mean and SD.
struct CovariateModel {
  std::string name;
  double mean_treated = 0.0;
  double mean_control = 0.0;
  double sd_treated = 1.0;
  double sd_control = 1.0;
  double outcome_coef = 0.0;
};

/// Synthetic observational study with a known constant effect.
struct Scenario {
  std::size_t n_treated = 100;
  std::size_t n_control = 100;
  std::vector<CovariateModel> covariates;
  // Intercept followed by one coefficient per covariate. When absent the
  // true score is the exact posterior implied by the arm-conditional normals.
  std::optional<std::vector<double>> true_coefficients;
  double true_tau = 0.0;
  double outcome_intercept = 0.0;
  double noise_sd = 1.0;
  // Covariates rounded to multiples of this step (creates exact twins).
  std::optional<double> rounding;
  std::uint64_t seed = 1;
};

struct SimulatedData {
  StudyFrame frame;
  Eigen::VectorXd true_scores;
};

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.n_treated = j.at("n_treated").get<std::size_t>();
  s.n_control = j.at("n_control").get<std::size_t>();
  for (const auto& c : j.at("covariates")) {
    CovariateModel m;
    m.name = c.at("name").get<std::string>();
    m.mean_treated = c.value("mean_treated", 0.0);
    m.mean_control = c.value("mean_control", 0.0);
    m.sd_treated = c.value("sd_treated", 1.0);
    m.sd_control = c.value("sd_control", 1.0);
    m.outcome_coef = c.value("outcome_coef", 0.0);
    s.covariates.push_back(m);
  }
  if (j.contains("true_coefficients")) s.true_coefficients = j.at("true_coefficients").get<std::vector<double>>();
  s.true_tau = j.value("true_tau", 0.0);
  s.outcome_intercept = j.value("outcome_intercept", 0.0);
  s.noise_sd = j.value("noise_sd", 1.0);
  if (j.contains("rounding")) s.rounding = j.at("rounding").get<double>();
  s.seed = j.value("seed", std::uint64_t{1});
  return s;
}

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& c : s.covariates)
    covs.push_back({{"name", c.name},
                    {"mean_treated", c.mean_treated},
                    {"mean_control", c.mean_control},
                    {"sd_treated", c.sd_treated},
                    {"sd_control", c.sd_control},
                    {"outcome_coef", c.outcome_coef}});
  nlohmann::json j = {{"n_treated", s.n_treated},   {"n_control", s.n_control},
                      {"covariates", covs},         {"true_tau", s.true_tau},
                      {"outcome_intercept", s.outcome_intercept}, {"noise_sd", s.noise_sd},
                      {"seed", s.seed}};
  if (s.true_coefficients) j["true_coefficients"] = *s.true_coefficients;
  if (s.rounding) j["rounding"] = *s.rounding;
  return j;
}

inline void validate(const Scenario& s) {
  if (s.n_treated == 0 || s.n_control == 0) fail(ErrorCode::InvalidScenario, "both arms need units");
  if (s.covariates.empty()) fail(ErrorCode::InvalidScenario, "scenario needs at least one covariate");
  for (const auto& c : s.covariates)
    if (!(c.sd_treated > 0.0) || !(c.sd_control > 0.0))
      fail(ErrorCode::InvalidScenario, "covariate '" + c.name + "' needs positive SDs");
  if (s.true_coefficients && s.true_coefficients->size() != s.covariates.size() + 1)
    fail(ErrorCode::InvalidScenario, "true_coefficients needs an intercept plus one entry per covariate");
  if (s.noise_sd < 0.0) fail(ErrorCode::InvalidScenario, "noise_sd must be nonnegative");
  if (s.rounding && !(*s.rounding > 0.0)) fail(ErrorCode::InvalidScenario, "rounding step must be positive");
}

namespace detail {

// Box-Muller on raw 53-bit uniforms, so draws are identical on every platform.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : gen_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

/// Exact P(T=1 | x) under the scenario's arm-conditional normal model.
inline double posterior_score(const Scenario& s, const Eigen::RowVectorXd& x) {
  double log_odds = std::log(static_cast<double>(s.n_treated) / static_cast<double>(s.n_control));
  for (std::size_t k = 0; k < s.covariates.size(); ++k) {
    const auto& c = s.covariates[k];
    const double v = x(static_cast<Eigen::Index>(k));
    const double zt = (v - c.mean_treated) / c.sd_treated;
    const double zc = (v - c.mean_control) / c.sd_control;
    log_odds += -0.5 * zt * zt - std::log(c.sd_treated) + 0.5 * zc * zc + std::log(c.sd_control);
  }
  return logistic(log_odds);
}

/// Logistic coefficients of the true score when every covariate has equal
/// SDs across arms (the log-odds is then linear in x).
inline std::vector<double> normal_shift_coefficients(const Scenario& s) {
  std::vector<double> beta(s.covariates.size() + 1);
  beta[0] = std::log(static_cast<double>(s.n_treated) / static_cast<double>(s.n_control));
  for (std::size_t k = 0; k < s.covariates.size(); ++k) {
    const auto& c = s.covariates[k];
    if (c.sd_treated != c.sd_control)
      fail(ErrorCode::InvalidScenario, "covariate '" + c.name + "' has unequal SDs; the true log-odds is not linear");
    const double v = c.sd_treated * c.sd_treated;
    beta[k + 1] = (c.mean_treated - c.mean_control) / v;
    beta[0] -= (c.mean_treated * c.mean_treated - c.mean_control * c.mean_control) / (2.0 * v);
  }
  return beta;
}

/// Draws treated units first, then controls. Y = intercept + tau*T + b'x + noise.
inline SimulatedData generate(const Scenario& s) {
  validate(s);
  const std::size_t n = s.n_treated + s.n_control;
  const auto p = static_cast<Eigen::Index>(s.covariates.size());
  detail::NormalStream normal(s.seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), p);
  std::vector<int> t(n);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const bool treated = i < s.n_treated;
    t[i] = treated ? 1 : 0;
    for (Eigen::Index k = 0; k < p; ++k) {
      const auto& c = s.covariates[static_cast<std::size_t>(k)];
      double v = treated ? c.mean_treated + c.sd_treated * normal() : c.mean_control + c.sd_control * normal();
      if (s.rounding) v = std::round(v / *s.rounding) * *s.rounding;
      x(static_cast<Eigen::Index>(i), k) = v;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v = s.outcome_intercept + s.true_tau * t[i];
    for (Eigen::Index k = 0; k < p; ++k)
      v += s.covariates[static_cast<std::size_t>(k)].outcome_coef * x(static_cast<Eigen::Index>(i), k);
    y(static_cast<Eigen::Index>(i)) = v + s.noise_sd * normal();
  }
  std::vector<std::string> names;
  for (const auto& c : s.covariates) names.push_back(c.name);

  SimulatedData out;
  out.frame = make_frame(names, x, std::move(t), y);
  out.true_scores.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    if (s.true_coefficients) {
      double eta = (*s.true_coefficients)[0];
      for (Eigen::Index k = 0; k < p; ++k) eta += (*s.true_coefficients)[static_cast<std::size_t>(k) + 1] * x(i, k);
      out.true_scores(i) = logistic(eta);
    } else {
      out.true_scores(i) = posterior_score(s, x.row(i));
    }
  }
  return out;
}

inline std::uint64_t replicate_seed(std::uint64_t base, std::size_t rep) {
  return obsdesign::detail::splitmix64(base + 0x632be59bd9b4e019ULL * (static_cast<std::uint64_t>(rep) + 1));
}

struct BiasReduction {
  double percent = 0.0;  // mean over replicates
  std::vector<double> per_replicate;
};

/// Weighted treated-minus-control mean of one covariate.
inline double weighted_mean_difference(const StudyFrame& frame, const Eigen::VectorXd& x, const std::vector<double>& w) {
  double sw[2] = {0, 0}, sx[2] = {0, 0};
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (!(w[i] > 0.0)) continue;
    sw[frame.treatment[i]] += w[i];
    sx[frame.treatment[i]] += w[i] * x(static_cast<Eigen::Index>(i));
  }
  if (sw[0] <= 0.0 || sw[1] <= 0.0) fail(ErrorCode::EmptyArm, "design left an arm with no weight");
  return sx[1] / sw[1] - sx[0] / sw[0];
}

/// Percent reduction in the mean difference of `covariate` achieved by the
/// design, averaged over `reps` replicate datasets:
/// 100 * (1 - |post-design difference| / |initial difference|).
inline BiasReduction bias_reduction(const Scenario& s, const DesignConfig& design, const std::string& covariate,
                                    std::size_t reps, bool use_true_scores = false) {
  if (reps == 0) fail(ErrorCode::InvalidArgument, "need at least one replicate");
  BiasReduction out;
  for (std::size_t r = 0; r < reps; ++r) {
    Scenario rs = s;
    rs.seed = replicate_seed(s.seed, r);
    const SimulatedData data = generate(rs);
    const Eigen::VectorXd x = data.frame.column(covariate);
    const std::vector<double> ones(data.frame.n_units(), 1.0);
    const double initial = weighted_mean_difference(data.frame, x, ones);
    if (std::abs(initial) < 1e-12) fail(ErrorCode::ZeroInitialBias, "covariate has no initial mean difference");
    const DesignOutcome d = run_design(data.frame, design, use_true_scores ? &data.true_scores : nullptr);
    const double post = weighted_mean_difference(data.frame, x, d.result.unit_weight);
    out.per_replicate.push_back(100.0 * (1.0 - std::abs(post) / std::abs(initial)));
  }
  double sum = 0.0;
  for (double v : out.per_replicate) sum += v;
  out.percent = sum / static_cast<double>(reps);
  return out;
}

}  // namespace obsdesign::sim
