#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/matchers.hpp"
#include "obsdesign/propensity.hpp"

namespace obsdesign {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct BalanceThresholds {
  double std_diff_max = 0.25;
  double var_ratio_lo = 0.5;
  double var_ratio_hi = 2.0;

  bool std_diff_ok(double v) const { return std::isfinite(v) && std::abs(v) < std_diff_max; }
  bool var_ratio_ok(double v) const { return !std::isfinite(v) || (v >= var_ratio_lo && v <= var_ratio_hi); }
};

struct BalanceRecord {
  std::string name;
  double std_diff_pre = kNaN;
  double std_diff_post = kNaN;
  double variance_ratio_pre = kNaN;
  double variance_ratio_post = kNaN;
  double eqq_mean = kNaN;
  double eqq_max = kNaN;
  double residual_var_ratio = kNaN;
  bool flag_std_diff = false;
  bool flag_variance_ratio = false;
  bool flag_residual_var_ratio = false;
};

struct PropensitySummary {
  double std_diff_B_pre = kNaN;
  double variance_ratio_R_pre = kNaN;
  double std_diff_B = kNaN;
  double variance_ratio_R = kNaN;
  bool flag_std_diff_B = false;
  bool flag_variance_ratio_R = false;
};

/// Balance before (unweighted, full sample) and after (design weights) the
/// design. Carries no hypothesis-test quantities.
struct BalanceReport {
  std::vector<BalanceRecord> records;
  PropensitySummary propensity;
  BalanceThresholds thresholds;

  bool balanced() const {
    for (const auto& r : records)
      if (r.flag_std_diff) return false;
    return true;
  }
  double max_abs_std_diff_post() const {
    double m = 0.0;
    for (const auto& r : records)
      if (std::isfinite(r.std_diff_post)) m = std::max(m, std::abs(r.std_diff_post));
    return m;
  }
};

namespace detail {

struct ArmMoments {
  double mean = kNaN;
  double var = kNaN;
  double sum_w = 0.0;
};

// Weighted mean and variance with the (sum w - sum w^2 / sum w) denominator,
// which reduces to the n-1 sample variance for unit weights.
inline ArmMoments arm_moments(const Eigen::VectorXd& x, const std::vector<double>& w, const StudyFrame& frame,
                              int arm) {
  double sw = 0.0, sw2 = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (frame.treatment[i] != arm || !(w[i] > 0.0)) continue;
    sw += w[i];
    sw2 += w[i] * w[i];
    swx += w[i] * x(static_cast<Eigen::Index>(i));
  }
  ArmMoments m;
  m.sum_w = sw;
  if (sw <= 0.0) return m;
  m.mean = swx / sw;
  double ss = 0.0;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (frame.treatment[i] != arm || !(w[i] > 0.0)) continue;
    const double dx = x(static_cast<Eigen::Index>(i)) - m.mean;
    ss += w[i] * dx * dx;
  }
  const double denom = sw - sw2 / sw;
  m.var = denom > 0.0 ? ss / denom : kNaN;
  return m;
}

inline std::vector<double> unit_weights(const StudyFrame& frame) { return std::vector<double>(frame.n_units(), 1.0); }

inline double ratio_or_nan(double a, double b) { return (std::isfinite(a) && std::isfinite(b) && b > 0.0) ? a / b : kNaN; }

}  // namespace detail

/// SD of a covariate over the full (pre-design) treated group.
inline double treated_sd(const StudyFrame& frame, const Eigen::VectorXd& x) {
  const auto m = detail::arm_moments(x, detail::unit_weights(frame), frame, 1);
  return std::isfinite(m.var) ? std::sqrt(m.var) : 0.0;
}

/// Weighted difference in arm means over a fixed treated-group SD.
inline double std_diff(const StudyFrame& frame, const Eigen::VectorXd& x, const std::vector<double>& weights,
                       double sigma_t_pre) {
  if (!(sigma_t_pre > 0.0)) fail(ErrorCode::ZeroVariance, "treated-group standard deviation is zero");
  const auto t = detail::arm_moments(x, weights, frame, 1);
  const auto c = detail::arm_moments(x, weights, frame, 0);
  if (t.sum_w <= 0.0 || c.sum_w <= 0.0) fail(ErrorCode::EmptyGroup, "an arm has no positive weight");
  return (t.mean - c.mean) / sigma_t_pre;
}

inline double std_diff(const StudyFrame& frame, const std::string& covariate, const std::vector<double>& weights,
                       double sigma_t_pre) {
  return std_diff(frame, frame.column(covariate), weights, sigma_t_pre);
}

/// Weighted treated/control variance ratio; NaN when the control variance is zero.
inline double variance_ratio(const StudyFrame& frame, const Eigen::VectorXd& x, const std::vector<double>& weights) {
  const auto t = detail::arm_moments(x, weights, frame, 1);
  const auto c = detail::arm_moments(x, weights, frame, 0);
  return detail::ratio_or_nan(t.var, c.var);
}

struct RubinMetrics {
  double B = kNaN;
  double R = kNaN;
  std::vector<std::pair<std::string, double>> residual_ratios;
};

/// Per covariate, the treated/control variance ratio of the residuals from a
/// weighted regression of the covariate on the linear propensity score.
inline double residual_variance_ratio(const StudyFrame& frame, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& linear_score, const std::vector<double>& weights) {
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    sw += weights[i];
    sx += weights[i] * linear_score(static_cast<Eigen::Index>(i));
    sy += weights[i] * x(static_cast<Eigen::Index>(i));
  }
  if (sw <= 0.0) fail(ErrorCode::EmptyGroup, "no unit has positive weight");
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    const double dx = linear_score(static_cast<Eigen::Index>(i)) - mx;
    sxx += weights[i] * dx * dx;
    sxy += weights[i] * dx * (x(static_cast<Eigen::Index>(i)) - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  Eigen::VectorXd resid = x.array() - my - slope * (linear_score.array() - mx);
  return variance_ratio(frame, resid, weights);
}

/// The three-measure summary: standardized difference of the linear
/// propensity score means (B), its variance ratio (R), and the residual
/// variance ratios of each model covariate.
inline RubinMetrics rubin_metrics(const PropensityModel& model, const StudyFrame& frame,
                                  const std::vector<double>& weights) {
  RubinMetrics out;
  const double sigma = treated_sd(frame, model.linear_scores);
  if (!(sigma > 0.0)) fail(ErrorCode::ZeroVariance, "treated linear propensity scores have zero variance");
  out.B = std_diff(frame, model.linear_scores, weights, sigma);
  out.R = variance_ratio(frame, model.linear_scores, weights);
  for (const auto& name : model.column_names)
    out.residual_ratios.emplace_back(
        name, residual_variance_ratio(frame, frame.column(name), model.linear_scores, weights));
  return out;
}

struct EqqStats {
  double mean_diff = 0.0;
  double max_diff = 0.0;
};

/// Empirical QQ differences between the arms (units with positive weight),
/// evaluated at the smaller group's order statistics with nearest-rank
/// quantiles in the larger group.
inline EqqStats eqq_stats(const StudyFrame& frame, const Eigen::VectorXd& x, const std::vector<double>& weights) {
  std::vector<double> t, c;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    (frame.treated(i) ? t : c).push_back(x(static_cast<Eigen::Index>(i)));
  }
  if (t.empty() || c.empty()) fail(ErrorCode::EmptyGroup, "an arm has no retained units");
  std::sort(t.begin(), t.end());
  std::sort(c.begin(), c.end());
  const auto& small = t.size() <= c.size() ? t : c;
  const auto& large = t.size() <= c.size() ? c : t;
  const double m = static_cast<double>(small.size());
  const double n = static_cast<double>(large.size());
  EqqStats out;
  for (std::size_t k = 0; k < small.size(); ++k) {
    const double p = static_cast<double>(k + 1) / m;
    auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, large.size());
    const double diff = std::abs(small[k] - large[rank - 1]);
    out.mean_diff += diff;
    out.max_diff = std::max(out.max_diff, diff);
  }
  out.mean_diff /= m;
  return out;
}

inline EqqStats eqq_stats(const StudyFrame& frame, const std::string& covariate, const MatchResult& result) {
  return eqq_stats(frame, frame.column(covariate), result.unit_weight);
}

/// Pre/post balance for `columns` (defaults to the model's columns).
inline BalanceReport balance_report(const StudyFrame& frame, const PropensityModel& model,
                                    const std::vector<double>& post_weights, std::vector<std::string> columns = {},
                                    const BalanceThresholds& thresholds = {}) {
  if (columns.empty()) columns = model.column_names;
  if (columns.empty()) columns = frame.covariates.names();
  const auto pre = detail::unit_weights(frame);
  BalanceReport rep;
  rep.thresholds = thresholds;
  for (const auto& name : columns) {
    const Eigen::VectorXd x = frame.column(name);
    BalanceRecord r;
    r.name = name;
    const double sigma = treated_sd(frame, x);
    if (sigma > 0.0) {
      r.std_diff_pre = std_diff(frame, x, pre, sigma);
      r.std_diff_post = std_diff(frame, x, post_weights, sigma);
    } else {
      // Constant in the treated group: report the raw mean difference.
      const auto t0 = detail::arm_moments(x, pre, frame, 1), c0 = detail::arm_moments(x, pre, frame, 0);
      const auto t1 = detail::arm_moments(x, post_weights, frame, 1),
                 c1 = detail::arm_moments(x, post_weights, frame, 0);
      r.std_diff_pre = t0.mean == c0.mean ? 0.0 : kNaN;
      r.std_diff_post = t1.mean == c1.mean ? 0.0 : kNaN;
    }
    r.variance_ratio_pre = variance_ratio(frame, x, pre);
    r.variance_ratio_post = variance_ratio(frame, x, post_weights);
    const auto q = eqq_stats(frame, x, post_weights);
    r.eqq_mean = q.mean_diff;
    r.eqq_max = q.max_diff;
    if (model.linear_scores.size() == static_cast<Eigen::Index>(frame.n_units()))
      r.residual_var_ratio = residual_variance_ratio(frame, x, model.linear_scores, post_weights);
    r.flag_std_diff = !thresholds.std_diff_ok(r.std_diff_post);
    r.flag_variance_ratio = !thresholds.var_ratio_ok(r.variance_ratio_post);
    r.flag_residual_var_ratio = !thresholds.var_ratio_ok(r.residual_var_ratio);
    rep.records.push_back(std::move(r));
  }
  if (model.linear_scores.size() == static_cast<Eigen::Index>(frame.n_units())) {
    const double sigma = treated_sd(frame, model.linear_scores);
    if (sigma > 0.0) {
      rep.propensity.std_diff_B_pre = std_diff(frame, model.linear_scores, pre, sigma);
      rep.propensity.std_diff_B = std_diff(frame, model.linear_scores, post_weights, sigma);
    }
    rep.propensity.variance_ratio_R_pre = variance_ratio(frame, model.linear_scores, pre);
    rep.propensity.variance_ratio_R = variance_ratio(frame, model.linear_scores, post_weights);
    rep.propensity.flag_std_diff_B = !thresholds.std_diff_ok(rep.propensity.std_diff_B);
    rep.propensity.flag_variance_ratio_R = !thresholds.var_ratio_ok(rep.propensity.variance_ratio_R);
  }
  return rep;
}

namespace detail {
inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
}  // namespace detail

inline nlohmann::json to_json(const BalanceReport& rep) {
  using nlohmann::json;
  json covs = json::array();
  for (const auto& r : rep.records) {
    covs.push_back({{"name", r.name},
                    {"std_diff_pre", detail::number_or_null(r.std_diff_pre)},
                    {"std_diff_post", detail::number_or_null(r.std_diff_post)},
                    {"variance_ratio_pre", detail::number_or_null(r.variance_ratio_pre)},
                    {"variance_ratio_post", detail::number_or_null(r.variance_ratio_post)},
                    {"eqq_mean", detail::number_or_null(r.eqq_mean)},
                    {"eqq_max", detail::number_or_null(r.eqq_max)},
                    {"residual_var_ratio", detail::number_or_null(r.residual_var_ratio)},
                    {"flags",
                     {{"std_diff", r.flag_std_diff},
                      {"variance_ratio", r.flag_variance_ratio},
                      {"residual_var_ratio", r.flag_residual_var_ratio}}}});
  }
  return {{"covariates", covs},
          {"propensity",
           {{"std_diff_B", detail::number_or_null(rep.propensity.std_diff_B)},
            {"variance_ratio_R", detail::number_or_null(rep.propensity.variance_ratio_R)},
            {"std_diff_B_pre", detail::number_or_null(rep.propensity.std_diff_B_pre)},
            {"variance_ratio_R_pre", detail::number_or_null(rep.propensity.variance_ratio_R_pre)},
            {"flags",
             {{"std_diff_B", rep.propensity.flag_std_diff_B},
              {"variance_ratio_R", rep.propensity.flag_variance_ratio_R}}}}},
          {"thresholds",
           {{"std_diff_max", rep.thresholds.std_diff_max},
            {"var_ratio_range", {rep.thresholds.var_ratio_lo, rep.thresholds.var_ratio_hi}}}}};
}

}  // namespace obsdesign
