#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/matchers.hpp"
#include "obsdesign/weighting.hpp"

namespace obsdesign {

struct EffectEstimate {
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Estimand estimand = Estimand::ATT;
  // "design_naive" treats the weights as fixed; "bootstrap" reruns the design.
  std::string se_kind = "design_naive";
  double n_effective = 0.0;
  nlohmann::json method = nlohmann::json::object();

  void set_se(double s) {
    se = s;
    ci_lo = tau_hat - 1.96 * se;
    ci_hi = tau_hat + 1.96 * se;
  }
};

inline nlohmann::json to_json(const EffectEstimate& e) {
  return {{"tau_hat", e.tau_hat},
          {"se", e.se},
          {"se_kind", e.se_kind},
          {"ci95", {e.ci_lo, e.ci_hi}},
          {"estimand", to_string(e.estimand)},
          {"n_effective", e.n_effective},
          {"method", e.method}};
}

namespace detail {

inline const Eigen::VectorXd& require_outcome(const StudyFrame& frame) {
  if (!frame.outcome) fail(ErrorCode::NoOutcome, "frame has no outcome column");
  return *frame.outcome;
}

inline double kish_n(const std::vector<double>& w) {
  double s = 0.0, s2 = 0.0;
  for (double v : w)
    if (v > 0.0) {
      s += v;
      s2 += v * v;
    }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

struct WlsFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  // heteroskedasticity-robust (HC0) sandwich
};

// Weighted least squares over rows with positive weight.
inline WlsFit wls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& w) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (w[static_cast<std::size_t>(i)] > 0.0) rows.push_back(i);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = x.cols();
  if (n < p) fail(ErrorCode::SingularDesign, "fewer weighted units than regression terms");
  Eigen::MatrixXd xw(n, p);
  Eigen::VectorXd yw(n), wv(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double sw = std::sqrt(w[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])]);
    wv(r) = sw * sw;
    xw.row(r) = sw * x.row(rows[static_cast<std::size_t>(r)]);
    yw(r) = sw * y(rows[static_cast<std::size_t>(r)]);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) fail(ErrorCode::SingularDesign, "weighted regression design is rank deficient");
  WlsFit fit;
  fit.coef = qr.solve(yw);
  const Eigen::MatrixXd xtwx = xw.transpose() * xw;
  const Eigen::MatrixXd bread = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index i = rows[static_cast<std::size_t>(r)];
    const double e = y(i) - x.row(i).dot(fit.coef);
    const double s = wv(r) * e;
    meat.noalias() += (s * s) * x.row(i).transpose() * x.row(i);
  }
  fit.cov = bread * meat * bread;
  return fit;
}

}  // namespace detail

/// Weighted treated mean minus weighted control mean. The standard error
/// treats the weights as fixed (design-naive).
inline EffectEstimate diff_in_means(const StudyFrame& frame, const std::vector<double>& weights,
                                    Estimand estimand = Estimand::ATT) {
  const Eigen::VectorXd& y = detail::require_outcome(frame);
  double sw[2] = {0, 0}, swy[2] = {0, 0};
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    const int a = frame.treatment[i];
    sw[a] += weights[i];
    swy[a] += weights[i] * y(static_cast<Eigen::Index>(i));
  }
  if (sw[0] <= 0.0 || sw[1] <= 0.0) fail(ErrorCode::EmptyArm, "an arm has no positive weight");
  const double mean[2] = {swy[0] / sw[0], swy[1] / sw[1]};
  double var[2] = {0, 0};
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    const int a = frame.treatment[i];
    const double r = weights[i] * (y(static_cast<Eigen::Index>(i)) - mean[a]);
    var[a] += r * r;
  }
  EffectEstimate out;
  out.tau_hat = mean[1] - mean[0];
  out.estimand = estimand;
  out.n_effective = detail::kish_n(weights);
  out.set_se(std::sqrt(var[1] / (sw[1] * sw[1]) + var[0] / (sw[0] * sw[0])));
  out.method = {{"estimator", "diff_in_means"}};
  return out;
}

/// Weighted regression of Y on (1, T, covariates); the effect is the
/// coefficient on T. Robust sandwich standard error, design-naive.
inline EffectEstimate adjusted_effect(const StudyFrame& frame, const std::vector<double>& weights,
                                      const std::vector<std::string>& covariates, Estimand estimand = Estimand::ATT) {
  const Eigen::VectorXd& y = detail::require_outcome(frame);
  bool arms[2] = {false, false};
  for (std::size_t i = 0; i < frame.n_units(); ++i)
    if (weights[i] > 0.0) arms[frame.treatment[i]] = true;
  if (!arms[0] || !arms[1]) fail(ErrorCode::EmptyArm, "an arm has no positive weight");
  const auto n = static_cast<Eigen::Index>(frame.n_units());
  Eigen::MatrixXd x(n, 2 + static_cast<Eigen::Index>(covariates.size()));
  x.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) x(i, 1) = frame.treatment[static_cast<std::size_t>(i)];
  if (!covariates.empty()) x.rightCols(static_cast<Eigen::Index>(covariates.size())) = frame.design(covariates);
  const auto fit = detail::wls(x, y, weights);
  EffectEstimate out;
  out.tau_hat = fit.coef(1);
  out.estimand = estimand;
  out.n_effective = detail::kish_n(weights);
  out.set_se(std::sqrt(std::max(0.0, fit.cov(1, 1))));
  out.method = {{"estimator", "adjusted_effect"}, {"covariates", covariates}};
  return out;
}

enum class SubclassMode { separate, joint };

/// Subclass effects aggregated with weights N_j/N (ATE) or N_tj/N_t (ATT).
/// `separate` fits one regression per subclass; `joint` fits subclass and
/// subclass-by-treatment indicators with covariate slopes shared across
/// subclasses.
inline EffectEstimate subclass_effect(const StudyFrame& frame, const Subclassification& sub, Estimand estimand,
                                      const std::vector<std::string>& covariates,
                                      SubclassMode mode = SubclassMode::separate) {
  const Eigen::VectorXd& y = detail::require_outcome(frame);
  const std::size_t J = sub.n_subclasses;
  std::vector<double> n_all(J, 0.0), n_t(J, 0.0), n_c(J, 0.0);
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    const int s = sub.subclass_of[i];
    if (s < 0) continue;
    n_all[static_cast<std::size_t>(s)] += 1;
    (frame.treated(i) ? n_t : n_c)[static_cast<std::size_t>(s)] += 1;
  }
  double total = 0.0, total_t = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    total += n_all[j];
    total_t += n_t[j];
  }
  if (total_t == 0.0) fail(ErrorCode::EmptyArm, "no treated units in any subclass");
  Eigen::VectorXd agg(static_cast<Eigen::Index>(J));
  for (std::size_t j = 0; j < J; ++j)
    agg(static_cast<Eigen::Index>(j)) = estimand == Estimand::ATE ? n_all[j] / total : n_t[j] / total_t;
  // A subclass with zero aggregation weight (no treated units under the ATT)
  // contributes nothing and is left out; any other subclass needs both arms.
  std::vector<bool> active(J);
  for (std::size_t j = 0; j < J; ++j) {
    active[j] = agg(static_cast<Eigen::Index>(j)) > 0.0;
    if (active[j] && (n_t[j] == 0 || n_c[j] == 0))
      fail(ErrorCode::EmptySubclassArm, "subclass " + std::to_string(j + 1) + " lacks a treatment arm");
  }

  EffectEstimate out;
  out.estimand = estimand;
  std::vector<double> effects(J, std::numeric_limits<double>::quiet_NaN());
  if (mode == SubclassMode::separate) {
    double var = 0.0;
    out.tau_hat = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      if (!active[j]) continue;
      std::vector<double> w(frame.n_units(), 0.0);
      for (std::size_t i = 0; i < frame.n_units(); ++i)
        if (sub.subclass_of[i] == static_cast<int>(j)) w[i] = 1.0;
      const auto e = adjusted_effect(frame, w, covariates, estimand);
      effects[j] = e.tau_hat;
      out.tau_hat += agg(static_cast<Eigen::Index>(j)) * e.tau_hat;
      var += agg(static_cast<Eigen::Index>(j)) * agg(static_cast<Eigen::Index>(j)) * e.se * e.se;
    }
    out.set_se(std::sqrt(var));
  } else {
    // Column position of each active subclass.
    std::vector<Eigen::Index> slot(J, -1);
    Eigen::Index m = 0;
    for (std::size_t j = 0; j < J; ++j)
      if (active[j]) slot[j] = m++;
    const auto n = static_cast<Eigen::Index>(frame.n_units());
    const auto p = 2 * m + static_cast<Eigen::Index>(covariates.size());
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, p);
    std::vector<double> w(frame.n_units(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int s = sub.subclass_of[static_cast<std::size_t>(i)];
      if (s < 0 || !active[static_cast<std::size_t>(s)]) continue;
      const Eigen::Index k = slot[static_cast<std::size_t>(s)];
      w[static_cast<std::size_t>(i)] = 1.0;
      x(i, k) = 1.0;
      x(i, m + k) = frame.treatment[static_cast<std::size_t>(i)];
    }
    if (!covariates.empty()) x.rightCols(static_cast<Eigen::Index>(covariates.size())) = frame.design(covariates);
    const auto fit = detail::wls(x, y, w);
    Eigen::VectorXd a(m);
    for (std::size_t j = 0; j < J; ++j)
      if (active[j]) {
        a(slot[j]) = agg(static_cast<Eigen::Index>(j));
        effects[j] = fit.coef(m + slot[j]);
      }
    out.tau_hat = a.dot(fit.coef.segment(m, m));
    const Eigen::MatrixXd v = fit.cov.block(m, m, m, m);
    out.set_se(std::sqrt(std::max(0.0, a.dot(v * a))));
  }
  out.n_effective = total;
  std::vector<double> agg_v(agg.data(), agg.data() + agg.size());
  out.method = {{"estimator", "subclass_effect"},
                {"mode", mode == SubclassMode::separate ? "separate" : "joint"},
                {"aggregation", estimand == Estimand::ATE ? "N_j/N" : "N_tj/N_t"},
                {"aggregation_weights", agg_v},
                {"subclass_effects", effects},
                {"covariates", covariates}};
  return out;
}

using EffectPipeline = std::function<EffectEstimate(const StudyFrame&)>;

/// Nonparametric bootstrap of a whole design-plus-estimation pipeline.
/// Replicate b draws from its own stream seeded by (seed, b), so the result
/// does not depend on thread scheduling. Failed replicates are excluded and
/// counted; more than 20% failures is an error.
inline EffectEstimate bootstrap_se(const EffectPipeline& pipeline, const StudyFrame& frame, std::size_t B,
                                   std::uint64_t seed, unsigned threads = 0) {
  if (B < 2) fail(ErrorCode::InvalidArgument, "bootstrap needs at least 2 replicates");
  EffectEstimate base = pipeline(frame);
  const std::size_t n = frame.n_units();
  std::vector<double> tau(B, 0.0);
  std::vector<char> ok(B, 0);

  auto run_one = [&](std::size_t b) {
    std::mt19937_64 gen(detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(b) + 1)));
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = static_cast<std::size_t>(gen() % n);
    try {
      tau[b] = pipeline(frame.select(rows)).tau_hat;
      ok[b] = std::isfinite(tau[b]) ? 1 : 0;
    } catch (const Error&) {
      ok[b] = 0;
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, B));
  if (threads <= 1) {
    for (std::size_t b = 0; b < B; ++b) run_one(b);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t b = t; b < B; b += threads) run_one(b);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<double> good;
  for (std::size_t b = 0; b < B; ++b)
    if (ok[b]) good.push_back(tau[b]);
  const std::size_t failures = B - good.size();
  if (static_cast<double>(failures) > 0.2 * static_cast<double>(B))
    fail(ErrorCode::TooManyFailures,
         std::to_string(failures) + " of " + std::to_string(B) + " bootstrap replicates failed");
  double mean = 0.0;
  for (double v : good) mean += v;
  mean /= static_cast<double>(good.size());
  double ss = 0.0;
  for (double v : good) ss += (v - mean) * (v - mean);
  const double sd = good.size() > 1 ? std::sqrt(ss / static_cast<double>(good.size() - 1)) : 0.0;

  EffectEstimate out = base;
  out.se_kind = "bootstrap";
  out.set_se(sd);
  out.method["design_naive_se"] = base.se;
  out.method["bootstrap"] = {{"B", B}, {"seed", seed}, {"failures", failures}};
  return out;
}

}  // namespace obsdesign
