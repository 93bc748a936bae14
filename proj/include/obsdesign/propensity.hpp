#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/error.hpp"

namespace obsdesign {

inline double logistic(double eta) {
  return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Fitted propensity model. `coefficients(0)` is the intercept, followed by one
/// coefficient per entry of `column_names`. Models built from known scores
/// (simulation studies) carry no coefficients.
struct PropensityModel {
  std::vector<std::string> column_names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd scores;
  Eigen::VectorXd linear_scores;
  bool converged = false;
  int iterations = 0;
  double deviance = 0.0;

  static PropensityModel from_scores(const Eigen::VectorXd& scores) {
    PropensityModel m;
    m.scores = scores;
    m.linear_scores = scores.unaryExpr([](double e) { return logit(e); });
    m.converged = true;
    return m;
  }
};

struct LogisticOptions {
  int max_iter = 50;
  double tol = 1e-8;
  // |linear score| beyond this while the deviance is still falling means the
  // arms are (quasi-)separated.
  double separation_eta = 30.0;
};

namespace detail {

inline double bernoulli_deviance(const Eigen::VectorXd& eta, const std::vector<int>& t) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(-|eta|)) form keeps the tails finite
    const double e = eta(i);
    const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    dev += 2.0 * (log1pexp - (t[static_cast<std::size_t>(i)] == 1 ? e : 0.0));
  }
  return dev;
}

}  // namespace detail

/// Maximum-likelihood logistic regression of treatment on `columns` (plus an
/// intercept) by iteratively reweighted least squares.
inline PropensityModel fit_logistic(const StudyFrame& frame, const std::vector<std::string>& columns,
                                    const LogisticOptions& opt = {}) {
  const auto n = static_cast<Eigen::Index>(frame.n_units());
  const auto p = static_cast<Eigen::Index>(columns.size()) + 1;
  if (n <= p)
    fail(ErrorCode::InvalidArgument, "need more units than model terms (" + std::to_string(n) +
                                         " units, " + std::to_string(p) + " terms)");
  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  if (p > 1) x.rightCols(p - 1) = frame.design(columns);

  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = frame.treatment[static_cast<std::size_t>(i)];

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta(0) = logit(t.mean());
  Eigen::VectorXd eta = x * beta;
  double dev = detail::bernoulli_deviance(eta, frame.treatment);

  PropensityModel model;
  model.column_names = columns;
  bool converged = false;
  int iter = 0;
  while (iter < opt.max_iter) {
    ++iter;
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return logistic(e); });
    Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    w = w.cwiseMax(1e-300);
    Eigen::VectorXd z = eta.array() + (t - mu).array() / w.array();
    Eigen::VectorXd sw = w.cwiseSqrt();
    Eigen::MatrixXd xw = sw.asDiagonal() * x;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    qr.setThreshold(1e-12);
    if (qr.rank() < p) fail(ErrorCode::SingularDesign, "weighted design matrix is rank deficient");
    Eigen::VectorXd next = qr.solve(sw.cwiseProduct(z));
    if (!next.allFinite()) fail(ErrorCode::Separation, "coefficients diverged");

    const double change = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    eta = x * beta;
    const double next_dev = detail::bernoulli_deviance(eta, frame.treatment);
    if (change < opt.tol) {
      dev = next_dev;
      converged = true;
      break;
    }
    if (eta.cwiseAbs().maxCoeff() > opt.separation_eta && next_dev < dev)
      fail(ErrorCode::Separation, "linear scores exceed " + std::to_string(opt.separation_eta) +
                                      " while the deviance is still decreasing");
    dev = next_dev;
  }
  if (!converged)
    fail(ErrorCode::NotConverged, "no convergence after " + std::to_string(opt.max_iter) + " iterations");

  model.coefficients = beta;
  model.linear_scores = eta;
  model.scores = eta.unaryExpr([](double e) { return logistic(e); });
  model.converged = true;
  model.iterations = iter;
  model.deviance = dev;
  return model;
}

/// Largest absolute score-equation residual: max over the intercept and every
/// model column of |sum_i (T_i - e_i) x_ik|.
inline double max_score_residual(const StudyFrame& frame, const PropensityModel& model) {
  const auto n = static_cast<Eigen::Index>(frame.n_units());
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = frame.treatment[static_cast<std::size_t>(i)] - model.scores(i);
  double worst = std::abs(r.sum());
  if (!model.column_names.empty()) {
    Eigen::MatrixXd x = frame.design(model.column_names);
    worst = std::max(worst, (x.transpose() * r).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace obsdesign
