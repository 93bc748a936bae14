#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/propensity.hpp"

namespace obsdesign {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class DistanceKind {
  exact,
  coarsened_exact,
  mahalanobis,
  propensity,
  linear_propensity,
  mahalanobis_within_caliper,
};

enum class SigmaSource { control_group, pooled };

inline const char* to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::exact: return "exact";
    case DistanceKind::coarsened_exact: return "coarsened_exact";
    case DistanceKind::mahalanobis: return "mahalanobis";
    case DistanceKind::propensity: return "propensity";
    case DistanceKind::linear_propensity: return "linear_propensity";
    case DistanceKind::mahalanobis_within_caliper: return "mahalanobis_within_caliper";
  }
  return "linear_propensity";
}

inline std::optional<DistanceKind> distance_kind_from_string(const std::string& s) {
  for (auto k : {DistanceKind::exact, DistanceKind::coarsened_exact, DistanceKind::mahalanobis,
                 DistanceKind::propensity, DistanceKind::linear_propensity,
                 DistanceKind::mahalanobis_within_caliper})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

inline const char* to_string(SigmaSource s) {
  return s == SigmaSource::control_group ? "control_group" : "pooled";
}

/// Declarative distance definition. `caliper_sd` is in standard deviations of
/// the linear propensity score and is converted to logit units at build time.
struct DistanceSpec {
  DistanceKind kind = DistanceKind::linear_propensity;
  SigmaSource sigma_source = SigmaSource::control_group;
  std::optional<double> caliper_sd;
  // Covariates the distance is computed on; empty means every model column
  // (or every covariate when there is no model).
  std::vector<std::string> key_columns;
  std::map<std::string, std::vector<double>> coarsen_bins;

  bool needs_scores() const {
    return kind == DistanceKind::propensity || kind == DistanceKind::linear_propensity ||
           kind == DistanceKind::mahalanobis_within_caliper;
  }
};

/// Dense treated x control distance matrix. `rows`/`cols` hold frame indices;
/// units in neither list were excluded before the matrix was built.
struct DistanceMatrix {
  std::size_t n_units = 0;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  Eigen::MatrixXd d;
};

inline double exact_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::LengthMismatch, "vectors differ in length");
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] != b[k]) return kInf;
  return 0.0;
}

// Bin index of v given ascending cut points; values equal to an edge fall in
// the bin above it.
inline std::size_t coarsen(double v, const std::vector<double>& edges) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

inline double coarsened_exact_distance(std::span<const double> a, std::span<const double> b,
                                       const std::vector<std::vector<double>>& edges) {
  if (a.size() != b.size() || edges.size() != a.size())
    fail(ErrorCode::LengthMismatch, "vectors and bin definitions differ in length");
  for (std::size_t k = 0; k < a.size(); ++k) {
    const bool same = edges[k].empty() ? a[k] == b[k] : coarsen(a[k], edges[k]) == coarsen(b[k], edges[k]);
    if (!same) return kInf;
  }
  return 0.0;
}

/// Factored covariance used for repeated quadratic forms.
class MahalanobisMetric {
 public:
  explicit MahalanobisMetric(const Eigen::MatrixXd& sigma) {
    if (sigma.rows() != sigma.cols()) fail(ErrorCode::LengthMismatch, "sigma must be square");
    if (!sigma.isApprox(sigma.transpose(), 1e-10))
      fail(ErrorCode::SingularSigma, "sigma is not symmetric");
    ldlt_.compute(sigma);
    const Eigen::VectorXd diag = ldlt_.vectorD();
    const double scale = std::max(1.0, diag.cwiseAbs().maxCoeff());
    if (ldlt_.info() != Eigen::Success || diag.minCoeff() <= 1e-12 * scale)
      fail(ErrorCode::SingularSigma, "sigma is singular or not positive definite");
    // L^{-1} P so that the form becomes a squared Euclidean norm.
    const auto dim = sigma.rows();
    Eigen::MatrixXd l = ldlt_.matrixL();
    Eigen::MatrixXd pmat = ldlt_.transpositionsP() * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd linv = l.triangularView<Eigen::Lower>().solve(pmat);
    whiten_ = diag.cwiseSqrt().cwiseInverse().asDiagonal() * linv;
  }

  Eigen::Index dim() const { return whiten_.rows(); }

  // Rows of `x` mapped so that ||w_i - w_j||^2 is the quadratic form.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& x) const { return x * whiten_.transpose(); }

  double operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    if (a.size() != dim() || b.size() != dim()) fail(ErrorCode::LengthMismatch, "dimension mismatch");
    return (whiten_ * (a - b)).squaredNorm();
  }

 private:
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  Eigen::MatrixXd whiten_;
};

/// (x_i - x_j)' Sigma^{-1} (x_i - x_j). This is the squared form, with no
/// square root taken.
inline double mahalanobis_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                   const Eigen::MatrixXd& sigma) {
  return MahalanobisMetric(sigma)(a, b);
}

inline double propensity_distance(double e_i, double e_j, bool linear) {
  auto check = [](double e) {
    if (!(e > 0.0 && e < 1.0)) fail(ErrorCode::ScoreOutOfRange, "score " + std::to_string(e) + " outside (0,1)");
  };
  check(e_i);
  check(e_j);
  return linear ? std::abs(logit(e_i) - logit(e_j)) : std::abs(e_i - e_j);
}

/// Mahalanobis distance on the key covariates when the linear scores are
/// within `caliper` (inclusive), infinity otherwise.
inline double mahalanobis_within_caliper(const Eigen::VectorXd& z_i, const Eigen::VectorXd& z_j,
                                         const Eigen::MatrixXd& sigma_z, double logit_i, double logit_j,
                                         double caliper) {
  if (!(caliper > 0.0)) fail(ErrorCode::InvalidArgument, "caliper must be positive");
  if (std::abs(logit_i - logit_j) > caliper) return kInf;
  return mahalanobis_distance(z_i, z_j, sigma_z);
}

inline double sample_sd(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

/// Unbiased covariance of the given rows of x.
inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m < 2) fail(ErrorCode::DegenerateVariance, "need at least two units to estimate a covariance");
  Eigen::MatrixXd sub(m, x.cols());
  for (Eigen::Index r = 0; r < m; ++r) sub.row(r) = x.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]));
  Eigen::RowVectorXd mean = sub.colwise().mean();
  Eigen::MatrixXd centered = sub.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(m - 1);
}

/// Caliper in logit units: `caliper_sd` times the SD of the linear scores of
/// the given units (all units when `units` is empty).
inline double caliper_width(const PropensityModel& model, double caliper_sd,
                            const std::vector<std::size_t>& units = {}) {
  Eigen::VectorXd v;
  if (units.empty()) {
    v = model.linear_scores;
  } else {
    v.resize(static_cast<Eigen::Index>(units.size()));
    for (std::size_t k = 0; k < units.size(); ++k)
      v(static_cast<Eigen::Index>(k)) = model.linear_scores(static_cast<Eigen::Index>(units[k]));
  }
  return caliper_sd * sample_sd(v);
}

/// Materializes the treated x control matrix for `spec`. `keep`, when given,
/// restricts the matrix to retained units.
inline DistanceMatrix build_matrix(const StudyFrame& frame, const DistanceSpec& spec,
                                   const PropensityModel* model = nullptr,
                                   const std::vector<bool>* keep = nullptr) {
  DistanceMatrix out;
  out.n_units = frame.n_units();
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (keep && !(*keep)[i]) continue;
    (frame.treated(i) ? out.rows : out.cols).push_back(i);
  }
  const auto nt = static_cast<Eigen::Index>(out.rows.size());
  const auto nc = static_cast<Eigen::Index>(out.cols.size());
  out.d.resize(nt, nc);

  if (spec.needs_scores() && model == nullptr)
    fail(ErrorCode::InvalidArgument, std::string(to_string(spec.kind)) + " distance needs a propensity model");
  if (spec.kind == DistanceKind::mahalanobis_within_caliper && !spec.caliper_sd)
    fail(ErrorCode::InvalidArgument, "mahalanobis_within_caliper needs caliper_sd");

  std::vector<std::string> keys = spec.key_columns;
  if (keys.empty()) keys = (model && !model->column_names.empty()) ? model->column_names : frame.covariates.names();

  switch (spec.kind) {
    case DistanceKind::propensity:
    case DistanceKind::linear_propensity: {
      const bool linear = spec.kind == DistanceKind::linear_propensity;
      const Eigen::VectorXd& s = linear ? model->linear_scores : model->scores;
      for (Eigen::Index r = 0; r < nt; ++r)
        for (Eigen::Index c = 0; c < nc; ++c)
          out.d(r, c) = std::abs(s(static_cast<Eigen::Index>(out.rows[static_cast<std::size_t>(r)])) -
                                 s(static_cast<Eigen::Index>(out.cols[static_cast<std::size_t>(c)])));
      break;
    }
    case DistanceKind::exact:
    case DistanceKind::coarsened_exact: {
      const Eigen::MatrixXd x = frame.design(keys);
      std::vector<std::vector<double>> edges(keys.size());
      if (spec.kind == DistanceKind::coarsened_exact)
        for (std::size_t k = 0; k < keys.size(); ++k) {
          auto it = spec.coarsen_bins.find(keys[k]);
          if (it != spec.coarsen_bins.end()) {
            edges[k] = it->second;
            std::sort(edges[k].begin(), edges[k].end());
          }
        }
      std::vector<double> a(keys.size()), b(keys.size());
      for (Eigen::Index r = 0; r < nt; ++r) {
        for (std::size_t k = 0; k < keys.size(); ++k)
          a[k] = x(static_cast<Eigen::Index>(out.rows[static_cast<std::size_t>(r)]), static_cast<Eigen::Index>(k));
        for (Eigen::Index c = 0; c < nc; ++c) {
          for (std::size_t k = 0; k < keys.size(); ++k)
            b[k] = x(static_cast<Eigen::Index>(out.cols[static_cast<std::size_t>(c)]), static_cast<Eigen::Index>(k));
          out.d(r, c) = coarsened_exact_distance(a, b, edges);
        }
      }
      break;
    }
    case DistanceKind::mahalanobis:
    case DistanceKind::mahalanobis_within_caliper: {
      const Eigen::MatrixXd x = frame.design(keys);
      std::vector<std::size_t> source;
      for (std::size_t i = 0; i < frame.n_units(); ++i) {
        if (keep && !(*keep)[i]) continue;
        if (spec.sigma_source == SigmaSource::pooled || !frame.treated(i)) source.push_back(i);
      }
      const Eigen::MatrixXd sigma = covariance(x, source);
      for (Eigen::Index k = 0; k < sigma.rows(); ++k)
        if (!(sigma(k, k) > 0.0))
          fail(ErrorCode::DegenerateVariance,
               "covariate '" + keys[static_cast<std::size_t>(k)] + "' is constant in the sigma source group");
      const MahalanobisMetric metric(sigma);
      const Eigen::MatrixXd w = metric.whiten(x);
      double caliper = kInf;
      if (spec.kind == DistanceKind::mahalanobis_within_caliper) {
        std::vector<std::size_t> retained = out.rows;
        retained.insert(retained.end(), out.cols.begin(), out.cols.end());
        std::sort(retained.begin(), retained.end());
        caliper = caliper_width(*model, *spec.caliper_sd, retained);
      }
      for (Eigen::Index r = 0; r < nt; ++r) {
        const auto ti = static_cast<Eigen::Index>(out.rows[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < nc; ++c) {
          const auto ci = static_cast<Eigen::Index>(out.cols[static_cast<std::size_t>(c)]);
          if (spec.kind == DistanceKind::mahalanobis_within_caliper &&
              std::abs(model->linear_scores(ti) - model->linear_scores(ci)) > caliper) {
            out.d(r, c) = kInf;
            continue;
          }
          out.d(r, c) = (w.row(ti) - w.row(ci)).squaredNorm();
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace obsdesign
