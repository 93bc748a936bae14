#pragma once

// Shared fixtures and brute-force oracles for the test suites. Nothing here
// calls the matching or flow code it is used to check.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "obsdesign/obsdesign.hpp"

namespace testing_support {

using obsdesign::DistanceMatrix;
using obsdesign::StudyFrame;

/// Frame from named columns, treatment and optional outcome.
inline StudyFrame frame_of(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols,
                           std::vector<int> t, std::optional<std::vector<double>> y = std::nullopt) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, static_cast<Eigen::Index>(j)) = cols[j][static_cast<std::size_t>(i)];
  std::optional<Eigen::VectorXd> yv;
  if (y) yv = Eigen::Map<const Eigen::VectorXd>(y->data(), static_cast<Eigen::Index>(y->size()));
  return obsdesign::make_frame(names, x, std::move(t), yv);
}

/// Treated-by-control matrix where treated units are 0..nt-1 and controls
/// nt..nt+nc-1 in the frame numbering.
inline DistanceMatrix matrix_of(const Eigen::MatrixXd& d) {
  DistanceMatrix m;
  m.n_units = static_cast<std::size_t>(d.rows() + d.cols());
  for (Eigen::Index r = 0; r < d.rows(); ++r) m.rows.push_back(static_cast<std::size_t>(r));
  for (Eigen::Index c = 0; c < d.cols(); ++c) m.cols.push_back(static_cast<std::size_t>(d.rows() + c));
  m.d = d;
  return m;
}

inline Eigen::MatrixXd random_matrix(std::size_t nt, std::size_t nc, std::mt19937_64& gen, int max_int = 0) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nc));
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> ui(0, std::max(max_int, 1));
  for (Eigen::Index r = 0; r < d.rows(); ++r)
    for (Eigen::Index c = 0; c < d.cols(); ++c) d(r, c) = max_int > 0 ? ui(gen) : u(gen);
  return d;
}

/// Minimum total of a 1:1 assignment of every row to a distinct column, by
/// enumerating injections. Suitable for nt <= 7.
inline double brute_optimal_pair(const Eigen::MatrixXd& d) {
  const auto nt = static_cast<std::size_t>(d.rows());
  const auto nc = static_cast<std::size_t>(d.cols());
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> used(nc, false);
  std::function<void(std::size_t, double)> go = [&](std::size_t r, double acc) {
    if (acc >= best) return;
    if (r == nt) {
      best = acc;
      return;
    }
    for (std::size_t c = 0; c < nc; ++c) {
      if (used[c]) continue;
      used[c] = true;
      go(r + 1, acc + d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      used[c] = false;
    }
  };
  go(0, 0.0);
  return best;
}

/// Minimum over every partition of the units into blocks holding at least one
/// treated and one control, of the summed treated-control distances within
/// blocks. Optional bounds on controls/treated per block. Restricted growth
/// strings enumerate each partition once.
inline double brute_full_match(const Eigen::MatrixXd& d, double min_ratio = 0.0,
                               double max_ratio = std::numeric_limits<double>::infinity()) {
  const auto nt = static_cast<std::size_t>(d.rows());
  const auto n = nt + static_cast<std::size_t>(d.cols());
  std::vector<std::size_t> block(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t n_blocks) {
    if (i == n) {
      std::vector<std::size_t> ct(n_blocks, 0), cc(n_blocks, 0);
      for (std::size_t u = 0; u < n; ++u) (u < nt ? ct : cc)[block[u]]++;
      for (std::size_t b = 0; b < n_blocks; ++b) {
        if (ct[b] == 0 || cc[b] == 0) return;
        const double ratio = static_cast<double>(cc[b]) / static_cast<double>(ct[b]);
        if (ratio < min_ratio - 1e-12 || ratio > max_ratio + 1e-12) return;
      }
      double total = 0.0;
      for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t c = nt; c < n; ++c)
          if (block[t] == block[c]) total += d(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c - nt));
      best = std::min(best, total);
      return;
    }
    for (std::size_t b = 0; b <= n_blocks; ++b) {
      block[i] = b;
      go(i + 1, std::max(n_blocks, b + 1));
    }
  };
  go(0, 0);
  return best;
}

/// Draws a frame with `p` standard-normal covariates whose treated means are
/// shifted by `shift`.
inline StudyFrame shifted_normal_frame(std::size_t nt, std::size_t nc, std::size_t p, double shift,
                                       std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < p; ++k) names.push_back("x" + std::to_string(k + 1));
  std::vector<std::vector<double>> cols(p);
  std::vector<int> t;
  for (std::size_t i = 0; i < nt + nc; ++i) {
    const bool treated = i < nt;
    t.push_back(treated ? 1 : 0);
    for (std::size_t k = 0; k < p; ++k) cols[k].push_back(z(gen) + (treated ? shift : 0.0));
  }
  return frame_of(names, cols, t);
}

}  // namespace testing_support
