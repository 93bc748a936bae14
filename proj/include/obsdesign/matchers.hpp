#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/distance.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/network.hpp"
#include "obsdesign/propensity.hpp"

namespace obsdesign {

enum class Estimand { ATT, ATE };

inline const char* to_string(Estimand e) { return e == Estimand::ATT ? "ATT" : "ATE"; }

inline std::optional<Estimand> estimand_from_string(const std::string& s) {
  if (s == "ATT") return Estimand::ATT;
  if (s == "ATE") return Estimand::ATE;
  return std::nullopt;
}

enum class DiscardReason { none, no_match_in_caliper, common_support, unmatched_control };

inline const char* to_string(DiscardReason r) {
  switch (r) {
    case DiscardReason::none: return "none";
    case DiscardReason::no_match_in_caliper: return "no_match_in_caliper";
    case DiscardReason::common_support: return "common_support";
    case DiscardReason::unmatched_control: return "unmatched_control";
  }
  return "none";
}

enum class MatchKind { pair, subclass, full, weighting };

inline const char* to_string(MatchKind k) {
  switch (k) {
    case MatchKind::pair: return "pair";
    case MatchKind::subclass: return "subclass";
    case MatchKind::full: return "full";
    case MatchKind::weighting: return "weighting";
  }
  return "pair";
}

struct MatchedSet {
  std::vector<std::size_t> treated;
  std::vector<std::size_t> controls;
};

/// Output of every design method. Unit-indexed vectors have one entry per
/// frame row; discarded units carry weight 0.
struct MatchResult {
  Estimand estimand = Estimand::ATT;
  MatchKind kind = MatchKind::pair;
  bool with_replacement = false;
  std::vector<double> unit_weight;
  std::vector<MatchedSet> sets;
  std::vector<DiscardReason> discarded;
  // Number of sets each unit belongs to (exceeds 1 only for controls reused
  // under matching with replacement).
  std::vector<int> multiplicity;
  double total_distance = 0.0;
  nlohmann::json method = nlohmann::json::object();

  bool is_discarded(std::size_t i) const { return discarded[i] != DiscardReason::none; }
};

struct Subclassification {
  std::size_t n_subclasses = 0;
  std::vector<double> boundaries;  // interior cut points, strictly increasing
  std::vector<int> subclass_of;    // -1 for units outside the retained sample
  Estimand estimand = Estimand::ATT;
};

namespace detail {

inline std::vector<DiscardReason> absent_units(const DistanceMatrix& d) {
  std::vector<DiscardReason> r(d.n_units, DiscardReason::common_support);
  for (auto i : d.rows) r[i] = DiscardReason::none;
  for (auto j : d.cols) r[j] = DiscardReason::none;
  return r;
}

// Treated weight 1; each control receives 1/(number of controls) from every
// set it belongs to, so reuse under replacement accumulates a frequency weight.
inline void assign_pair_weights(MatchResult& r) {
  std::fill(r.unit_weight.begin(), r.unit_weight.end(), 0.0);
  for (const auto& s : r.sets) {
    if (s.controls.empty() || s.treated.empty()) continue;
    for (auto t : s.treated) r.unit_weight[t] = 1.0;
    const double share = 1.0 / static_cast<double>(s.controls.size());
    for (auto c : s.controls) r.unit_weight[c] += share;
  }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Fisher-Yates with an explicit engine so the permutation is identical
// across standard-library implementations.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(gen() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace detail

enum class MatchOrder { descending_propensity, index, random };

struct GreedyOptions {
  std::size_t k = 1;
  bool with_replacement = false;
  std::optional<double> caliper;  // same units as the distance matrix
  MatchOrder order = MatchOrder::descending_propensity;
  std::uint64_t seed = 0;
};

/// Greedy k:1 nearest-neighbor matching. Each treated unit, in the requested
/// order, takes its k closest admissible controls; ties go to the lowest
/// control index. `scores` is required for descending-propensity order.
inline MatchResult greedy_nn(const DistanceMatrix& d, const GreedyOptions& opt,
                             const Eigen::VectorXd* scores = nullptr) {
  if (opt.k < 1) fail(ErrorCode::InvalidK, "k must be at least 1");
  if (d.cols.empty()) fail(ErrorCode::NoControls, "no control units to match");
  const std::size_t nt = d.rows.size();
  const std::size_t nc = d.cols.size();

  std::vector<std::size_t> order(nt);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (opt.order) {
    case MatchOrder::index: break;
    case MatchOrder::descending_propensity:
      if (scores == nullptr) fail(ErrorCode::InvalidArgument, "descending-propensity order needs scores");
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return (*scores)(static_cast<Eigen::Index>(d.rows[a])) > (*scores)(static_cast<Eigen::Index>(d.rows[b]));
      });
      break;
    case MatchOrder::random: {
      std::mt19937_64 gen(opt.seed);
      detail::shuffle(order, gen);
      break;
    }
  }

  MatchResult r;
  r.estimand = Estimand::ATT;
  r.kind = MatchKind::pair;
  r.with_replacement = opt.with_replacement;
  r.unit_weight.assign(d.n_units, 0.0);
  r.multiplicity.assign(d.n_units, 0);
  r.discarded = detail::absent_units(d);

  std::vector<char> available(nc, 1);
  std::vector<std::size_t> candidates;
  std::size_t partial = 0;
  std::size_t unmatched_treated = 0;
  for (std::size_t row : order) {
    candidates.clear();
    for (std::size_t c = 0; c < nc; ++c) {
      if (!available[c]) continue;
      const double v = d.d(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c));
      if (!std::isfinite(v)) continue;
      if (opt.caliper && v > *opt.caliper) continue;
      candidates.push_back(c);
    }
    const std::size_t take = std::min(opt.k, candidates.size());
    auto closer = [&](std::size_t a, std::size_t b) {
      const double da = d.d(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(a));
      const double db = d.d(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(b));
      return da < db || (da == db && a < b);
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      closer);
    const std::size_t unit = d.rows[row];
    if (take == 0) {
      r.discarded[unit] = DiscardReason::no_match_in_caliper;
      ++unmatched_treated;
      continue;
    }
    if (take < opt.k) ++partial;
    MatchedSet set;
    set.treated.push_back(unit);
    for (std::size_t q = 0; q < take; ++q) {
      const std::size_t c = candidates[q];
      set.controls.push_back(d.cols[c]);
      r.total_distance += d.d(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c));
      ++r.multiplicity[d.cols[c]];
      if (!opt.with_replacement) available[c] = 0;
    }
    r.multiplicity[unit] = 1;
    r.sets.push_back(std::move(set));
  }
  for (auto c : d.cols)
    if (r.multiplicity[c] == 0) r.discarded[c] = DiscardReason::unmatched_control;

  detail::assign_pair_weights(r);
  const char* order_name = opt.order == MatchOrder::index ? "index"
                           : opt.order == MatchOrder::random ? "random"
                                                             : "descending_propensity";
  r.method = {{"matcher", "greedy_nn"},
              {"k", opt.k},
              {"with_replacement", opt.with_replacement},
              {"order", order_name},
              {"partially_matched_treated", partial},
              {"unmatched_treated", unmatched_treated}};
  if (opt.caliper) r.method["caliper"] = *opt.caliper;
  if (opt.order == MatchOrder::random) r.method["seed"] = opt.seed;
  return r;
}

/// k:1 matching without replacement minimizing the total matched distance,
/// solved as an assignment problem with every treated row replicated k times.
inline MatchResult optimal_pair(const DistanceMatrix& d, std::size_t k = 1) {
  if (k < 1) fail(ErrorCode::InvalidK, "k must be at least 1");
  if (d.cols.empty()) fail(ErrorCode::NoControls, "no control units to match");
  const std::size_t nt = d.rows.size();
  const std::size_t nc = d.cols.size();
  if (nc < k * nt)
    fail(ErrorCode::Infeasible, std::to_string(nc) + " controls cannot supply " + std::to_string(k) + " matches to " +
                                    std::to_string(nt) + " treated units");
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(nt * k), static_cast<Eigen::Index>(nc));
  for (std::size_t r = 0; r < nt; ++r)
    for (std::size_t s = 0; s < k; ++s) cost.row(static_cast<Eigen::Index>(r * k + s)) = d.d.row(static_cast<Eigen::Index>(r));
  auto assignment = network::solve_assignment(cost);
  if (!assignment) fail(ErrorCode::Infeasible, "no finite-cost assignment exists");

  MatchResult r;
  r.estimand = Estimand::ATT;
  r.kind = MatchKind::pair;
  r.unit_weight.assign(d.n_units, 0.0);
  r.multiplicity.assign(d.n_units, 0);
  r.discarded = detail::absent_units(d);
  for (std::size_t t = 0; t < nt; ++t) {
    MatchedSet set;
    set.treated.push_back(d.rows[t]);
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t c = (*assignment)[t * k + s];
      set.controls.push_back(d.cols[c]);
      r.total_distance += d.d(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
      r.multiplicity[d.cols[c]] = 1;
    }
    std::sort(set.controls.begin(), set.controls.end());
    r.multiplicity[d.rows[t]] = 1;
    r.sets.push_back(std::move(set));
  }
  for (auto c : d.cols)
    if (r.multiplicity[c] == 0) r.discarded[c] = DiscardReason::unmatched_control;
  detail::assign_pair_weights(r);
  r.method = {{"matcher", "optimal_pair"}, {"k", k}, {"with_replacement", false}};
  return r;
}

struct FullMatchOptions {
  // Bounds on the number of controls per treated unit within a set; a set
  // with one control and m treated units has ratio 1/m.
  std::optional<double> min_ratio;
  std::optional<double> max_ratio;
};

/// Optimal full matching: partitions every unit of the matrix into sets with
/// at least one treated and one control, minimizing the summed within-set
/// treated-control distance. Solved as a degree-bounded minimum-cost edge
/// cover (min-cost flow), then reduced to star-shaped sets.
inline MatchResult full_match(const DistanceMatrix& d, const FullMatchOptions& opt = {}) {
  const std::size_t nt = d.rows.size();
  const std::size_t nc = d.cols.size();
  if (nc == 0) fail(ErrorCode::NoControls, "no control units to match");
  if (nt == 0) fail(ErrorCode::Infeasible, "no treated units to match");
  if (opt.min_ratio && !(*opt.min_ratio > 0.0 && *opt.min_ratio <= 1.0))
    fail(ErrorCode::InvalidArgument, "min_ratio must lie in (0, 1]");
  if (opt.max_ratio && !(*opt.max_ratio >= 1.0)) fail(ErrorCode::InvalidArgument, "max_ratio must be at least 1");

  // Max controls per treated and max treated per control.
  const long cap_c = opt.max_ratio ? static_cast<long>(std::floor(*opt.max_ratio + 1e-9)) : static_cast<long>(nc);
  const long cap_t =
      opt.min_ratio ? static_cast<long>(std::floor(1.0 / *opt.min_ratio + 1e-9)) : static_cast<long>(nt);

  // Nodes: treated [0, nt), controls [nt, nt+nc), S, K, super source, super sink.
  const std::size_t S = nt + nc, K = S + 1, SS = S + 2, TT = S + 3;
  network::MinCostFlow g(nt + nc + 4);
  // Lower bound of one unit on S->i and j->K becomes node supplies; the
  // remaining capacity stays on the arcs and K->S closes the circulation.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edge_arcs(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    if (cap_c > 1) g.add_arc(S, t, cap_c - 1, 0.0);
    g.add_arc(SS, t, 1, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      const double v = d.d(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
      if (!std::isfinite(v)) continue;
      edge_arcs[t].push_back({c, g.add_arc(t, nt + c, 1, v)});
    }
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (cap_t > 1) g.add_arc(nt + c, K, cap_t - 1, 0.0);
    g.add_arc(nt + c, TT, 1, 0.0);
  }
  g.add_arc(K, S, static_cast<long>(nt + nc), 0.0);
  g.add_arc(SS, K, static_cast<long>(nc), 0.0);
  g.add_arc(S, TT, static_cast<long>(nt), 0.0);
  const long required = static_cast<long>(nt + nc);
  auto [flow, cost] = g.run(SS, TT, required);
  (void)cost;
  if (flow < required) fail(ErrorCode::Infeasible, "no full matching satisfies the distance and ratio constraints");

  struct Edge {
    std::size_t t, c;
    double w;
  };
  std::vector<Edge> edges;
  std::vector<int> deg_t(nt, 0), deg_c(nc, 0);
  for (std::size_t t = 0; t < nt; ++t)
    for (auto [c, a] : edge_arcs[t])
      if (g.arc(t, a).flow > 0) {
        edges.push_back({t, c, d.d(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c))});
        ++deg_t[t];
        ++deg_c[c];
      }
  // An edge whose endpoints are both covered elsewhere is redundant; dropping
  // it never raises the cost and leaves star-shaped components.
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w > b.w; });
  std::vector<Edge> kept;
  for (const auto& e : edges) {
    if (deg_t[e.t] >= 2 && deg_c[e.c] >= 2) {
      --deg_t[e.t];
      --deg_c[e.c];
      continue;
    }
    kept.push_back(e);
  }

  // Components of the star forest.
  std::vector<std::size_t> parent(nt + nc);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : kept) {
    auto a = find(e.t), b = find(nt + e.c);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::ptrdiff_t> set_of(nt + nc, -1);
  MatchResult r;
  r.estimand = Estimand::ATT;
  r.kind = MatchKind::full;
  r.unit_weight.assign(d.n_units, 0.0);
  r.multiplicity.assign(d.n_units, 0);
  r.discarded = detail::absent_units(d);
  for (std::size_t v = 0; v < nt + nc; ++v) {
    const std::size_t root = find(v);
    if (set_of[root] < 0) {
      set_of[root] = static_cast<std::ptrdiff_t>(r.sets.size());
      r.sets.emplace_back();
    }
    auto& s = r.sets[static_cast<std::size_t>(set_of[root])];
    if (v < nt) {
      s.treated.push_back(d.rows[v]);
      r.multiplicity[d.rows[v]] = 1;
    } else {
      s.controls.push_back(d.cols[v - nt]);
      r.multiplicity[d.cols[v - nt]] = 1;
    }
  }
  for (const auto& e : kept) r.total_distance += e.w;
  // Within-set weights follow the ATT convention; callers wanting ATE weights
  // use set_weights from the weighting module.
  for (const auto& s : r.sets) {
    for (auto t : s.treated) r.unit_weight[t] = 1.0;
    for (auto c : s.controls)
      r.unit_weight[c] = static_cast<double>(s.treated.size()) / static_cast<double>(s.controls.size());
  }
  r.method = {{"matcher", "full_match"}, {"n_sets", r.sets.size()}};
  if (opt.min_ratio) r.method["min_ratio"] = *opt.min_ratio;
  if (opt.max_ratio) r.method["max_ratio"] = *opt.max_ratio;
  return r;
}

/// Summed within-set treated-control distance of any set partition.
inline double within_set_distance(const DistanceMatrix& d, const std::vector<MatchedSet>& sets) {
  std::vector<std::ptrdiff_t> row_of(d.n_units, -1), col_of(d.n_units, -1);
  for (std::size_t r = 0; r < d.rows.size(); ++r) row_of[d.rows[r]] = static_cast<std::ptrdiff_t>(r);
  for (std::size_t c = 0; c < d.cols.size(); ++c) col_of[d.cols[c]] = static_cast<std::ptrdiff_t>(c);
  double total = 0.0;
  for (const auto& s : sets)
    for (auto t : s.treated)
      for (auto c : s.controls) total += d.d(row_of[t], col_of[c]);
  return total;
}

/// Propensity-score subclasses with cut points at the empirical j/n quantiles
/// of the treated scores (ATT) or of all retained scores (ATE). Intervals are
/// lower-inclusive: a score equal to a cut point belongs to the upper class.
inline Subclassification subclassify(const PropensityModel& model, const StudyFrame& frame, std::size_t n_subclasses,
                                     Estimand estimand, const std::vector<bool>* keep = nullptr) {
  if (n_subclasses < 2) fail(ErrorCode::InvalidArgument, "need at least two subclasses");
  std::vector<double> basis;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (keep && !(*keep)[i]) continue;
    if (estimand == Estimand::ATE || frame.treated(i)) basis.push_back(model.scores(static_cast<Eigen::Index>(i)));
  }
  if (basis.size() < n_subclasses)
    fail(ErrorCode::EmptySubclassArm, "fewer units than subclasses in the quantile basis");
  std::sort(basis.begin(), basis.end());

  Subclassification sub;
  sub.estimand = estimand;
  for (std::size_t j = 1; j < n_subclasses; ++j) {
    const std::size_t idx = (j * basis.size()) / n_subclasses;
    const double cut = basis[idx];
    if (sub.boundaries.empty() || cut > sub.boundaries.back()) sub.boundaries.push_back(cut);
  }
  sub.n_subclasses = sub.boundaries.size() + 1;
  sub.subclass_of.assign(frame.n_units(), -1);
  std::vector<std::size_t> n_t(sub.n_subclasses, 0), n_c(sub.n_subclasses, 0);
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (keep && !(*keep)[i]) continue;
    const double e = model.scores(static_cast<Eigen::Index>(i));
    const auto s = static_cast<std::size_t>(std::upper_bound(sub.boundaries.begin(), sub.boundaries.end(), e) -
                                            sub.boundaries.begin());
    sub.subclass_of[i] = static_cast<int>(s);
    (frame.treated(i) ? n_t : n_c)[s]++;
  }
  for (std::size_t s = 0; s < sub.n_subclasses; ++s) {
    if (n_t[s] == 0) fail(ErrorCode::EmptySubclassArm, "subclass " + std::to_string(s + 1) + " has no treated units");
    if (n_c[s] == 0) fail(ErrorCode::EmptySubclassArm, "subclass " + std::to_string(s + 1) + " has no control units");
  }
  return sub;
}

/// Exact matching by stratification: units sharing identical values on
/// `columns` form a set; patterns lacking either arm are discarded.
inline MatchResult exact_strata(const StudyFrame& frame, const std::vector<std::string>& columns,
                                const std::vector<bool>* keep = nullptr) {
  const Eigen::MatrixXd x = frame.design(columns);
  std::map<std::vector<double>, MatchedSet> strata;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (keep && !(*keep)[i]) continue;
    std::vector<double> key(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) key[static_cast<std::size_t>(j)] = x(static_cast<Eigen::Index>(i), j);
    auto& s = strata[key];
    (frame.treated(i) ? s.treated : s.controls).push_back(i);
  }
  MatchResult r;
  r.estimand = Estimand::ATT;
  r.kind = MatchKind::subclass;
  r.unit_weight.assign(frame.n_units(), 0.0);
  r.multiplicity.assign(frame.n_units(), 0);
  r.discarded.assign(frame.n_units(), DiscardReason::common_support);
  std::size_t dropped_t = 0;
  for (auto& [key, s] : strata) {
    if (s.treated.empty() || s.controls.empty()) {
      for (auto t : s.treated) r.discarded[t] = DiscardReason::no_match_in_caliper;
      for (auto c : s.controls) r.discarded[c] = DiscardReason::unmatched_control;
      dropped_t += s.treated.size();
      continue;
    }
    for (auto u : s.treated) {
      r.discarded[u] = DiscardReason::none;
      r.multiplicity[u] = 1;
      r.unit_weight[u] = 1.0;
    }
    for (auto u : s.controls) {
      r.discarded[u] = DiscardReason::none;
      r.multiplicity[u] = 1;
      r.unit_weight[u] = static_cast<double>(s.treated.size()) / static_cast<double>(s.controls.size());
    }
    r.sets.push_back(std::move(s));
  }
  if (r.sets.empty()) fail(ErrorCode::EverythingDiscarded, "no covariate pattern occurs in both arms");
  r.method = {{"matcher", "exact"}, {"n_strata", r.sets.size()}, {"unmatched_treated", dropped_t}};
  return r;
}

/// Range rule for common support. ATT drops controls outside the treated
/// score range; ATE additionally drops treated outside the control range.
inline std::vector<DiscardReason> trim_common_support(const PropensityModel& model, const StudyFrame& frame,
                                                      Estimand estimand) {
  double t_lo = kInf, t_hi = -kInf, c_lo = kInf, c_hi = -kInf;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    const double e = model.scores(static_cast<Eigen::Index>(i));
    if (frame.treated(i)) {
      t_lo = std::min(t_lo, e);
      t_hi = std::max(t_hi, e);
    } else {
      c_lo = std::min(c_lo, e);
      c_hi = std::max(c_hi, e);
    }
  }
  std::vector<DiscardReason> out(frame.n_units(), DiscardReason::none);
  std::size_t kept_t = 0, kept_c = 0;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    const double e = model.scores(static_cast<Eigen::Index>(i));
    if (frame.treated(i)) {
      if (estimand == Estimand::ATE && (e < c_lo || e > c_hi)) out[i] = DiscardReason::common_support;
      else ++kept_t;
    } else {
      if (e < t_lo || e > t_hi) out[i] = DiscardReason::common_support;
      else ++kept_c;
    }
  }
  if (kept_t == 0 || kept_c == 0)
    fail(ErrorCode::EverythingDiscarded, "no overlap between treated and control propensity scores");
  return out;
}

inline std::vector<bool> retained(const std::vector<DiscardReason>& flags) {
  std::vector<bool> keep(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) keep[i] = flags[i] == DiscardReason::none;
  return keep;
}

}  // namespace obsdesign
