#pragma once

#include <json.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/matchers.hpp"
#include "obsdesign/propensity.hpp"

namespace obsdesign {

enum class WeightScheme { iptw, odds, frequency, variable_ratio, subclass, full };

inline const char* to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::iptw: return "iptw";
    case WeightScheme::odds: return "odds";
    case WeightScheme::frequency: return "frequency";
    case WeightScheme::variable_ratio: return "variable_ratio";
    case WeightScheme::subclass: return "subclass";
    case WeightScheme::full: return "full";
  }
  return "iptw";
}

struct WeightVector {
  std::vector<double> w;
  WeightScheme scheme = WeightScheme::iptw;
  Estimand estimand = Estimand::ATT;
  std::optional<double> trim_cap;
  std::size_t n_capped = 0;
  nlohmann::json provenance = nlohmann::json::object();
};

struct ScoreWeightOptions {
  // When set, scores are clamped to [eps, 1 - eps] instead of rejected.
  bool clamp = false;
  double eps = 1e-6;
};

namespace detail {

inline double checked_score(double e, const ScoreWeightOptions& opt, std::size_t unit, std::size_t& clamped) {
  if (e <= opt.eps || e >= 1.0 - opt.eps) {
    if (!opt.clamp)
      fail(ErrorCode::DegenerateScore,
           "unit " + std::to_string(unit) + " has score " + std::to_string(e) + " too close to 0 or 1");
    ++clamped;
    return std::clamp(e, opt.eps, 1.0 - opt.eps);
  }
  return e;
}

inline std::vector<DiscardReason> no_discards(std::size_t n, const std::vector<DiscardReason>* discard) {
  return discard ? *discard : std::vector<DiscardReason>(n, DiscardReason::none);
}

}  // namespace detail

/// Inverse probability of treatment weights (ATE): 1/e for treated units,
/// 1/(1-e) for controls.
inline WeightVector iptw(const PropensityModel& model, const StudyFrame& frame,
                         const std::vector<DiscardReason>* discard = nullptr, const ScoreWeightOptions& opt = {}) {
  const auto flags = detail::no_discards(frame.n_units(), discard);
  WeightVector out;
  out.scheme = WeightScheme::iptw;
  out.estimand = Estimand::ATE;
  out.w.assign(frame.n_units(), 0.0);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (flags[i] != DiscardReason::none) continue;
    const double e = detail::checked_score(model.scores(static_cast<Eigen::Index>(i)), opt, i, clamped);
    out.w[i] = frame.treated(i) ? 1.0 / e : 1.0 / (1.0 - e);
  }
  out.provenance = {{"scheme", "iptw"}, {"clamped_scores", clamped}};
  return out;
}

/// Weighting by the odds (ATT): treated units 1, controls e/(1-e).
inline WeightVector odds_weights(const PropensityModel& model, const StudyFrame& frame,
                                 const std::vector<DiscardReason>* discard = nullptr,
                                 const ScoreWeightOptions& opt = {}) {
  const auto flags = detail::no_discards(frame.n_units(), discard);
  WeightVector out;
  out.scheme = WeightScheme::odds;
  out.estimand = Estimand::ATT;
  out.w.assign(frame.n_units(), 0.0);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (flags[i] != DiscardReason::none) continue;
    if (frame.treated(i)) {
      out.w[i] = 1.0;
      continue;
    }
    const double e = detail::checked_score(model.scores(static_cast<Eigen::Index>(i)), opt, i, clamped);
    out.w[i] = e / (1.0 - e);
  }
  out.provenance = {{"scheme", "odds"}, {"clamped_scores", clamped}};
  return out;
}

/// Caps every weight at `cap`.
inline WeightVector trim(const WeightVector& in, double cap) {
  if (!(cap > 0.0)) fail(ErrorCode::InvalidArgument, "trim cap must be positive");
  WeightVector out = in;
  out.n_capped = 0;
  for (double& w : out.w)
    if (w > cap) {
      w = cap;
      ++out.n_capped;
    }
  out.trim_cap = in.trim_cap ? std::min(*in.trim_cap, cap) : cap;
  out.provenance["trim_cap"] = *out.trim_cap;
  out.provenance["n_capped"] = out.n_capped;
  return out;
}

/// Analysis weights implied by pair or ratio matching: treated 1; each
/// control receives 1/(controls in its set) per set it was drawn into, so a
/// control reused under replacement carries a frequency weight.
inline WeightVector weights_from_match(const MatchResult& result) {
  if (result.kind != MatchKind::pair)
    fail(ErrorCode::WrongResultKind,
         std::string("weights_from_match needs a pair/ratio result, got ") + to_string(result.kind));
  MatchResult copy = result;
  detail::assign_pair_weights(copy);
  WeightVector out;
  out.w = std::move(copy.unit_weight);
  out.estimand = result.estimand;
  out.scheme = result.with_replacement ? WeightScheme::frequency : WeightScheme::variable_ratio;
  out.provenance = {{"scheme", to_string(out.scheme)}};
  return out;
}

/// Weights for a partition into sets (subclasses or full-match sets).
/// ATT: treated 1, controls n_t/n_c within their set. ATE: every unit of an
/// arm gets N_s/n_arm, so each arm is weighted up to the set size and the
/// sets enter in proportion to N_s/N.
inline std::vector<double> set_weights(const std::vector<MatchedSet>& sets, std::size_t n_units, Estimand estimand) {
  std::vector<double> w(n_units, 0.0);
  for (const auto& s : sets) {
    if (s.treated.empty() || s.controls.empty())
      fail(ErrorCode::EmptySubclassArm, "a set lacks treated or control units");
    const double nt = static_cast<double>(s.treated.size());
    const double nc = static_cast<double>(s.controls.size());
    const double ns = nt + nc;
    for (auto t : s.treated) w[t] = estimand == Estimand::ATT ? 1.0 : ns / nt;
    for (auto c : s.controls) w[c] = estimand == Estimand::ATT ? nt / nc : ns / nc;
  }
  return w;
}

inline std::vector<MatchedSet> subclass_sets(const Subclassification& sub, const StudyFrame& frame) {
  std::vector<MatchedSet> sets(sub.n_subclasses);
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    const int s = sub.subclass_of[i];
    if (s < 0) continue;
    (frame.treated(i) ? sets[static_cast<std::size_t>(s)].treated : sets[static_cast<std::size_t>(s)].controls)
        .push_back(i);
  }
  return sets;
}

inline WeightVector subclass_weights(const Subclassification& sub, const StudyFrame& frame, Estimand estimand) {
  WeightVector out;
  out.scheme = WeightScheme::subclass;
  out.estimand = estimand;
  out.w = set_weights(subclass_sets(sub, frame), frame.n_units(), estimand);
  out.provenance = {{"scheme", "subclass"},
                    {"normalization", estimand == Estimand::ATT ? "treated 1, control n_tj/n_cj"
                                                                 : "treated N_j/n_tj, control N_j/n_cj"}};
  return out;
}

inline WeightVector full_match_weights(const MatchResult& result, Estimand estimand) {
  if (result.kind != MatchKind::full)
    fail(ErrorCode::WrongResultKind, "full_match_weights needs a full matching result");
  WeightVector out;
  out.scheme = WeightScheme::full;
  out.estimand = estimand;
  out.w = set_weights(result.sets, result.unit_weight.size(), estimand);
  out.provenance = {{"scheme", "full"}};
  return out;
}

/// Wraps a subclassification as a MatchResult so diagnostics and plots can
/// treat every design the same way.
inline MatchResult subclass_result(const Subclassification& sub, const StudyFrame& frame, Estimand estimand) {
  MatchResult r;
  r.estimand = estimand;
  r.kind = MatchKind::subclass;
  r.sets = subclass_sets(sub, frame);
  r.unit_weight = set_weights(r.sets, frame.n_units(), estimand);
  r.discarded.assign(frame.n_units(), DiscardReason::none);
  r.multiplicity.assign(frame.n_units(), 0);
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (sub.subclass_of[i] < 0) r.discarded[i] = DiscardReason::common_support;
    else r.multiplicity[i] = 1;
  }
  r.method = {{"matcher", "subclassify"}, {"n_subclasses", sub.n_subclasses}, {"boundaries", sub.boundaries}};
  return r;
}

/// Wraps a weight vector (IPTW / odds) as a MatchResult with one implicit set.
inline MatchResult weighting_result(const WeightVector& w, const StudyFrame& frame,
                                    const std::vector<DiscardReason>* discard = nullptr) {
  MatchResult r;
  r.estimand = w.estimand;
  r.kind = MatchKind::weighting;
  r.unit_weight = w.w;
  r.discarded = detail::no_discards(frame.n_units(), discard);
  r.multiplicity.assign(frame.n_units(), 0);
  MatchedSet all;
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    if (r.discarded[i] != DiscardReason::none) continue;
    r.multiplicity[i] = 1;
    (frame.treated(i) ? all.treated : all.controls).push_back(i);
  }
  r.sets.push_back(std::move(all));
  r.method = w.provenance;
  return r;
}

}  // namespace obsdesign
