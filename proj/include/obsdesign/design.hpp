#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/distance.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/matchers.hpp"
#include "obsdesign/propensity.hpp"
#include "obsdesign/weighting.hpp"

namespace obsdesign {

enum class DesignMethod { none, exact, nearest, optimal, full, subclass, iptw, odds };

inline const char* to_string(DesignMethod m) {
  switch (m) {
    case DesignMethod::none: return "none";
    case DesignMethod::exact: return "exact";
    case DesignMethod::nearest: return "nearest";
    case DesignMethod::optimal: return "optimal";
    case DesignMethod::full: return "full";
    case DesignMethod::subclass: return "subclass";
    case DesignMethod::iptw: return "iptw";
    case DesignMethod::odds: return "odds";
  }
  return "none";
}

inline std::optional<DesignMethod> design_method_from_string(const std::string& s) {
  for (auto m : {DesignMethod::none, DesignMethod::exact, DesignMethod::nearest, DesignMethod::optimal,
                 DesignMethod::full, DesignMethod::subclass, DesignMethod::iptw, DesignMethod::odds})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

/// Whether a design method can target the estimand. Pair matching keeps every
/// treated unit and so targets the ATT; IPTW targets the ATE and weighting by
/// the odds the ATT.
inline bool compatible(DesignMethod m, Estimand e) {
  switch (m) {
    case DesignMethod::nearest:
    case DesignMethod::optimal:
    case DesignMethod::exact:
    case DesignMethod::odds: return e == Estimand::ATT;
    case DesignMethod::iptw: return e == Estimand::ATE;
    case DesignMethod::none:
    case DesignMethod::full:
    case DesignMethod::subclass: return true;
  }
  return false;
}

/// Everything needed to turn a frame into analysis weights.
struct DesignConfig {
  DesignMethod method = DesignMethod::nearest;
  Estimand estimand = Estimand::ATT;
  std::vector<std::string> propensity_columns;  // empty: every covariate
  DistanceSpec distance;
  std::size_t k = 1;
  bool with_replacement = false;
  MatchOrder order = MatchOrder::descending_propensity;
  std::uint64_t seed = 0;
  // Caliper for nearest-neighbor matching, in SDs of the distance's score scale.
  std::optional<double> caliper_sd;
  std::optional<double> min_ratio;
  std::optional<double> max_ratio;
  std::size_t n_subclasses = 5;
  bool common_support = false;
  std::optional<double> trim_cap;
  LogisticOptions logistic;
};

struct DesignOutcome {
  PropensityModel model;
  MatchResult result;
  std::optional<Subclassification> subclasses;
  std::vector<DiscardReason> support;  // common-support flags (all none when off)
};

inline std::vector<std::string> resolve_columns(const StudyFrame& frame, const std::vector<std::string>& cols) {
  return cols.empty() ? frame.covariates.names() : cols;
}

/// Runs the design stage: propensity fit (or supplied scores), optional
/// common-support trimming, then the configured matcher or weighting. Never
/// reads the outcome.
inline DesignOutcome run_design(const StudyFrame& frame, const DesignConfig& cfg,
                                const Eigen::VectorXd* known_scores = nullptr) {
  if (!compatible(cfg.method, cfg.estimand))
    fail(ErrorCode::ConfigValidation,
         std::string("method '") + to_string(cfg.method) + "' cannot estimate the " + to_string(cfg.estimand));
  DesignOutcome out;
  out.model = known_scores ? PropensityModel::from_scores(*known_scores)
                           : fit_logistic(frame, resolve_columns(frame, cfg.propensity_columns), cfg.logistic);
  if (known_scores) out.model.column_names = resolve_columns(frame, cfg.propensity_columns);

  out.support.assign(frame.n_units(), DiscardReason::none);
  if (cfg.common_support) out.support = trim_common_support(out.model, frame, cfg.estimand);
  const std::vector<bool> keep = retained(out.support);

  auto scale_caliper = [&](double sd_units) {
    std::vector<std::size_t> units;
    for (std::size_t i = 0; i < frame.n_units(); ++i)
      if (keep[i]) units.push_back(i);
    if (cfg.distance.kind == DistanceKind::linear_propensity) return caliper_width(out.model, sd_units, units);
    if (cfg.distance.kind == DistanceKind::propensity) {
      Eigen::VectorXd s(static_cast<Eigen::Index>(units.size()));
      for (std::size_t k = 0; k < units.size(); ++k)
        s(static_cast<Eigen::Index>(k)) = out.model.scores(static_cast<Eigen::Index>(units[k]));
      return sd_units * sample_sd(s);
    }
    fail(ErrorCode::ConfigValidation,
         "a nearest-neighbor caliper needs a propensity distance; use mahalanobis_within_caliper instead");
  };

  switch (cfg.method) {
    case DesignMethod::none: {
      WeightVector w;
      w.w.assign(frame.n_units(), 0.0);
      for (std::size_t i = 0; i < frame.n_units(); ++i)
        if (keep[i]) w.w[i] = 1.0;
      w.estimand = cfg.estimand;
      w.provenance = {{"scheme", "unweighted"}};
      out.result = weighting_result(w, frame, &out.support);
      out.result.method = {{"matcher", "none"}};
      break;
    }
    case DesignMethod::exact: {
      std::vector<std::string> keys = cfg.distance.key_columns;
      if (keys.empty()) keys = out.model.column_names;
      out.result = exact_strata(frame, keys, &keep);
      for (std::size_t i = 0; i < frame.n_units(); ++i)
        if (out.support[i] != DiscardReason::none) out.result.discarded[i] = out.support[i];
      break;
    }
    case DesignMethod::nearest: {
      const DistanceMatrix d = build_matrix(frame, cfg.distance, &out.model, &keep);
      GreedyOptions g;
      g.k = cfg.k;
      g.with_replacement = cfg.with_replacement;
      g.order = cfg.order;
      g.seed = cfg.seed;
      if (cfg.caliper_sd) g.caliper = scale_caliper(*cfg.caliper_sd);
      out.result = greedy_nn(d, g, &out.model.scores);
      if (cfg.caliper_sd) out.result.method["caliper_sd"] = *cfg.caliper_sd;
      break;
    }
    case DesignMethod::optimal: {
      const DistanceMatrix d = build_matrix(frame, cfg.distance, &out.model, &keep);
      out.result = optimal_pair(d, cfg.k);
      break;
    }
    case DesignMethod::full: {
      const DistanceMatrix d = build_matrix(frame, cfg.distance, &out.model, &keep);
      out.result = full_match(d, {cfg.min_ratio, cfg.max_ratio});
      out.result.estimand = cfg.estimand;
      out.result.unit_weight = set_weights(out.result.sets, frame.n_units(), cfg.estimand);
      break;
    }
    case DesignMethod::subclass: {
      out.subclasses = subclassify(out.model, frame, cfg.n_subclasses, cfg.estimand, &keep);
      out.result = subclass_result(*out.subclasses, frame, cfg.estimand);
      break;
    }
    case DesignMethod::iptw:
    case DesignMethod::odds: {
      ScoreWeightOptions so;
      so.clamp = cfg.trim_cap.has_value();
      WeightVector w = cfg.method == DesignMethod::iptw ? iptw(out.model, frame, &out.support, so)
                                                        : odds_weights(out.model, frame, &out.support, so);
      if (cfg.trim_cap) w = trim(w, *cfg.trim_cap);
      out.result = weighting_result(w, frame, &out.support);
      break;
    }
  }
  if (cfg.method == DesignMethod::nearest || cfg.method == DesignMethod::optimal || cfg.method == DesignMethod::full)
    out.result.method["distance"] = to_string(cfg.distance.kind);
  out.result.method["estimand"] = to_string(cfg.estimand);
  out.result.method["common_support"] = cfg.common_support;
  return out;
}

}  // namespace obsdesign
