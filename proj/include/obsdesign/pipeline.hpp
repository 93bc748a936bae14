#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/design.hpp"
#include "obsdesign/diagnostics.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/estimation.hpp"
#include "obsdesign/plots.hpp"
#include "obsdesign/respecify.hpp"

namespace obsdesign {

inline constexpr int kReportSchemaVersion = 1;

enum class EstimatorKind { adjusted, diff_in_means, subclass };

/// Full description of one run: data roles, design, diagnostics, estimation
/// and output location.
struct PipelineConfig {
  std::string data_path;
  std::string treatment_col = "T";
  std::optional<std::string> outcome_col;
  std::vector<std::string> covariates;  // empty: every non-role column
  bool impute_missing = true;

  DesignConfig design;
  std::optional<std::string> sigma_source;  // as written in the config, if any
  std::size_t respecify_rounds = 0;
  double respecify_threshold = 0.25;

  bool jitter_plot = true;
  bool love_plot = true;
  double balance_threshold = 0.25;
  std::uint64_t jitter_seed = 1;

  std::optional<EstimatorKind> estimator;  // default depends on the method
  std::vector<std::string> estimator_covariates;  // empty: the matching covariates
  SubclassMode subclass_mode = SubclassMode::separate;
  std::size_t bootstrap_B = 0;
  std::uint64_t seed = 1;

  std::string output_dir = "out";
  bool strict = false;
  bool design_only = false;
};

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const char* key, const T& fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigValidation, std::string("key '") + key + "': " + e.what());
  }
}

template <typename T>
std::optional<T> json_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigValidation, std::string("key '") + key + "': " + e.what());
  }
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key) || j.at(key).is_null()) return empty;
  if (!j.at(key).is_object()) fail(ErrorCode::ConfigValidation, std::string("'") + key + "' must be an object");
  return j.at(key);
}

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::adjusted: return "adjusted";
    case EstimatorKind::diff_in_means: return "diff_in_means";
    case EstimatorKind::subclass: return "subclass";
  }
  return "adjusted";
}

inline const char* to_string(MatchOrder o) {
  switch (o) {
    case MatchOrder::descending_propensity: return "descending_propensity";
    case MatchOrder::index: return "index";
    case MatchOrder::random: return "random";
  }
  return "descending_propensity";
}

}  // namespace detail

/// Parses the JSON config. Unknown enumerations are validation errors; the
/// cross-field checks live in validate().
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) fail(ErrorCode::ConfigValidation, "config must be a JSON object");
  PipelineConfig c;
  const auto& data = section(j, "data");
  c.data_path = json_get<std::string>(data, "path", "");
  c.treatment_col = json_get<std::string>(data, "treatment", "T");
  c.outcome_col = json_opt<std::string>(data, "outcome");
  c.covariates = json_get<std::vector<std::string>>(data, "covariates", {});
  c.impute_missing = json_get<bool>(data, "impute_missing", true);

  const std::string estimand = json_get<std::string>(j, "estimand", "ATT");
  auto e = estimand_from_string(estimand);
  if (!e) fail(ErrorCode::ConfigValidation, "estimand must be ATT or ATE, got '" + estimand + "'");
  c.design.estimand = *e;

  const auto& prop = section(j, "propensity");
  c.design.propensity_columns = json_get<std::vector<std::string>>(prop, "columns", {});
  c.design.logistic.max_iter = json_get<int>(prop, "max_iter", 50);
  c.design.logistic.tol = json_get<double>(prop, "tol", 1e-8);
  c.respecify_rounds = json_get<std::size_t>(prop, "respecify_rounds", 0);
  c.respecify_threshold = json_get<double>(prop, "respecify_threshold", 0.25);

  const auto& dist = section(j, "distance");
  const std::string kind = json_get<std::string>(dist, "kind", "linear_propensity");
  auto dk = distance_kind_from_string(kind);
  if (!dk) fail(ErrorCode::ConfigValidation, "unknown distance kind '" + kind + "'");
  c.design.distance.kind = *dk;
  c.sigma_source = json_opt<std::string>(dist, "sigma_source");
  c.design.distance.caliper_sd = json_opt<double>(dist, "caliper_sd");
  c.design.distance.key_columns = json_get<std::vector<std::string>>(dist, "key_columns", {});
  c.design.distance.coarsen_bins =
      json_get<std::map<std::string, std::vector<double>>>(dist, "coarsen_bins", {});

  const auto& m = section(j, "matcher");
  const std::string method = json_get<std::string>(m, "method", "nearest");
  auto dm = design_method_from_string(method);
  if (!dm) fail(ErrorCode::ConfigValidation, "unknown matcher method '" + method + "'");
  c.design.method = *dm;
  const auto k = json_get<long>(m, "k", 1);
  if (k < 1) fail(ErrorCode::ConfigValidation, "matcher.k must be at least 1");
  c.design.k = static_cast<std::size_t>(k);
  c.design.with_replacement = json_get<bool>(m, "with_replacement", false);
  const std::string order = json_get<std::string>(m, "order", "descending_propensity");
  if (order == "descending_propensity") c.design.order = MatchOrder::descending_propensity;
  else if (order == "index") c.design.order = MatchOrder::index;
  else if (order == "random") c.design.order = MatchOrder::random;
  else fail(ErrorCode::ConfigValidation, "unknown matcher order '" + order + "'");
  c.design.caliper_sd = json_opt<double>(m, "caliper_sd");
  c.design.min_ratio = json_opt<double>(m, "min_ratio");
  c.design.max_ratio = json_opt<double>(m, "max_ratio");
  c.design.n_subclasses = json_get<std::size_t>(m, "n_subclasses", 5);
  c.design.trim_cap = json_opt<double>(m, "trim_cap");
  c.design.common_support = json_get<bool>(j, "common_support", false);

  const auto& diag = section(j, "diagnostics");
  c.jitter_plot = json_get<bool>(diag, "jitter", true);
  c.love_plot = json_get<bool>(diag, "love", true);
  c.balance_threshold = json_get<double>(diag, "threshold", 0.25);
  c.jitter_seed = json_get<std::uint64_t>(diag, "jitter_seed", 1);

  const auto& est = section(j, "estimator");
  if (auto kind_s = json_opt<std::string>(est, "kind")) {
    if (*kind_s == "adjusted") c.estimator = EstimatorKind::adjusted;
    else if (*kind_s == "diff_in_means") c.estimator = EstimatorKind::diff_in_means;
    else if (*kind_s == "subclass") c.estimator = EstimatorKind::subclass;
    else fail(ErrorCode::ConfigValidation, "unknown estimator '" + *kind_s + "'");
  }
  c.estimator_covariates = json_get<std::vector<std::string>>(est, "covariates", {});
  const std::string mode = json_get<std::string>(est, "subclass_mode", "separate");
  if (mode == "separate") c.subclass_mode = SubclassMode::separate;
  else if (mode == "joint") c.subclass_mode = SubclassMode::joint;
  else fail(ErrorCode::ConfigValidation, "unknown subclass_mode '" + mode + "'");

  const auto& boot = section(j, "bootstrap");
  c.bootstrap_B = json_get<std::size_t>(boot, "B", 0);
  c.seed = json_get<std::uint64_t>(j, "seed", 1);
  c.design.seed = c.seed;

  c.output_dir = json_get<std::string>(j, "output", "out");
  c.strict = json_get<bool>(j, "strict", false);
  c.design_only = json_get<bool>(j, "design_only", false);
  return c;
}

/// Cross-field checks. Throws ConfigValidation on the first problem.
inline void validate(PipelineConfig& c) {
  auto bad = [](const std::string& msg) { fail(ErrorCode::ConfigValidation, msg); };
  if (c.data_path.empty()) bad("data.path is required");
  if (!compatible(c.design.method, c.design.estimand))
    bad(std::string("matcher '") + to_string(c.design.method) + "' cannot estimate the " +
        to_string(c.design.estimand) + (c.design.method == DesignMethod::nearest ||
                                                c.design.method == DesignMethod::optimal
                                            ? " (pair matching estimates the ATT)"
                                            : ""));
  const SigmaSource expected =
      c.design.estimand == Estimand::ATT ? SigmaSource::control_group : SigmaSource::pooled;
  if (c.sigma_source && *c.sigma_source != to_string(expected))
    bad("distance.sigma_source must be '" + std::string(to_string(expected)) + "' for the " +
        to_string(c.design.estimand));
  c.design.distance.sigma_source = expected;
  if (c.design.distance.kind == DistanceKind::mahalanobis_within_caliper && !c.design.distance.caliper_sd)
    c.design.distance.caliper_sd = 0.25;
  if (c.design.distance.caliper_sd && !(*c.design.distance.caliper_sd > 0.0)) bad("distance.caliper_sd must be positive");
  if (c.design.caliper_sd && !(*c.design.caliper_sd > 0.0)) bad("matcher.caliper_sd must be positive");
  if (c.design.caliper_sd && c.design.method != DesignMethod::nearest)
    bad("matcher.caliper_sd applies to nearest-neighbor matching only");
  if (c.design.caliper_sd && c.design.distance.kind != DistanceKind::linear_propensity &&
      c.design.distance.kind != DistanceKind::propensity)
    bad("matcher.caliper_sd needs a propensity distance");
  if (c.design.n_subclasses < 2) bad("matcher.n_subclasses must be at least 2");
  if (c.design.trim_cap && !(*c.design.trim_cap > 0.0)) bad("matcher.trim_cap must be positive");
  if (c.bootstrap_B == 1) bad("bootstrap.B must be 0 (off) or at least 2");
  if (c.balance_threshold <= 0.0) bad("diagnostics.threshold must be positive");
  if (c.estimator == EstimatorKind::subclass && c.design.method != DesignMethod::subclass)
    bad("estimator 'subclass' requires matcher 'subclass'");
  if (!c.design_only && !c.outcome_col) bad("data.outcome is required unless design_only is set");
}

/// Advisories for choosing a design: the estimand/sample-size decision rules
/// and an overlap check on the fitted scores.
inline std::vector<std::string> guidance_check(const PipelineConfig& c, const StudyFrame& frame,
                                               const PropensityModel* model = nullptr) {
  std::vector<std::string> out;
  const auto nt = frame.n_treated(), nc = frame.n_control();
  const auto m = c.design.method;
  if (c.design.estimand == Estimand::ATT) {
    if (nc > 3 * nt) {
      if (m != DesignMethod::nearest)
        out.push_back("ATT with " + std::to_string(nc) + " controls for " + std::to_string(nt) +
                      " treated (more than 3x): k:1 nearest neighbor matching without replacement is a good choice");
    } else if (m != DesignMethod::subclass && m != DesignMethod::full && m != DesignMethod::odds) {
      out.push_back("ATT without many more controls than treated: subclassification, full matching or weighting "
                    "by the odds are generally appropriate");
    }
  } else if (m != DesignMethod::iptw && m != DesignMethod::full) {
    out.push_back("ATE: IPTW or full matching are generally good choices");
  }
  if (model) {
    double t_lo = kInf, t_hi = -kInf, c_lo = kInf, c_hi = -kInf;
    for (std::size_t i = 0; i < frame.n_units(); ++i) {
      const double e = model->scores(static_cast<Eigen::Index>(i));
      if (frame.treated(i)) {
        t_lo = std::min(t_lo, e);
        t_hi = std::max(t_hi, e);
      } else {
        c_lo = std::min(c_lo, e);
        c_hi = std::max(c_hi, e);
      }
    }
    if (t_lo > c_hi || c_lo > t_hi) {
      out.push_back("common support: treated and control propensity score ranges do not overlap");
    } else {
      std::size_t outside = 0;
      for (std::size_t i = 0; i < frame.n_units(); ++i) {
        const double e = model->scores(static_cast<Eigen::Index>(i));
        if (frame.treated(i) ? (e < c_lo || e > c_hi) : (e < t_lo || e > t_hi)) ++outside;
      }
      if (static_cast<double>(outside) > 0.1 * static_cast<double>(frame.n_units()))
        out.push_back("common support: " + std::to_string(outside) +
                      " units lie outside the other group's propensity score range; consider common_support");
    }
  }
  return out;
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["data"] = {{"path", c.data_path},
               {"treatment", c.treatment_col},
               {"outcome", c.outcome_col ? nlohmann::json(*c.outcome_col) : nlohmann::json()},
               {"covariates", c.covariates},
               {"impute_missing", c.impute_missing}};
  j["estimand"] = to_string(c.design.estimand);
  j["propensity"] = {{"columns", c.design.propensity_columns},
                     {"max_iter", c.design.logistic.max_iter},
                     {"tol", c.design.logistic.tol},
                     {"respecify_rounds", c.respecify_rounds},
                     {"respecify_threshold", c.respecify_threshold}};
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  j["distance"] = {{"kind", to_string(c.design.distance.kind)},
                   {"sigma_source", to_string(c.design.distance.sigma_source)},
                   {"caliper_sd", opt(c.design.distance.caliper_sd)},
                   {"key_columns", c.design.distance.key_columns},
                   {"coarsen_bins", c.design.distance.coarsen_bins}};
  j["matcher"] = {{"method", to_string(c.design.method)},
                  {"k", c.design.k},
                  {"with_replacement", c.design.with_replacement},
                  {"order", detail::to_string(c.design.order)},
                  {"caliper_sd", opt(c.design.caliper_sd)},
                  {"min_ratio", opt(c.design.min_ratio)},
                  {"max_ratio", opt(c.design.max_ratio)},
                  {"n_subclasses", c.design.n_subclasses},
                  {"trim_cap", opt(c.design.trim_cap)}};
  j["common_support"] = c.design.common_support;
  j["diagnostics"] = {{"jitter", c.jitter_plot},
                      {"love", c.love_plot},
                      {"threshold", c.balance_threshold},
                      {"jitter_seed", c.jitter_seed}};
  j["estimator"] = {{"kind", c.estimator ? nlohmann::json(detail::to_string(*c.estimator)) : nlohmann::json()},
                    {"covariates", c.estimator_covariates},
                    {"subclass_mode", c.subclass_mode == SubclassMode::separate ? "separate" : "joint"}};
  j["bootstrap"] = {{"B", c.bootstrap_B}};
  j["seed"] = c.seed;
  j["output"] = c.output_dir;
  j["strict"] = c.strict;
  j["design_only"] = c.design_only;
  return j;
}

enum class Stage { config, load, propensity, design, diagnostics, estimation, output };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::config: return "config";
    case Stage::load: return "load";
    case Stage::propensity: return "propensity";
    case Stage::design: return "design";
    case Stage::diagnostics: return "diagnostics";
    case Stage::estimation: return "estimation";
    case Stage::output: return "output";
  }
  return "config";
}

/// Process exit status for a failure at a given stage.
inline int exit_code_for(Stage s) {
  switch (s) {
    case Stage::config: return 2;
    case Stage::load: return 4;
    case Stage::propensity: return 5;
    case Stage::design: return 6;
    case Stage::diagnostics: return 6;
    case Stage::estimation: return 7;
    case Stage::output: return 1;
  }
  return 1;
}

inline constexpr int kExitImbalance = 3;

struct PipelineResult {
  int exit_code = 0;
  nlohmann::json report;                 // empty on failure
  nlohmann::json error;                  // empty on success
  std::vector<std::string> files;        // written, relative to output_dir
};

namespace detail {

inline std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

inline std::string balance_csv(const BalanceReport& rep) {
  std::ostringstream out;
  out << "name,std_diff_pre,std_diff_post,variance_ratio_pre,variance_ratio_post,eqq_mean,eqq_max,residual_var_ratio\n";
  for (const auto& r : rep.records)
    out << r.name << ',' << csv_number(r.std_diff_pre) << ',' << csv_number(r.std_diff_post) << ','
        << csv_number(r.variance_ratio_pre) << ',' << csv_number(r.variance_ratio_post) << ','
        << csv_number(r.eqq_mean) << ',' << csv_number(r.eqq_max) << ',' << csv_number(r.residual_var_ratio) << '\n';
  return out.str();
}

inline std::string weights_csv(const StudyFrame& frame, const DesignOutcome& d) {
  std::ostringstream out;
  out << "id,treatment,propensity_score,linear_propensity_score,weight,multiplicity,discard_reason\n";
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << frame.unit_ids[i] << ',' << frame.treatment[i] << ',' << csv_number(d.model.scores(r)) << ','
        << csv_number(d.model.linear_scores(r)) << ',' << csv_number(d.result.unit_weight[i]) << ','
        << d.result.multiplicity[i] << ',' << to_string(d.result.discarded[i]) << '\n';
  }
  return out.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) fail(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

inline nlohmann::json model_json(const PropensityModel& m, const std::vector<std::string>& added) {
  nlohmann::json coefs = nlohmann::json::array();
  if (m.coefficients.size() > 0) {
    coefs.push_back({{"term", "(intercept)"}, {"estimate", m.coefficients(0)}});
    for (std::size_t k = 0; k < m.column_names.size(); ++k)
      coefs.push_back({{"term", m.column_names[k]}, {"estimate", m.coefficients(static_cast<Eigen::Index>(k) + 1)}});
  }
  return {{"columns", m.column_names},
          {"coefficients", coefs},
          {"converged", m.converged},
          {"iterations", m.iterations},
          {"deviance", m.deviance},
          {"respecified_terms", added}};
}

}  // namespace detail

/// Loads the data described by the config. The outcome column is neither
/// parsed nor treated as a covariate in design-only runs.
inline StudyFrame load_study(const PipelineConfig& c) {
  std::vector<std::string> exclude;
  if (c.outcome_col) exclude.push_back(*c.outcome_col);
  StudyFrame frame = load_csv(c.data_path, c.treatment_col, c.design_only ? std::nullopt : c.outcome_col,
                              c.covariates, exclude);
  if (c.impute_missing) frame = impute_with_indicators(frame);
  return frame;
}

/// Computes the effect estimate for a finished design.
inline EffectEstimate estimate_effect(const PipelineConfig& c, const StudyFrame& frame, const DesignOutcome& d) {
  const EstimatorKind kind =
      c.estimator.value_or(c.design.method == DesignMethod::subclass ? EstimatorKind::subclass : EstimatorKind::adjusted);
  std::vector<std::string> covs = c.estimator_covariates;
  if (covs.empty()) {
    for (const auto& name : d.model.column_names) {
      const bool derived = std::any_of(frame.covariates.derived.begin(), frame.covariates.derived.end(),
                                       [&](const DerivedTerm& t) { return t.name == name && t.kind != TermKind::missing_indicator; });
      if (!derived) covs.push_back(name);
    }
  }
  EffectEstimate e;
  switch (kind) {
    case EstimatorKind::diff_in_means: e = diff_in_means(frame, d.result.unit_weight, c.design.estimand); break;
    case EstimatorKind::adjusted: e = adjusted_effect(frame, d.result.unit_weight, covs, c.design.estimand); break;
    case EstimatorKind::subclass:
      e = subclass_effect(frame, *d.subclasses, c.design.estimand, covs, c.subclass_mode);
      break;
  }
  e.method["design"] = to_string(c.design.method);
  return e;
}

/// Runs all four design-and-analysis steps and writes the report bundle.
inline PipelineResult run_pipeline(PipelineConfig c) {
  PipelineResult res;
  Stage stage = Stage::config;
  try {
    validate(c);
    stage = Stage::load;
    StudyFrame frame = load_study(c);

    stage = Stage::propensity;
    DesignConfig design = c.design;
    design.propensity_columns = resolve_columns(frame, design.propensity_columns);
    // Fit once up front so a separation or convergence failure is reported as
    // a propensity-stage error rather than a design error.
    (void)fit_logistic(frame, design.propensity_columns, design.logistic);

    stage = Stage::design;
    DesignOutcome d = run_design(frame, design);
    std::vector<std::string> added;
    for (std::size_t round = 0; round < c.respecify_rounds; ++round) {
      stage = Stage::diagnostics;
      BalanceThresholds th;
      th.std_diff_max = c.balance_threshold;
      const auto rep = balance_report(frame, d.model, d.result.unit_weight, {}, th);
      stage = Stage::propensity;
      auto rs = respecify(frame, d.model, rep, c.respecify_threshold, design.logistic);
      if (rs.added_terms.empty()) break;
      added.insert(added.end(), rs.added_terms.begin(), rs.added_terms.end());
      frame = std::move(rs.frame);
      design.propensity_columns = rs.model.column_names;
      stage = Stage::design;
      d = run_design(frame, design);
    }

    stage = Stage::diagnostics;
    BalanceThresholds th;
    th.std_diff_max = c.balance_threshold;
    const BalanceReport balance = balance_report(frame, d.model, d.result.unit_weight, {}, th);
    const auto warnings = guidance_check(c, frame, &d.model);

    nlohmann::json report;
    report["schema_version"] = kReportSchemaVersion;
    report["config"] = to_json(c);
    std::vector<std::string> imputed;
    for (const auto& t : frame.covariates.derived)
      if (t.kind == TermKind::missing_indicator) imputed.push_back(t.sources.front());
    report["data"] = {{"n_units", frame.n_units()},
                      {"n_treated", frame.n_treated()},
                      {"n_control", frame.n_control()},
                      {"covariates", frame.covariates.names()},
                      {"imputed_columns", imputed}};
    report["warnings"] = warnings;
    report["propensity"] = detail::model_json(d.model, added);
    std::size_t mt = 0, mc = 0, disc = 0;
    for (std::size_t i = 0; i < frame.n_units(); ++i) {
      if (d.result.is_discarded(i) || !(d.result.unit_weight[i] > 0.0)) {
        ++disc;
        continue;
      }
      (frame.treated(i) ? mt : mc)++;
    }
    report["design"] = {{"method", d.result.method},
                        {"kind", to_string(d.result.kind)},
                        {"n_sets", d.result.sets.size()},
                        {"n_retained_treated", mt},
                        {"n_retained_control", mc},
                        {"n_discarded", disc},
                        {"total_distance", d.result.total_distance}};
    report["balance"] = to_json(balance);
    const bool balanced = balance.balanced();
    report["imbalance"] = {{"balanced", balanced},
                           {"max_abs_std_diff_post", balance.max_abs_std_diff_post()},
                           {"threshold", c.balance_threshold}};

    if (!c.design_only) {
      stage = Stage::estimation;
      EffectEstimate effect = estimate_effect(c, frame, d);
      if (c.bootstrap_B >= 2) {
        const PipelineConfig cfg = c;
        const DesignConfig dcfg = design;
        EffectPipeline replicate = [cfg, dcfg](const StudyFrame& f) {
          const DesignOutcome rd = run_design(f, dcfg);
          return estimate_effect(cfg, f, rd);
        };
        effect = bootstrap_se(replicate, frame, c.bootstrap_B, c.seed);
      }
      report["effect"] = to_json(effect);
    }

    stage = Stage::output;
    const std::filesystem::path dir(c.output_dir);
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "report.json", report.dump(2) + "\n");
    res.files.push_back("report.json");
    detail::write_text(dir / "balance.csv", detail::balance_csv(balance));
    res.files.push_back("balance.csv");
    detail::write_text(dir / "weights.csv", detail::weights_csv(frame, d));
    res.files.push_back("weights.csv");
    if (c.jitter_plot) {
      detail::write_text(dir / "jitter.svg", render_jitter(d.model, frame, d.result, c.jitter_seed));
      res.files.push_back("jitter.svg");
    }
    if (c.love_plot) {
      detail::write_text(dir / "love.svg", render_love(balance));
      res.files.push_back("love.svg");
    }
    res.report = std::move(report);
    res.exit_code = (c.strict && !balanced) ? kExitImbalance : 0;
  } catch (const Error& e) {
    res.exit_code = exit_code_for(stage);
    res.error = {{"error",
                  {{"code", std::string(to_string(e.code()))},
                   {"stage", to_string(stage)},
                   {"message", e.what()},
                   {"exit_code", res.exit_code}}}};
  } catch (const std::filesystem::filesystem_error& e) {
    res.exit_code = exit_code_for(Stage::output);
    res.error = {{"error",
                  {{"code", "IoError"}, {"stage", "output"}, {"message", e.what()}, {"exit_code", res.exit_code}}}};
  }
  return res;
}

}  // namespace obsdesign
