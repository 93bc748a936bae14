// Command-line driver: config file plus flag overrides in, report bundle out.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "obsdesign/pipeline.hpp"

namespace {

int emit_error(const std::string& code, const std::string& message, int exit_code) {
  nlohmann::json e = {{"error", {{"code", code}, {"stage", "config"}, {"message", message}, {"exit_code", exit_code}}}};
  std::cerr << e.dump() << '\n';
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"obsdesign: matching and weighting designs for observational studies"};
  std::optional<std::string> config_path, data, estimand, method, out, treatment, outcome;
  std::optional<double> caliper;
  std::optional<std::size_t> subclasses, bootstrap;
  std::optional<std::uint64_t> seed;
  bool design_only = false, strict = false;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--data", data, "CSV data file (overrides data.path)");
  app.add_option("--treatment", treatment, "treatment column (overrides data.treatment)");
  app.add_option("--outcome", outcome, "outcome column (overrides data.outcome)");
  app.add_option("--estimand", estimand, "ATT or ATE");
  app.add_option("--method", method, "none, exact, nearest, optimal, full, subclass, iptw or odds");
  app.add_option("--caliper", caliper, "nearest-neighbor caliper in SDs of the score scale");
  app.add_option("--subclasses", subclasses, "number of propensity score subclasses");
  app.add_option("--bootstrap", bootstrap, "bootstrap replicates for the standard error (0 = off)");
  app.add_option("--seed", seed, "seed for random matching order and the bootstrap");
  app.add_flag("--design-only", design_only, "stop before the outcome analysis; the outcome is never read");
  app.add_flag("--strict", strict, "exit 3 when any covariate stays imbalanced");
  app.add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  nlohmann::json j = nlohmann::json::object();
  if (config_path) {
    std::ifstream f(*config_path);
    if (!f) return emit_error("Io", "cannot open config '" + *config_path + "'", 2);
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      return emit_error("ConfigValidation", std::string("config is not valid JSON: ") + e.what(), 2);
    }
  }
  auto set = [&](const char* sec, const char* key, nlohmann::json v) {
    if (!j.contains(sec) || !j[sec].is_object()) j[sec] = nlohmann::json::object();
    j[sec][key] = std::move(v);
  };
  if (data) set("data", "path", *data);
  if (treatment) set("data", "treatment", *treatment);
  if (outcome) set("data", "outcome", *outcome);
  if (estimand) j["estimand"] = *estimand;
  if (method) set("matcher", "method", *method);
  if (caliper) set("matcher", "caliper_sd", *caliper);
  if (subclasses) set("matcher", "n_subclasses", *subclasses);
  if (bootstrap) set("bootstrap", "B", *bootstrap);
  if (seed) j["seed"] = *seed;
  if (design_only) j["design_only"] = true;
  if (strict) j["strict"] = true;
  if (out) j["output"] = *out;

  obsdesign::PipelineConfig cfg;
  try {
    cfg = obsdesign::config_from_json(j);
  } catch (const obsdesign::Error& e) {
    return emit_error(std::string(obsdesign::to_string(e.code())), e.what(), 2);
  }
  const auto res = obsdesign::run_pipeline(cfg);
  if (!res.error.empty()) {
    std::cerr << res.error.dump() << '\n';
    return res.exit_code;
  }
  for (const auto& w : res.report.at("warnings")) std::cerr << "advisory: " << w.get<std::string>() << '\n';
  std::cout << cfg.output_dir << ':';
  for (const auto& f : res.files) std::cout << ' ' << f;
  std::cout << '\n';
  if (res.exit_code == obsdesign::kExitImbalance)
    std::cerr << "imbalance: max |std diff| after design is "
              << res.report["imbalance"]["max_abs_std_diff_post"].get<double>() << '\n';
  return res.exit_code;
}
