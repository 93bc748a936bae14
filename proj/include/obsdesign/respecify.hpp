#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "obsdesign/dataset.hpp"
#include "obsdesign/diagnostics.hpp"
#include "obsdesign/propensity.hpp"

namespace obsdesign {

struct Respecification {
  StudyFrame frame;  // input frame plus any appended terms
  PropensityModel model;
  std::vector<std::string> added_terms;
};

/// One round of balance-driven model refinement: every model covariate whose
/// post-design |standardized difference| exceeds `threshold` gets its square
/// (continuous covariates only), and every pair of such covariates gets an
/// interaction; the model is then refit. Terms already present are skipped.
inline Respecification respecify(const StudyFrame& frame, const PropensityModel& model, const BalanceReport& balance,
                                  double threshold = 0.25, const LogisticOptions& opt = {}) {
  std::vector<std::string> imbalanced;
  for (const auto& r : balance.records) {
    if (std::find(model.column_names.begin(), model.column_names.end(), r.name) == model.column_names.end())
      continue;
    const bool derived = std::any_of(frame.covariates.derived.begin(), frame.covariates.derived.end(),
                                     [&](const DerivedTerm& d) { return d.name == r.name && d.kind != TermKind::missing_indicator; });
    if (derived) continue;
    if (!std::isfinite(r.std_diff_post) || std::abs(r.std_diff_post) > threshold) imbalanced.push_back(r.name);
  }

  auto present = [&](const std::string& name) { return frame.covariates.find(name).has_value(); };
  std::vector<std::string> squares;
  std::vector<std::pair<std::string, std::string>> interactions;
  for (const auto& name : imbalanced) {
    const auto kind = frame.covariates.columns[static_cast<std::size_t>(frame.covariates.index_of(name))].kind;
    if (kind == ColumnKind::continuous && !present(square_name(name))) squares.push_back(name);
  }
  for (std::size_t a = 0; a < imbalanced.size(); ++a)
    for (std::size_t b = a + 1; b < imbalanced.size(); ++b)
      if (!present(interaction_name(imbalanced[a], imbalanced[b])) &&
          !present(interaction_name(imbalanced[b], imbalanced[a])))
        interactions.emplace_back(imbalanced[a], imbalanced[b]);

  Respecification out;
  out.frame = expand_terms(frame, squares, interactions);
  std::vector<std::string> columns = model.column_names;
  for (const auto& s : squares) out.added_terms.push_back(square_name(s));
  for (const auto& [a, b] : interactions) out.added_terms.push_back(interaction_name(a, b));
  columns.insert(columns.end(), out.added_terms.begin(), out.added_terms.end());
  out.model = fit_logistic(out.frame, columns, opt);
  return out;
}

}  // namespace obsdesign
