#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "obsdesign/error.hpp"

namespace obsdesign {

enum class ColumnKind { continuous, binary, indicator };
enum class TermKind { square, interaction, missing_indicator };

inline const char* to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::binary: return "binary";
    case ColumnKind::indicator: return "indicator";
  }
  return "continuous";
}

inline const char* to_string(TermKind k) {
  switch (k) {
    case TermKind::square: return "square";
    case TermKind::interaction: return "interaction";
    case TermKind::missing_indicator: return "missing_indicator";
  }
  return "square";
}

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
};

// Provenance of a column that was computed from other columns.
struct DerivedTerm {
  TermKind kind;
  std::string name;
  std::vector<std::string> sources;
  // Set for the square of a binary column, which equals the column itself.
  bool redundant = false;
};

/// Unit-by-covariate matrix. Missing entries hold NaN and are masked; nothing
/// downstream reads a masked value.
struct CovariateTable {
  std::vector<Column> columns;
  Eigen::MatrixXd values;  // n_units x p
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> missing;
  std::vector<DerivedTerm> derived;

  Eigen::Index n_units() const { return values.rows(); }
  Eigen::Index n_columns() const { return values.cols(); }

  std::optional<Eigen::Index> find(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].name == name) return static_cast<Eigen::Index>(j);
    return std::nullopt;
  }

  Eigen::Index index_of(const std::string& name) const {
    auto j = find(name);
    if (!j) fail(ErrorCode::UnknownColumn, "no covariate named '" + name + "'");
    return *j;
  }

  bool fully_observed(Eigen::Index j) const { return !missing.col(j).any(); }
  bool any_missing() const { return missing.size() > 0 && missing.any(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(columns.size());
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }

  void append(Column column, const Eigen::VectorXd& data) {
    const Eigen::Index n = values.rows();
    values.conservativeResize(n, values.cols() + 1);
    values.col(values.cols() - 1) = data;
    missing.conservativeResize(n, missing.cols() + 1);
    missing.col(missing.cols() - 1).setConstant(false);
    columns.push_back(std::move(column));
  }
};

/// Treatment, covariates and (optionally) outcome for every unit.
struct StudyFrame {
  CovariateTable covariates;
  std::vector<int> treatment;
  std::optional<Eigen::VectorXd> outcome;
  std::vector<std::string> unit_ids;

  std::size_t n_units() const { return treatment.size(); }

  std::size_t n_treated() const {
    return static_cast<std::size_t>(std::count(treatment.begin(), treatment.end(), 1));
  }
  std::size_t n_control() const { return n_units() - n_treated(); }

  bool treated(std::size_t i) const { return treatment[i] == 1; }

  std::vector<std::size_t> arm(int t) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < treatment.size(); ++i)
      if (treatment[i] == t) out.push_back(i);
    return out;
  }

  Eigen::VectorXd column(const std::string& name) const {
    return covariates.values.col(covariates.index_of(name));
  }

  // Rows of the covariate matrix for the named columns.
  Eigen::MatrixXd design(const std::vector<std::string>& names) const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n_units()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
      const Eigen::Index j = covariates.index_of(names[k]);
      if (!covariates.fully_observed(j))
        fail(ErrorCode::InvalidArgument, "column '" + names[k] + "' has missing entries");
      x.col(static_cast<Eigen::Index>(k)) = covariates.values.col(j);
    }
    return x;
  }

  // New frame holding the given rows (repeats allowed, as in bootstrap draws).
  StudyFrame select(const std::vector<std::size_t>& rows) const {
    StudyFrame out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.covariates.columns = covariates.columns;
    out.covariates.derived = covariates.derived;
    out.covariates.values.resize(n, covariates.n_columns());
    out.covariates.missing.resize(n, covariates.n_columns());
    if (outcome) out.outcome = Eigen::VectorXd(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
      out.covariates.values.row(r) = covariates.values.row(src);
      out.covariates.missing.row(r) = covariates.missing.row(src);
      out.treatment.push_back(treatment[static_cast<std::size_t>(src)]);
      out.unit_ids.push_back(unit_ids[static_cast<std::size_t>(src)]);
      if (outcome) (*out.outcome)(r) = (*outcome)(src);
    }
    return out;
  }

  void validate() const {
    if (covariates.n_units() != static_cast<Eigen::Index>(treatment.size()) ||
        unit_ids.size() != treatment.size() ||
        (outcome && outcome->size() != static_cast<Eigen::Index>(treatment.size())))
      fail(ErrorCode::InvalidArgument, "frame components disagree on the number of units");
    for (int t : treatment)
      if (t != 0 && t != 1) fail(ErrorCode::NonBinaryTreatment, "treatment must be 0 or 1");
    if (n_treated() == 0 || n_control() == 0)
      fail(ErrorCode::EmptyTreatmentArm, "need at least one treated and one control unit");
  }
};

inline ColumnKind infer_kind(const Eigen::VectorXd& values,
                             const Eigen::Matrix<bool, Eigen::Dynamic, 1>& missing) {
  std::set<double> distinct;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (missing(i)) continue;
    distinct.insert(values(i));
    if (distinct.size() > 2) return ColumnKind::continuous;
  }
  for (double v : distinct)
    if (v != 0.0 && v != 1.0) return ColumnKind::continuous;
  return ColumnKind::binary;
}

/// Builds a frame from in-memory columns; kinds are inferred.
inline StudyFrame make_frame(const std::vector<std::string>& names, const Eigen::MatrixXd& x,
                             std::vector<int> treatment,
                             std::optional<Eigen::VectorXd> outcome = std::nullopt) {
  StudyFrame f;
  f.covariates.values = x;
  f.covariates.missing = x.array().isNaN();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Matrix<bool, Eigen::Dynamic, 1> m = f.covariates.missing.col(j);
    f.covariates.columns.push_back({names[static_cast<std::size_t>(j)], infer_kind(x.col(j), m)});
  }
  f.treatment = std::move(treatment);
  f.outcome = std::move(outcome);
  for (std::size_t i = 0; i < f.treatment.size(); ++i) f.unit_ids.push_back(std::to_string(i + 1));
  f.validate();
  return f;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& raw) {
  std::string line = raw;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& cell) {
  const std::string s = trim(cell);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    fail(ErrorCode::UnparseableCell, "'" + s + "'");
  return v;
}

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses CSV text. An empty covariate cell is missing; the outcome column is
/// only parsed when `outcome_col` is given, so a design-only load never reads it.
inline StudyFrame parse_csv(std::istream& in, const std::string& treatment_col,
                            const std::optional<std::string>& outcome_col,
                            std::vector<std::string> covariate_cols,
                            const std::vector<std::string>& exclude_cols = {}) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Io, "missing header row");
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);

  auto locate = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::MissingColumn, "column '" + name + "' not in header");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t t_idx = locate(treatment_col);
  std::optional<std::size_t> y_idx;
  if (outcome_col) y_idx = locate(*outcome_col);
  std::optional<std::size_t> id_idx;
  if (!header.empty() && header.front() == "id") id_idx = 0;

  if (covariate_cols.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == t_idx || (id_idx && j == *id_idx)) continue;
      if (y_idx && j == *y_idx) continue;
      if (std::find(exclude_cols.begin(), exclude_cols.end(), header[j]) != exclude_cols.end()) continue;
      covariate_cols.push_back(header[j]);
    }
  }
  std::vector<std::size_t> x_idx;
  for (const auto& c : covariate_cols) x_idx.push_back(locate(c));

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> miss;
  std::vector<int> treatment;
  std::vector<double> outcome;
  std::vector<std::string> ids;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty() || line == "\r") continue;
    ++row;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      fail(ErrorCode::UnparseableCell,
           "row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
               std::to_string(header.size()));
    auto cell_error = [&](std::size_t col) {
      fail(ErrorCode::UnparseableCell,
           "row " + std::to_string(row) + ", column '" + header[col] + "': '" + cells[col] + "'");
    };

    std::optional<double> t;
    try {
      t = detail::parse_number(cells[t_idx]);
    } catch (const Error&) {
      fail(ErrorCode::NonBinaryTreatment, "row " + std::to_string(row) + ": '" + cells[t_idx] + "'");
    }
    if (!t || (*t != 0.0 && *t != 1.0))
      fail(ErrorCode::NonBinaryTreatment,
           "row " + std::to_string(row) + ": treatment '" + cells[t_idx] + "' is not 0 or 1");
    treatment.push_back(static_cast<int>(*t));

    if (y_idx) {
      std::optional<double> y;
      try {
        y = detail::parse_number(cells[*y_idx]);
      } catch (const Error&) {
        cell_error(*y_idx);
      }
      if (!y) cell_error(*y_idx);
      outcome.push_back(*y);
    }

    std::vector<double> vals;
    std::vector<bool> m;
    for (std::size_t c : x_idx) {
      std::optional<double> v;
      try {
        v = detail::parse_number(cells[c]);
      } catch (const Error&) {
        cell_error(c);
      }
      vals.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
      m.push_back(!v.has_value());
    }
    rows.push_back(std::move(vals));
    miss.push_back(std::move(m));
    ids.push_back(id_idx ? detail::trim(cells[*id_idx]) : std::to_string(row));
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(x_idx.size());
  StudyFrame f;
  f.covariates.values.resize(n, p);
  f.covariates.missing.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      f.covariates.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      f.covariates.missing(i, j) = miss[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::Matrix<bool, Eigen::Dynamic, 1> m = f.covariates.missing.col(j);
    f.covariates.columns.push_back(
        {covariate_cols[static_cast<std::size_t>(j)], infer_kind(f.covariates.values.col(j), m)});
  }
  f.treatment = std::move(treatment);
  if (y_idx) f.outcome = Eigen::Map<Eigen::VectorXd>(outcome.data(), static_cast<Eigen::Index>(outcome.size()));
  f.unit_ids = std::move(ids);
  f.validate();
  return f;
}

inline StudyFrame load_csv(const std::string& path, const std::string& treatment_col,
                           const std::optional<std::string>& outcome_col = std::nullopt,
                           std::vector<std::string> covariate_cols = {},
                           const std::vector<std::string>& exclude_cols = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  return parse_csv(in, treatment_col, outcome_col, std::move(covariate_cols), exclude_cols);
}

/// Writes id, treatment, optional outcome, then covariates; missing cells are empty.
inline void write_csv(std::ostream& out, const StudyFrame& f, const std::string& treatment_col = "T",
                      const std::string& outcome_col = "Y") {
  out << "id," << treatment_col;
  if (f.outcome) out << ',' << outcome_col;
  for (const auto& c : f.covariates.columns) out << ',' << c.name;
  out << '\n';
  for (std::size_t i = 0; i < f.n_units(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << f.unit_ids[i] << ',' << f.treatment[i];
    if (f.outcome) out << ',' << detail::format_double((*f.outcome)(r));
    for (Eigen::Index j = 0; j < f.covariates.n_columns(); ++j) {
      out << ',';
      if (!f.covariates.missing(r, j)) out << detail::format_double(f.covariates.values(r, j));
    }
    out << '\n';
  }
}

inline std::string missing_indicator_name(const std::string& column) { return column + "_missing"; }
inline std::string square_name(const std::string& column) { return column + "^2"; }
inline std::string interaction_name(const std::string& a, const std::string& b) { return a + ":" + b; }

/// Mean-imputes every partially observed column and appends a 0/1 indicator
/// of missingness for it. Frames without missing values come back unchanged.
inline StudyFrame impute_with_indicators(const StudyFrame& frame) {
  StudyFrame out = frame;
  auto& cov = out.covariates;
  const Eigen::Index p = cov.n_columns();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (cov.fully_observed(j)) continue;
    double sum = 0.0;
    Eigen::Index observed = 0;
    for (Eigen::Index i = 0; i < cov.n_units(); ++i)
      if (!cov.missing(i, j)) {
        sum += cov.values(i, j);
        ++observed;
      }
    const std::string name = cov.columns[static_cast<std::size_t>(j)].name;
    if (observed == 0) fail(ErrorCode::AllMissingColumn, "column '" + name + "' has no observed values");
    const double mean = sum / static_cast<double>(observed);
    Eigen::VectorXd indicator = Eigen::VectorXd::Zero(cov.n_units());
    for (Eigen::Index i = 0; i < cov.n_units(); ++i)
      if (cov.missing(i, j)) {
        cov.values(i, j) = mean;
        cov.missing(i, j) = false;
        indicator(i) = 1.0;
      }
    const std::string ind_name = missing_indicator_name(name);
    cov.append({ind_name, ColumnKind::indicator}, indicator);
    cov.derived.push_back({TermKind::missing_indicator, ind_name, {name}, false});
  }
  return out;
}

/// Appends squares and pairwise products of existing, fully observed columns.
inline StudyFrame expand_terms(const StudyFrame& frame, const std::vector<std::string>& squares,
                               const std::vector<std::pair<std::string, std::string>>& interactions) {
  StudyFrame out = frame;
  auto& cov = out.covariates;
  auto observed_column = [&](const std::string& name) -> Eigen::VectorXd {
    const Eigen::Index j = frame.covariates.index_of(name);
    if (!frame.covariates.fully_observed(j))
      fail(ErrorCode::InvalidArgument, "column '" + name + "' has missing entries");
    return frame.covariates.values.col(j);
  };
  for (const auto& s : squares) {
    Eigen::VectorXd x = observed_column(s);
    const bool redundant =
        frame.covariates.columns[static_cast<std::size_t>(frame.covariates.index_of(s))].kind !=
        ColumnKind::continuous;
    const std::string name = square_name(s);
    cov.append({name, ColumnKind::continuous}, x.array().square().matrix());
    cov.derived.push_back({TermKind::square, name, {s}, redundant});
  }
  for (const auto& [a, b] : interactions) {
    Eigen::VectorXd xa = observed_column(a);
    Eigen::VectorXd xb = observed_column(b);
    const std::string name = interaction_name(a, b);
    cov.append({name, ColumnKind::continuous}, xa.cwiseProduct(xb));
    cov.derived.push_back({TermKind::interaction, name, {a, b}, false});
  }
  return out;
}

}  // namespace obsdesign
