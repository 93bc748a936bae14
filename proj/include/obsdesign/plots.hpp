#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "obsdesign/diagnostics.hpp"
#include "obsdesign/error.hpp"
#include "obsdesign/matchers.hpp"
#include "obsdesign/propensity.hpp"

namespace obsdesign {

// Minimal SVG 1.1 text builder. Coordinates are printed with two decimals so
// the output is byte-stable across platforms.
class SvgDocument {
 public:
  SvgDocument(double width, double height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = "none") {
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
          << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0,
            const std::string& cls = "", const std::string& dash = "") {
    body_ << "<line";
    if (!cls.empty()) body_ << " class=\"" << cls << "\"";
    body_ << " x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill, const std::string& stroke,
              const std::string& cls) {
    body_ << "<circle class=\"" << cls << "\" cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
          << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, const std::string& anchor = "start", int size = 12) {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\"" << size
          << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(width_) << "\" height=\""
        << num(height_) << "\" viewBox=\"0 0 " << num(width_) << ' ' << num(height_) << "\">\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::Io, "cannot write '" + path + "'");
    f << str();
    if (!f) fail(ErrorCode::Io, "write to '" + path + "' failed");
  }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

namespace detail {
// Uniform [0,1) from the top 53 bits; independent of <random> distribution
// implementations.
inline double unit_uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
}  // namespace detail

/// Propensity jitter plot: one dot per unit in four rows (unmatched treated,
/// matched treated, matched control, unmatched control). Matched units are
/// black, unmatched grey; for weighting, subclass and full designs the dot
/// area scales with the unit's weight.
inline std::string render_jitter(const PropensityModel& model, const StudyFrame& frame, const MatchResult& result,
                                 std::uint64_t seed = 1) {
  const double width = 720, height = 420, left = 150, right = 30, top = 30, bottom = 50;
  const double plot_w = width - left - right;
  const double row_h = (height - top - bottom) / 4.0;
  SvgDocument svg(width, height);
  svg.rect(0, 0, width, height, "#ffffff");
  const char* labels[4] = {"Unmatched Treated", "Matched Treated", "Matched Control", "Unmatched Control"};
  for (int r = 0; r < 4; ++r) {
    svg.text(left - 10, top + row_h * (r + 0.5) + 4, labels[r], "end");
    svg.line(left, top + row_h * (r + 1), left + plot_w, top + row_h * (r + 1), "#e0e0e0");
  }
  const double axis_y = height - bottom;
  svg.line(left, axis_y, left + plot_w, axis_y, "#000000");
  for (int k = 0; k <= 5; ++k) {
    const double x = left + plot_w * k / 5.0;
    svg.line(x, axis_y, x, axis_y + 5, "#000000");
    svg.text(x, axis_y + 20, SvgDocument::num(k / 5.0), "middle", 11);
  }
  svg.text(left + plot_w / 2, height - 8, "Propensity Score", "middle");

  const bool sized = result.kind != MatchKind::pair;
  double mean_w = 0.0;
  std::size_t n_pos = 0;
  for (double w : result.unit_weight)
    if (w > 0.0) {
      mean_w += w;
      ++n_pos;
    }
  mean_w = n_pos ? mean_w / static_cast<double>(n_pos) : 1.0;

  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < frame.n_units(); ++i) {
    const double e = model.scores(static_cast<Eigen::Index>(i));
    const bool matched = !result.is_discarded(i) && result.unit_weight[i] > 0.0;
    const int row = frame.treated(i) ? (matched ? 1 : 0) : (matched ? 2 : 3);
    const double jitter = detail::unit_uniform(gen);
    const double cx = left + plot_w * std::clamp(e, 0.0, 1.0);
    const double cy = top + row_h * row + row_h * (0.2 + 0.6 * jitter);
    double radius = 3.0;
    if (sized && matched) radius = std::clamp(3.0 * std::sqrt(result.unit_weight[i] / mean_w), 1.0, 12.0);
    const std::string color = matched ? "#000000" : "#9e9e9e";
    svg.circle(cx, cy, radius, color, "none", matched ? "dot matched" : "dot unmatched");
  }
  return svg.str();
}

inline void plot_jitter(const PropensityModel& model, const StudyFrame& frame, const MatchResult& result,
                        const std::string& path, std::uint64_t seed = 1) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot write '" + path + "'");
  f << render_jitter(model, frame, result, seed);
  if (!f) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

/// Love plot: absolute standardized difference per covariate before (open
/// marker) and after (filled marker), with the balance threshold drawn as a
/// dashed reference line.
inline std::string render_love(const BalanceReport& report) {
  const double row_h = 22, left = 170, right = 30, top = 30, bottom = 50, width = 640;
  const double height = top + bottom + row_h * static_cast<double>(std::max<std::size_t>(report.records.size(), 1));
  const double plot_w = width - left - right;
  double x_max = report.thresholds.std_diff_max * 1.2;
  for (const auto& r : report.records) {
    if (std::isfinite(r.std_diff_pre)) x_max = std::max(x_max, std::abs(r.std_diff_pre));
    if (std::isfinite(r.std_diff_post)) x_max = std::max(x_max, std::abs(r.std_diff_post));
  }
  x_max = std::ceil(x_max * 1.1 * 10.0) / 10.0;
  auto sx = [&](double v) { return left + plot_w * std::min(std::abs(v), x_max) / x_max; };

  SvgDocument svg(width, height);
  svg.rect(0, 0, width, height, "#ffffff");
  const double axis_y = height - bottom;
  svg.line(left, axis_y, left + plot_w, axis_y, "#000000");
  for (int k = 0; k <= 4; ++k) {
    const double v = x_max * k / 4.0;
    svg.line(sx(v), axis_y, sx(v), axis_y + 5, "#000000");
    svg.text(sx(v), axis_y + 20, SvgDocument::num(v), "middle", 11);
  }
  svg.text(left + plot_w / 2, height - 8, "Absolute Standardized Difference in Means", "middle");
  const double ref = sx(report.thresholds.std_diff_max);
  svg.line(ref, top - 10, ref, axis_y, "#c62828", 1.0, "reference", "4,3");

  for (std::size_t k = 0; k < report.records.size(); ++k) {
    const auto& r = report.records[k];
    const double y = top + row_h * (static_cast<double>(k) + 0.5);
    svg.line(left, y, left + plot_w, y, "#eeeeee");
    svg.text(left - 10, y + 4, r.name, "end");
    if (std::isfinite(r.std_diff_pre)) svg.circle(sx(r.std_diff_pre), y, 4, "#ffffff", "#000000", "marker pre");
    if (std::isfinite(r.std_diff_post)) svg.circle(sx(r.std_diff_post), y, 4, "#000000", "#000000", "marker post");
  }
  return svg.str();
}

inline void plot_love(const BalanceReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot write '" + path + "'");
  f << render_love(report);
  if (!f) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace obsdesign
