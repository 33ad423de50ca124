#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "permutopt/harness.hpp"

namespace permutopt {

namespace {

constexpr double kWidth = 760;
constexpr double kHeight = 440;
constexpr double kLeft = 80;
constexpr double kRight = 200;
constexpr double kTop = 40;
constexpr double kBottom = 60;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v, const char* format = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

struct Axis {
  bool log = false;
  double lo = 0.0;  // in transformed units
  double hi = 1.0;

  double transform(double v) const { return log ? std::log10(v) : v; }
};

Axis make_axis(const std::vector<const std::vector<double>*>& data, bool log, const std::string& name) {
  Axis axis;
  axis.log = log;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* values : data) {
    for (double v : *values) {
      if (!std::isfinite(v)) throw ParameterError("emit_svg: non-finite value on the " + name + " axis");
      if (log && v <= 0.0) continue;
      lo = std::min(lo, axis.transform(v));
      hi = std::max(hi, axis.transform(v));
    }
  }
  if (!(lo <= hi)) throw ParameterError("emit_svg: no positive values for the log-scaled " + name + " axis");
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  axis.lo = lo;
  axis.hi = hi;
  return axis;
}

std::vector<double> ticks(const Axis& axis) {
  std::vector<double> t;
  if (axis.log) {
    for (double d = std::ceil(axis.lo); d <= std::floor(axis.hi); d += 1.0) t.push_back(d);
    if (t.size() >= 2 && t.size() <= 8) return t;
    t.clear();
  }
  for (int i = 0; i <= 4; ++i) t.push_back(axis.lo + (axis.hi - axis.lo) * i / 4.0);
  return t;
}

}  // namespace

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string emit_svg(const PlotSpec& spec) {
  if (spec.series.empty()) throw ParameterError("emit_svg: plot has no series");
  std::vector<const std::vector<double>*> xs;
  std::vector<const std::vector<double>*> ys;
  for (const auto& s : spec.series) {
    if (s.x.empty()) throw ParameterError("emit_svg: series '" + s.label + "' is empty");
    if (s.x.size() != s.y.size()) {
      throw ParameterError("emit_svg: series '" + s.label + "' has " + std::to_string(s.x.size()) + " x and " +
                           std::to_string(s.y.size()) + " y values");
    }
    xs.push_back(&s.x);
    ys.push_back(&s.y);
  }
  const Axis ax = make_axis(xs, spec.log_x, "x");
  const Axis ay = make_axis(ys, spec.log_y, "y");
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kTop, y1 = kHeight - kBottom;
  auto px = [&](double t) { return x0 + (t - ax.lo) / (ax.hi - ax.lo) * (x1 - x0); };
  auto py = [&](double t) { return y1 - (t - ay.lo) / (ay.hi - ay.lo) * (y1 - y0); };
  // Nonpositive values on a log axis sit on the lower edge.
  auto tx = [&](double v) { return ax.log && v <= 0.0 ? ax.lo : ax.transform(v); };
  auto ty = [&](double v) { return ay.log && v <= 0.0 ? ay.lo : ay.transform(v); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth, "%.0f") + "\" height=\"" +
         num(kHeight, "%.0f") + "\" viewBox=\"0 0 " + num(kWidth, "%.0f") + " " + num(kHeight, "%.0f") + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth, "%.0f") + "\" height=\"" + num(kHeight, "%.0f") +
         "\" fill=\"white\"/>\n";
  svg += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  if (!spec.title.empty()) {
    svg += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
           xml_escape(spec.title) + "</text>\n";
  }
  svg += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y1) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) +
         "\" stroke=\"black\"/>\n";

  for (double t : ticks(ax)) {
    const double x = px(t);
    const double label = ax.log ? std::pow(10.0, t) : t;
    svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x) + "\" y2=\"" + num(y1 + 5) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(x) + "\" y=\"" + num(y1 + 18) + "\" text-anchor=\"middle\">" + num(label, "%.3g") +
           "</text>\n";
  }
  for (double t : ticks(ay)) {
    const double y = py(t);
    const double label = ay.log ? std::pow(10.0, t) : t;
    svg += "<line x1=\"" + num(x0 - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(x0 - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(label, "%.3g") +
           "</text>\n";
  }
  svg += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 18) + "\" text-anchor=\"middle\">" +
         xml_escape(spec.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num((y0 + y1) / 2) + ")\">" + xml_escape(spec.y_label) + "</text>\n";

  for (std::size_t i = 0; i < spec.series.size(); ++i) {
    const auto& s = spec.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (k) svg += ' ';
      svg += num(px(tx(s.x[k]))) + "," + num(py(ty(s.y[k])));
    }
    svg += "\"/>\n";
    const double ly = y0 + 10 + 20.0 * static_cast<double>(i);
    svg += "<line x1=\"" + num(x1 + 16) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(x1 + 40) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(x1 + 46) + "\" y=\"" + num(ly + 4) + "\">" + xml_escape(s.label) + "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace permutopt
