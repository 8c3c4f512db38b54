#include "inflect/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "inflect/errors.hpp"
#include "inflect/report.hpp"

namespace inflect {

const char* to_string(PlotKind k) {
  switch (k) {
    case PlotKind::entropy_by_layer:
      return "entropy-by-layer";
    case PlotKind::actgrad_by_layer:
      return "actgrad-by-layer";
    case PlotKind::paramgrad_by_layer:
      return "paramgrad-by-layer";
    case PlotKind::deltacka_by_layer:
      return "deltacka-by-layer";
    case PlotKind::probe_accuracy_by_layer:
      return "probe-accuracy-by-layer";
    case PlotKind::accuracy_vs_params:
      return "accuracy-vs-params";
  }
  return "?";
}

const std::vector<PlotKind>& all_plot_kinds() {
  static const std::vector<PlotKind> kinds{PlotKind::entropy_by_layer,   PlotKind::actgrad_by_layer,
                                           PlotKind::paramgrad_by_layer, PlotKind::deltacka_by_layer,
                                           PlotKind::probe_accuracy_by_layer, PlotKind::accuracy_vs_params};
  return kinds;
}

PlotKind plot_kind_from_string(const std::string& s) {
  for (PlotKind k : all_plot_kinds()) {
    if (s == to_string(k)) return k;
  }
  throw InvalidInput("unknown plot kind '" + s + "'");
}

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 80, kRight = 190, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

const char* y_label(PlotKind k) {
  switch (k) {
    case PlotKind::entropy_by_layer:
      return "attention entropy (nats)";
    case PlotKind::actgrad_by_layer:
      return "activation grad norm";
    case PlotKind::paramgrad_by_layer:
      return "parameter grad norm";
    case PlotKind::deltacka_by_layer:
      return "delta CKA";
    case PlotKind::probe_accuracy_by_layer:
    case PlotKind::accuracy_vs_params:
      return "accuracy";
  }
  return "";
}

struct Range {
  double lo, hi;
};

/// Data range padded by 5% on both sides; a constant series gets a symmetric
/// pad around its value.
Range padded(double lo, double hi) {
  if (hi - lo <= 0.0) {
    const double pad = std::abs(lo) > 0.0 ? 0.1 * std::abs(lo) : 1.0;
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void validate(const PlotSpec& spec) {
  if (spec.series.empty()) throw InvalidInput("plot: no series");
  const bool scatter = spec.kind == PlotKind::accuracy_vs_params;
  const std::size_t n = spec.series.front().y.size();
  for (const PlotSeries& s : spec.series) {
    if (s.y.empty()) throw InvalidInput("plot: series '" + s.label + "' is empty");
    for (double v : s.y) {
      if (!std::isfinite(v)) throw InvalidInput("plot: series '" + s.label + "' has a non-finite value");
    }
    if (scatter) {
      if (s.x.size() != s.y.size()) throw InvalidInput("plot: series '" + s.label + "' has mismatched x/y lengths");
      for (double v : s.x) {
        if (!std::isfinite(v) || v <= 0.0) throw InvalidInput("plot: log-scaled x must be positive and finite");
      }
    } else {
      if (!s.x.empty()) throw InvalidInput("plot: per-layer series '" + s.label + "' must not carry x values");
      if (s.y.size() != n) {
        throw InvalidInput("plot: series '" + s.label + "' has " + std::to_string(s.y.size()) + " values, expected " +
                           std::to_string(n));
      }
    }
  }
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  validate(spec);
  const bool scatter = spec.kind == PlotKind::accuracy_vs_params;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;

  double ymin = spec.series.front().y.front(), ymax = ymin;
  for (const PlotSeries& s : spec.series) {
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  const Range yr = padded(ymin, ymax);

  // x in data units: layer index, or log10(params).
  Range xr{0.0, 0.0};
  if (scatter) {
    double lo = std::log10(spec.series.front().x.front()), hi = lo;
    for (const PlotSeries& s : spec.series) {
      for (double v : s.x) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
    }
    xr = {std::floor(lo), std::ceil(hi)};
    if (xr.hi <= xr.lo) xr.hi = xr.lo + 1.0;
  } else {
    const double n = static_cast<double>(spec.series.front().y.size());
    xr = n > 1 ? Range{0.0, n - 1.0} : Range{-0.5, 0.5};
  }
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  const std::string title = spec.title.empty() ? to_string(spec.kind) : spec.title;
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";

  // Axes.
  svg += "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
         num(kTop + ph) + "\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(kTop + ph) +
         "\"/>\n";
  svg += "</g>\n";

  // Y ticks: five evenly spaced.
  svg += "<g class=\"y-ticks\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double y = py(v);
    svg += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(y) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + tick_label(v) +
           "</text>\n";
  }
  svg += "</g>\n";

  // X ticks: every layer, or every decade.
  svg += "<g class=\"x-ticks\">\n";
  if (scatter) {
    for (double d = xr.lo; d <= xr.hi + 1e-9; d += 1.0) {
      const double x = px(d);
      svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(x) + "\" y2=\"" +
             num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
      svg += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">1e" +
             std::to_string(static_cast<int>(d)) + "</text>\n";
    }
  } else {
    const std::size_t n = spec.series.front().y.size();
    for (std::size_t l = 0; l < n; ++l) {
      const double x = px(static_cast<double>(l));
      svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(x) + "\" y2=\"" +
             num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
      svg += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
             std::to_string(l) + "</text>\n";
    }
  }
  svg += "</g>\n";

  const std::string xlabel = scatter ? "trainable params (log scale)" : "layer";
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 15) + "\" text-anchor=\"middle\">" + xlabel +
         "</text>\n";
  svg += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num(kTop + ph / 2) + ")\">" + y_label(spec.kind) + "</text>\n";

  // Series.
  for (std::size_t i = 0; i < spec.series.size(); ++i) {
    const PlotSeries& s = spec.series[i];
    const std::string color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    svg += "<g class=\"series\" data-label=\"" + escape(s.label) + "\">\n";
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < s.y.size(); ++j) {
      const double x = scatter ? px(std::log10(s.x[j])) : px(static_cast<double>(j));
      pts.emplace_back(x, py(s.y[j]));
    }
    if (!scatter && pts.size() > 1) {
      svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"";
      for (std::size_t j = 0; j < pts.size(); ++j) svg += (j ? " " : "") + num(pts[j].first) + "," + num(pts[j].second);
      svg += "\"/>\n";
    }
    for (const auto& [x, y] : pts) {
      svg += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    svg += "</g>\n";
  }

  // Legend.
  svg += "<g class=\"legend\">\n";
  for (std::size_t i = 0; i < spec.series.size(); ++i) {
    const std::string color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    const double x = kLeft + pw + 15;
    svg += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 8) + "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
    svg += "<text x=\"" + num(x + 18) + "\" y=\"" + num(y + 2) + "\">" + escape(spec.series[i].label) + "</text>\n";
  }
  svg += "</g>\n";
  svg += "</svg>\n";
  return svg;
}

void render_plot(const PlotSpec& spec) {
  if (spec.output_path.empty()) throw InvalidInput("plot: output path is empty");
  write_text_file(spec.output_path, render_svg(spec));
}

}  // namespace inflect
