#pragma once

#include <string>
#include <vector>

namespace inflect {

enum class PlotKind {
  entropy_by_layer,
  actgrad_by_layer,
  paramgrad_by_layer,
  deltacka_by_layer,
  probe_accuracy_by_layer,
  accuracy_vs_params,
};
const char* to_string(PlotKind k);
PlotKind plot_kind_from_string(const std::string& s);
const std::vector<PlotKind>& all_plot_kinds();

/// Per-layer values (`x` empty), or (x, y) points for accuracy-vs-params.
struct PlotSeries {
  std::string label;
  std::vector<double> y;
  std::vector<double> x;
};

struct PlotSpec {
  PlotKind kind = PlotKind::entropy_by_layer;
  std::vector<PlotSeries> series;
  std::string title;
  std::string output_path;
};

/// Self-contained SVG with axes, per-layer ticks and a legend. Byte-identical
/// for identical input. InvalidInput when `spec` has no series, per-layer
/// series differ in length, a scatter series has mismatched x/y, a value is
/// non-finite, or a log-scaled x is not positive.
std::string render_svg(const PlotSpec& spec);

/// render_svg written to spec.output_path.
void render_plot(const PlotSpec& spec);

}  // namespace inflect
