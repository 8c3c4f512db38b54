#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inflect/diagnostics.hpp"

namespace inflect {

/// Column header of the metrics CSV. Lines starting with '#' before it carry
/// run metadata (seed, units) and are skipped by readers.
inline constexpr std::string_view kMetricsCsvHeader = "step,layer,metric,value";

struct MetricRow {
  long step = 0;
  int layer = 0;
  std::string metric;
  double value = 0.0;
  bool operator==(const MetricRow&) const = default;
};

/// Shortest-round-trip-safe decimal ("%.17g").
std::string format_double(double v);

/// One row per (step, layer, metric); steps are numbered from 1.
std::vector<MetricRow> metric_rows(const DiagnosticsLog& log);

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows, std::span<const std::string> comments = {});
std::vector<MetricRow> read_metrics_csv(std::istream& in);

/// Arithmetic mean over steps of `metric`, one value per layer (0..max layer).
/// Throws InvalidInput if some layer has no sample.
std::vector<double> layer_profile(std::span<const MetricRow> rows, std::string_view metric);

}  // namespace inflect
