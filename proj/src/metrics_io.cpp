#include "inflect/metrics_io.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace inflect {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<MetricRow> metric_rows(const DiagnosticsLog& log) {
  std::vector<MetricRow> rows;
  for (std::size_t s = 0; s < log.steps(); ++s) {
    for (const LayerDiagnostics& l : log.layers()) {
      const long step = static_cast<long>(s) + 1;
      rows.push_back({step, l.layer, kMetricEntropy, l.entropy[s]});
      rows.push_back({step, l.layer, kMetricActivationGrad, l.activation_grad_norm[s]});
      rows.push_back({step, l.layer, kMetricParamGrad, l.param_grad_norm[s]});
    }
  }
  return rows;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows, std::span<const std::string> comments) {
  for (const std::string& c : comments) out << "# " << c << '\n';
  out << kMetricsCsvHeader << '\n';
  for (const MetricRow& r : rows) {
    out << r.step << ',' << r.layer << ',' << r.metric << ',' << format_double(r.value) << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kMetricsCsvHeader) throw InvalidInput("metrics csv: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string step, layer, metric, value;
    if (!std::getline(ss, step, ',') || !std::getline(ss, layer, ',') || !std::getline(ss, metric, ',') ||
        !std::getline(ss, value)) {
      throw InvalidInput("metrics csv: malformed line " + std::to_string(lineno));
    }
    try {
      rows.push_back({std::stol(step), std::stoi(layer), metric, std::stod(value)});
    } catch (const std::exception&) {
      throw InvalidInput("metrics csv: bad number on line " + std::to_string(lineno));
    }
  }
  if (!header_seen) throw InvalidInput("metrics csv: missing header");
  return rows;
}

std::vector<double> layer_profile(std::span<const MetricRow> rows, std::string_view metric) {
  std::map<int, std::pair<double, long>> acc;
  for (const MetricRow& r : rows) {
    if (r.metric != metric) continue;
    if (r.layer < 0) throw InvalidInput("metrics csv: negative layer index");
    auto& [s, n] = acc[r.layer];
    s += r.value;
    ++n;
  }
  if (acc.empty()) throw InvalidInput("metrics csv: no rows for metric '" + std::string(metric) + "'");
  const int L = acc.rbegin()->first + 1;
  std::vector<double> out(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    auto it = acc.find(l);
    if (it == acc.end()) throw InvalidInput("metrics csv: layer " + std::to_string(l) + " missing for " + std::string(metric));
    out[static_cast<std::size_t>(l)] = it->second.first / static_cast<double>(it->second.second);
  }
  return out;
}

}  // namespace inflect
