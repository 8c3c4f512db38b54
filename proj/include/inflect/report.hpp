#pragma once

#include <string>
#include <vector>

#include "inflect/harness.hpp"
#include "inflect/plot.hpp"

namespace inflect {

/// Structured-text (JSON) run record. Doubles are written with round-trip
/// precision, so parse_run_report(run_report_json(r)) reproduces every value.
std::string run_report_json(const RunReport& report);
RunReport parse_run_report(const std::string& text);

std::string checkpoint_summary_json(const CheckpointSummary& summary);

std::string aggregate_json(const Aggregate& aggregate);
Aggregate parse_aggregate(const std::string& text);

/// Markdown table: method × regime, accuracy mean ± std, trainable params.
std::string summary_table(const Aggregate& aggregate);

/// One plot per kind with a series per (regime, strategy) cell, written as
/// `<out_dir>/<kind>.svg`. Probe plots use the linear probe.
std::vector<PlotSpec> aggregate_plots(const Aggregate& aggregate, const std::string& out_dir);

/// '#' metadata lines shared by CSV artifacts of one run.
std::vector<std::string> run_header(const RunReport& report);

/// Writes report.json, metrics.csv, probes.csv and locator.json under `dir`
/// (created if missing).
void write_run_artifacts(const std::string& dir, const RunReport& report);

/// Reads a report.json file.
RunReport read_run_report(const std::string& path);

std::string read_text_file(const std::string& path);
/// Writes through a temporary file and renames, so readers never observe a
/// partially written artifact.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace inflect
