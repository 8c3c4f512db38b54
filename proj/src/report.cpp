#include "inflect/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "inflect/errors.hpp"
#include "inflect/metrics_io.hpp"

namespace inflect {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

ojson eval_json(const EvalStats& e) {
  return {{"accuracy", e.accuracy}, {"mean_confidence", e.mean_confidence}, {"mean_loss", e.mean_loss}};
}

EvalStats eval_from(const json& j) {
  return {j.at("accuracy").get<double>(), j.at("mean_confidence").get<double>(), j.at("mean_loss").get<double>()};
}

ojson strategy_json(const StrategySpec& s) {
  ojson j;
  j["strategy"] = s.name();
  j["k"] = s.k;
  j["band_source"] = to_string(s.band_source);
  j["explicit_band"] = s.explicit_band;
  j["steps"] = s.steps;
  j["learning_rate"] = s.learning_rate;
  j["batch_size"] = s.batch_size;
  j["weight_decay"] = s.weight_decay;
  j["train_head"] = s.train_head;
  ojson targets = ojson::array();
  for (LoraTarget t : s.lora.targets) targets.push_back(to_string(t));
  j["lora"] = {{"rank", s.lora.rank},
               {"alpha", s.lora.alpha},
               {"multiplier", s.lora.multiplier()},
               {"dropout", s.lora.dropout},
               {"targets", targets}};
  return j;
}

StrategySpec strategy_from(const json& j) {
  StrategySpec s = default_strategy(strategy_from_string(j.at("strategy").get<std::string>()));
  s.k = j.at("k").get<int>();
  s.band_source = band_source_from_string(j.at("band_source").get<std::string>());
  s.explicit_band = j.at("explicit_band").get<std::vector<int>>();
  s.steps = j.at("steps").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.batch_size = j.at("batch_size").get<int>();
  s.weight_decay = j.at("weight_decay").get<double>();
  s.train_head = j.at("train_head").get<bool>();
  const json& l = j.at("lora");
  s.lora.rank = l.at("rank").get<int>();
  s.lora.alpha = l.at("alpha").get<double>();
  s.lora.dropout = l.at("dropout").get<double>();
  s.lora.targets.clear();
  for (const auto& t : l.at("targets")) s.lora.targets.push_back(lora_target_from_string(t.get<std::string>()));
  return s;
}

ojson mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }
MeanStd mean_std_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

template <typename Fn>
auto guarded(const char* what, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string run_report_json(const RunReport& r) {
  ojson j;
  j["record"] = "inflect-run";
  j["run_id"] = run_id(r.regime, r.strategy.name(), r.seed);
  j["status"] = r.status;
  j["error"] = r.error;
  j["seed"] = r.seed;
  j["regime"] = to_string(r.regime);
  j["strategy"] = strategy_json(r.strategy);
  j["num_layers"] = r.num_layers;
  j["entropy_units"] = "nats";
  j["final_eval"] = eval_json(r.final_eval);
  j["initial_eval"] = eval_json(r.initial_eval);
  j["trainable_params"] = r.trainable_params;
  j["adapter_params"] = r.adapter_params;
  j["total_params"] = r.total_params;
  j["frozen_checksum_before"] = r.frozen_checksum_before;
  j["frozen_checksum_after"] = r.frozen_checksum_after;
  j["band"] = r.band;
  j["band_origin"] = r.band_origin;
  j["warnings"] = r.warnings;
  j["delta_cka"] = r.delta_cka;
  j["probes"] = {{"linear_accuracy", r.probes.linear_accuracy},
                 {"mlp_accuracy", r.probes.mlp_accuracy},
                 {"train_size", r.probes.train_size},
                 {"val_size", r.probes.val_size},
                 {"seed", r.probes.seed}};
  j["mean_entropy"] = r.diagnostics.mean_entropy();
  j["mean_activation_grad"] = r.diagnostics.mean_activation_grad();
  j["mean_param_grad"] = r.diagnostics.mean_param_grad();
  ojson steps = ojson::array();
  for (const LayerDiagnostics& d : r.diagnostics.layers()) {
    steps.push_back({{"layer", d.layer},
                     {"entropy", d.entropy},
                     {"activation_grad_norm", d.activation_grad_norm},
                     {"param_grad_norm", d.param_grad_norm}});
  }
  j["diagnostics"] = steps;
  j["train_loss"] = r.train_loss;
  j["locator"] = ojson::parse(locator_report(r.locator));
  return j.dump(2) + "\n";
}

RunReport parse_run_report(const std::string& text) {
  return guarded("run report", [&] {
    const json j = json::parse(text);
    if (j.value("record", "") != "inflect-run") throw InvalidInput("run report: not an inflect run record");
    RunReport r;
    r.status = j.at("status").get<std::string>();
    r.error = j.at("error").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.regime = regime_from_string(j.at("regime").get<std::string>());
    r.strategy = strategy_from(j.at("strategy"));
    r.num_layers = j.at("num_layers").get<int>();
    r.final_eval = eval_from(j.at("final_eval"));
    r.initial_eval = eval_from(j.at("initial_eval"));
    r.trainable_params = j.at("trainable_params").get<Index>();
    r.adapter_params = j.at("adapter_params").get<Index>();
    r.total_params = j.at("total_params").get<Index>();
    r.frozen_checksum_before = j.at("frozen_checksum_before").get<std::uint64_t>();
    r.frozen_checksum_after = j.at("frozen_checksum_after").get<std::uint64_t>();
    r.band = j.at("band").get<std::vector<int>>();
    r.band_origin = j.at("band_origin").get<std::string>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.delta_cka = j.at("delta_cka").get<std::vector<double>>();
    const json& p = j.at("probes");
    r.probes.linear_accuracy = p.at("linear_accuracy").get<std::vector<double>>();
    r.probes.mlp_accuracy = p.at("mlp_accuracy").get<std::vector<double>>();
    r.probes.train_size = p.at("train_size").get<Index>();
    r.probes.val_size = p.at("val_size").get<Index>();
    r.probes.seed = p.at("seed").get<std::uint64_t>();
    r.diagnostics = DiagnosticsLog(r.num_layers);
    const json& d = j.at("diagnostics");
    if (static_cast<int>(d.size()) != r.num_layers) throw InvalidInput("run report: diagnostics layer count mismatch");
    std::vector<std::vector<double>> ent, act, par;
    for (const auto& layer : d) {
      ent.push_back(layer.at("entropy").get<std::vector<double>>());
      act.push_back(layer.at("activation_grad_norm").get<std::vector<double>>());
      par.push_back(layer.at("param_grad_norm").get<std::vector<double>>());
    }
    const std::size_t steps = ent.empty() ? 0 : ent.front().size();
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<double> e, a, g;
      for (int l = 0; l < r.num_layers; ++l) {
        const auto li = static_cast<std::size_t>(l);
        if (ent[li].size() != steps || act[li].size() != steps || par[li].size() != steps) {
          throw InvalidInput("run report: ragged diagnostics series");
        }
        e.push_back(ent[li][s]);
        a.push_back(act[li][s]);
        g.push_back(par[li][s]);
      }
      r.diagnostics.append(e, a, g);
    }
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.locator = parse_locator_report(j.at("locator").dump());
    return r;
  });
}

std::string checkpoint_summary_json(const CheckpointSummary& s) {
  ojson j;
  j["record"] = "inflect-checkpoint";
  j["regime"] = to_string(s.regime);
  j["seed"] = s.seed;
  j["epochs"] = s.epochs;
  j["source_val"] = eval_json(s.source_val);
  j["target_val"] = eval_json(s.target_val);
  j["epoch_loss"] = s.epoch_loss;
  return j.dump(2) + "\n";
}

std::string aggregate_json(const Aggregate& a) {
  ojson j;
  j["record"] = "inflect-aggregate";
  j["partial"] = a.partial;
  j["failed_runs"] = a.failed_runs;
  ojson cells = ojson::array();
  for (const AggregateCell& c : a.cells) {
    ojson cj;
    cj["regime"] = to_string(c.regime);
    cj["strategy"] = c.strategy;
    cj["seeds"] = c.seeds;
    cj["failed"] = c.failed;
    cj["accuracy"] = mean_std_json(c.accuracy);
    cj["trainable_params"] = mean_std_json(c.trainable_params);
    cj["entropy"] = c.entropy;
    cj["activation_grad"] = c.activation_grad;
    cj["param_grad"] = c.param_grad;
    cj["delta_cka"] = c.delta_cka;
    cj["linear_probe"] = c.linear_probe;
    cj["mlp_probe"] = c.mlp_probe;
    cj["bands"] = c.bands;
    cj["band_consistent"] = c.band_consistent;
    cells.push_back(cj);
  }
  j["cells"] = cells;
  return j.dump(2) + "\n";
}

Aggregate parse_aggregate(const std::string& text) {
  return guarded("aggregate", [&] {
    const json j = json::parse(text);
    if (j.value("record", "") != "inflect-aggregate") throw InvalidInput("aggregate: not an inflect aggregate record");
    Aggregate a;
    a.partial = j.at("partial").get<bool>();
    a.failed_runs = j.at("failed_runs").get<std::vector<std::string>>();
    for (const auto& cj : j.at("cells")) {
      AggregateCell c;
      c.regime = regime_from_string(cj.at("regime").get<std::string>());
      c.strategy = cj.at("strategy").get<std::string>();
      c.seeds = cj.at("seeds").get<std::vector<std::uint64_t>>();
      c.failed = cj.at("failed").get<std::vector<std::uint64_t>>();
      c.accuracy = mean_std_from(cj.at("accuracy"));
      c.trainable_params = mean_std_from(cj.at("trainable_params"));
      c.entropy = cj.at("entropy").get<std::vector<double>>();
      c.activation_grad = cj.at("activation_grad").get<std::vector<double>>();
      c.param_grad = cj.at("param_grad").get<std::vector<double>>();
      c.delta_cka = cj.at("delta_cka").get<std::vector<double>>();
      c.linear_probe = cj.at("linear_probe").get<std::vector<double>>();
      c.mlp_probe = cj.at("mlp_probe").get<std::vector<double>>();
      c.bands = cj.at("bands").get<std::vector<std::vector<int>>>();
      c.band_consistent = cj.at("band_consistent").get<bool>();
      a.cells.push_back(std::move(c));
    }
    return a;
  });
}

std::string summary_table(const Aggregate& a) {
  auto fixed = [](double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return std::string(buf);
  };
  std::string out = "| Method | Regime | Accuracy (mean ± std) | Trainable Params | Seeds |\n";
  out += "|---|---|---|---|---|\n";
  for (const AggregateCell& c : a.cells) {
    std::string seeds;
    for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
    if (!c.failed.empty()) {
      seeds += " (failed:";
      for (std::uint64_t s : c.failed) seeds += " " + std::to_string(s);
      seeds += ")";
    }
    out += "| " + c.strategy + " | " + to_string(c.regime) + " | " + fixed(100.0 * c.accuracy.mean, 2) + " ± " +
           fixed(100.0 * c.accuracy.std, 2) + " | " + fixed(c.trainable_params.mean, 0) + " | " + seeds + " |\n";
  }
  if (a.partial) out += "\nPartial aggregate: one or more runs failed.\n";
  return out;
}

std::vector<PlotSpec> aggregate_plots(const Aggregate& a, const std::string& out_dir) {
  std::vector<PlotSpec> plots;
  for (PlotKind kind : all_plot_kinds()) {
    PlotSpec spec;
    spec.kind = kind;
    spec.output_path = (std::filesystem::path(out_dir) / (std::string(to_string(kind)) + ".svg")).string();
    for (const AggregateCell& c : a.cells) {
      if (c.seeds.empty()) continue;
      PlotSeries s;
      s.label = std::string(to_string(c.regime)) + " " + c.strategy;
      switch (kind) {
        case PlotKind::entropy_by_layer:
          s.y = c.entropy;
          break;
        case PlotKind::actgrad_by_layer:
          s.y = c.activation_grad;
          break;
        case PlotKind::paramgrad_by_layer:
          s.y = c.param_grad;
          break;
        case PlotKind::deltacka_by_layer:
          s.y = c.delta_cka;
          break;
        case PlotKind::probe_accuracy_by_layer:
          s.y = c.linear_probe;
          break;
        case PlotKind::accuracy_vs_params:
          s.x = {c.trainable_params.mean};
          s.y = {c.accuracy.mean};
          break;
      }
      spec.series.push_back(std::move(s));
    }
    if (!spec.series.empty()) plots.push_back(std::move(spec));
  }
  return plots;
}

std::vector<std::string> run_header(const RunReport& r) {
  return {"run=" + run_id(r.regime, r.strategy.name(), r.seed), "seed=" + std::to_string(r.seed),
          "regime=" + std::string(to_string(r.regime)), "strategy=" + r.strategy.name(), "status=" + r.status,
          "entropy_units=nats",
          "streams=pretrain/init,pretrain/shuffle,pretrain/dropout,calibration,finetune/shuffle,finetune/dropout,"
          "finetune/lora-init,probe"};
}

void write_run_artifacts(const std::string& dir, const RunReport& r) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_text_file((base / "report.json").string(), run_report_json(r));

  std::vector<MetricRow> rows = metric_rows(r.diagnostics);
  const long final_step = static_cast<long>(r.diagnostics.steps());
  for (std::size_t l = 0; l < r.delta_cka.size(); ++l) {
    rows.push_back({final_step, static_cast<int>(l), kMetricDeltaCka, r.delta_cka[l]});
  }
  const std::vector<std::string> header = run_header(r);
  std::ostringstream metrics;
  write_metrics_csv(metrics, rows, header);
  write_text_file((base / "metrics.csv").string(), metrics.str());

  std::ostringstream probes;
  for (const std::string& c : header) probes << "# " << c << '\n';
  write_probe_csv(probes, r.probes);
  write_text_file((base / "probes.csv").string(), probes.str());

  write_text_file((base / "locator.json").string(), locator_report(r.locator) + "\n");
}

RunReport read_run_report(const std::string& path) { return parse_run_report(read_text_file(path)); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RunFailure("cannot write '" + path + "'");
    out << content;
    if (!out.flush()) throw RunFailure("cannot write '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace inflect
