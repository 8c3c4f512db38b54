// inflect: command-line front end for the transfer experiment.
//
// Exit codes: 0 success, 1 run failure, 2 usage or config error. Errors are
// reported on stderr as one JSON object {"error": kind, "message": ..., "command": ...}.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "inflect/config.hpp"
#include "inflect/errors.hpp"
#include "inflect/harness.hpp"
#include "inflect/metrics_io.hpp"
#include "inflect/plot.hpp"
#include "inflect/report.hpp"
#include "inflect/ski.hpp"

namespace fs = std::filesystem;
using namespace inflect;

namespace {

constexpr int kExitRunFailure = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "inflect-out";
};

/// Usage problems detected after parsing (bad names, missing inputs).
struct UsageError : InvalidInput {
  using InvalidInput::InvalidInput;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON); defaults apply when omitted");
  cmd->add_option("--seed", c.seed, "Root seed (default: first seed of the config)");
  cmd->add_option("--out-dir", c.out_dir, "Directory for artifacts")->capture_default_str();
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  cfg.validate();
  return cfg;
}

std::uint64_t seed_of(const Common& c, const ExperimentConfig& cfg) { return c.seed ? *c.seed : cfg.seeds.front(); }

void write_manifest(const Common& c, const std::string& command, std::uint64_t seed, const ExperimentConfig& cfg,
                    const std::vector<std::string>& artifacts) {
  nlohmann::ordered_json j;
  j["record"] = "inflect-manifest";
  j["command"] = command;
  j["seed"] = seed;
  j["artifacts"] = artifacts;
  j["config"] = nlohmann::ordered_json::parse(config_to_json(cfg));
  write_text_file((fs::path(c.out_dir) / (command + ".manifest.json")).string(), j.dump(2) + "\n");
}

std::string checkpoint_path(const std::string& out_dir, Regime r, std::uint64_t seed) {
  return (fs::path(out_dir) / "checkpoints" / (std::string(to_string(r)) + "_seed" + std::to_string(seed) + ".ckpt"))
      .string();
}

std::string run_dir(const std::string& out_dir, const RunReport& r) {
  return (fs::path(out_dir) / "runs" / run_id(r.regime, r.strategy.name(), r.seed)).string();
}

void save_pretrained(const std::string& out_dir, const Pretrained& p, std::vector<std::string>& artifacts) {
  const std::string path = checkpoint_path(out_dir, p.summary.regime, p.summary.seed);
  fs::create_directories(fs::path(path).parent_path());
  save_checkpoint(p.model, path);
  const std::string summary = fs::path(path).replace_extension(".json").string();
  write_text_file(summary, checkpoint_summary_json(p.summary));
  artifacts.push_back(path);
  artifacts.push_back(summary);
}

std::vector<std::string> run_artifacts(const std::string& dir) {
  std::vector<std::string> out;
  for (const char* name : {"report.json", "metrics.csv", "probes.csv", "locator.json"}) {
    out.push_back((fs::path(dir) / name).string());
  }
  return out;
}

int cmd_pretrain(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = seed_of(c, cfg);
  const TaskData task = generate_task(cfg.task);
  auto [under, over] = pretrain_pair(cfg, task, seed);
  std::vector<std::string> artifacts;
  save_pretrained(c.out_dir, under, artifacts);
  save_pretrained(c.out_dir, over, artifacts);
  write_manifest(c, "pretrain", seed, cfg, artifacts);
  for (const Pretrained* p : {&under, &over}) {
    std::cout << to_string(p->summary.regime) << " seed " << seed << ": source acc " << p->summary.source_val.accuracy
              << ", mean max-softmax " << p->summary.source_val.mean_confidence << "\n";
  }
  return 0;
}

int cmd_finetune(const Common& c, const std::string& regime_name, const std::string& strategy_name,
                 const std::string& checkpoint) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = seed_of(c, cfg);
  const Regime regime = regime_from_string(regime_name);
  const auto it = std::find_if(cfg.strategies.begin(), cfg.strategies.end(),
                               [&](const StrategySpec& s) { return s.name() == strategy_name; });
  if (it == cfg.strategies.end()) throw UsageError("strategy '" + strategy_name + "' is not configured");
  const std::string ckpt = checkpoint.empty() ? checkpoint_path(c.out_dir, regime, seed) : checkpoint;
  if (!fs::exists(ckpt)) throw UsageError("checkpoint '" + ckpt + "' not found (run pretrain first)");
  const Model model = load_checkpoint(ckpt);
  const TaskData task = generate_task(cfg.task);
  const RunReport report = finetune(model, task, regime, *it, seed, cfg.locator, cfg.measure);
  const std::string dir = run_dir(c.out_dir, report);
  write_run_artifacts(dir, report);
  write_manifest(c, "finetune", seed, cfg, run_artifacts(dir));
  if (!report.completed()) throw RunFailure(report.error);
  std::cout << run_id(regime, it->name(), seed) << ": target accuracy " << report.final_eval.accuracy
            << ", trainable params " << report.trainable_params << ", band " << band_string(report.band) << "\n";
  return 0;
}

int cmd_locate(const Common& c, const std::string& metrics, const std::string& method, std::optional<double> alpha,
               std::optional<double> threshold, std::optional<int> s) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = seed_of(c, cfg);
  if (method != "greedy" && method != "ski-maxima") throw UsageError("--method must be greedy or ski-maxima");
  std::ifstream in(metrics);
  if (!in) throw UsageError("cannot read metrics CSV '" + metrics + "'");
  const std::vector<MetricRow> rows = read_metrics_csv(in);
  const std::vector<double> h = layer_profile(rows, kMetricEntropy);
  const std::vector<double> g = layer_profile(rows, kMetricActivationGrad);
  const double a = alpha.value_or(cfg.locator.alpha_mix);
  const int radius = s.value_or(cfg.locator.expansion);
  const SkiResult r = method == "greedy"
                          ? locate_band_greedy(h, g, threshold.value_or(cfg.locator.grad_threshold), radius, a)
                          : locate_band_maxima(h, g, a, radius);
  fs::create_directories(c.out_dir);
  const std::string path = (fs::path(c.out_dir) / "locator.json").string();
  write_text_file(path, locator_report(r) + "\n");
  write_manifest(c, "locate", seed, cfg, {path});
  std::cout << band_string(r.band) << "\n";
  return 0;
}

int cmd_probe(const Common& c, const std::string& checkpoint) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = seed_of(c, cfg);
  if (!fs::exists(checkpoint)) throw UsageError("checkpoint '" + checkpoint + "' not found");
  Model model = load_checkpoint(checkpoint);
  const TaskData task = generate_task(cfg.task);
  const Dataset train = task.target_train.subset(0, cfg.measure.probe_train);
  const Dataset val = task.target_val.subset(0, cfg.measure.probe_val);
  const std::vector<Matrix> train_reps = cls_representations(model, train);
  const std::vector<Matrix> val_reps = cls_representations(model, val);
  ProbeConfig lin = cfg.measure.linear_probe, mlp = cfg.measure.mlp_probe;
  lin.kind = ProbeKind::linear;
  mlp.kind = ProbeKind::mlp;
  lin.seed = mlp.seed = derive_seed(seed, "probe");
  const ProbeReport report = probe_sweep(train_reps, train.labels, val_reps, val.labels, lin, mlp);
  fs::create_directories(c.out_dir);
  std::ostringstream csv;
  csv << "# checkpoint=" << checkpoint << "\n# seed=" << seed << "\n";
  write_probe_csv(csv, report);
  const std::string path = (fs::path(c.out_dir) / "probes.csv").string();
  write_text_file(path, csv.str());
  write_manifest(c, "probe", seed, cfg, {path});
  for (std::size_t l = 0; l < report.linear_accuracy.size(); ++l) {
    std::cout << "layer " << l << ": linear " << report.linear_accuracy[l] << ", mlp " << report.mlp_accuracy[l]
              << "\n";
  }
  return 0;
}

std::vector<RunReport> collect_reports(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("reports directory '" + dir + "' not found");
  std::vector<std::string> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RunReport> reports;
  for (const std::string& p : paths) reports.push_back(read_run_report(p));
  return reports;
}

std::vector<std::string> write_aggregate(const std::string& out_dir, const Aggregate& agg) {
  fs::create_directories(out_dir);
  const std::string json_path = (fs::path(out_dir) / "aggregate.json").string();
  const std::string md_path = (fs::path(out_dir) / "summary.md").string();
  write_text_file(json_path, aggregate_json(agg));
  write_text_file(md_path, summary_table(agg));
  return {json_path, md_path};
}

int cmd_aggregate(const Common& c, const std::string& reports_dir) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = seed_of(c, cfg);
  const std::string dir = reports_dir.empty() ? (fs::path(c.out_dir) / "runs").string() : reports_dir;
  const Aggregate agg = multi_seed(collect_reports(dir));
  write_manifest(c, "aggregate", seed, cfg, write_aggregate(c.out_dir, agg));
  std::cout << summary_table(agg);
  return agg.partial ? kExitRunFailure : 0;
}

std::vector<std::string> write_plots(const std::string& out_dir, const std::vector<PlotSpec>& plots) {
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const PlotSpec& p : plots) {
    render_plot(p);
    paths.push_back(p.output_path);
  }
  return paths;
}

int cmd_plot(const Common& c, const std::string& aggregate_path, const std::vector<std::string>& series,
             const std::string& kind_name) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = seed_of(c, cfg);
  const std::string plot_dir = (fs::path(c.out_dir) / "plots").string();
  std::vector<PlotSpec> plots;
  if (!series.empty()) {
    // Per-layer profiles straight from metrics CSVs: LABEL=PATH.
    if (kind_name.empty()) throw UsageError("--series needs --kind");
    const PlotKind kind = plot_kind_from_string(kind_name);
    const char* metric = nullptr;
    switch (kind) {
      case PlotKind::entropy_by_layer:
        metric = kMetricEntropy;
        break;
      case PlotKind::actgrad_by_layer:
        metric = kMetricActivationGrad;
        break;
      case PlotKind::paramgrad_by_layer:
        metric = kMetricParamGrad;
        break;
      case PlotKind::deltacka_by_layer:
        metric = kMetricDeltaCka;
        break;
      default:
        throw UsageError("--series supports entropy, actgrad, paramgrad and deltacka plots");
    }
    PlotSpec spec;
    spec.kind = kind;
    spec.output_path = (fs::path(plot_dir) / (std::string(to_string(kind)) + ".svg")).string();
    for (const std::string& s : series) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--series expects LABEL=PATH, got '" + s + "'");
      std::ifstream in(s.substr(eq + 1));
      if (!in) throw UsageError("cannot read metrics CSV '" + s.substr(eq + 1) + "'");
      spec.series.push_back({s.substr(0, eq), layer_profile(read_metrics_csv(in), metric), {}});
    }
    plots.push_back(std::move(spec));
  } else {
    const std::string path = aggregate_path.empty() ? (fs::path(c.out_dir) / "aggregate.json").string() : aggregate_path;
    if (!fs::exists(path)) throw UsageError("aggregate '" + path + "' not found (run aggregate first)");
    plots = aggregate_plots(parse_aggregate(read_text_file(path)), plot_dir);
    if (!kind_name.empty()) {
      const PlotKind kind = plot_kind_from_string(kind_name);
      std::erase_if(plots, [&](const PlotSpec& p) { return p.kind != kind; });
    }
  }
  const std::vector<std::string> written = write_plots(plot_dir, plots);
  write_manifest(c, "plot", seed, cfg, written);
  for (const std::string& p : written) std::cout << p << "\n";
  return 0;
}

int cmd_run(const Common& c) {
  ExperimentConfig cfg = load(c);
  if (c.seed) cfg.seeds = {*c.seed};
  std::vector<std::string> artifacts;
  ExperimentHooks hooks;
  hooks.on_checkpoint = [&](const Pretrained& p) {
    save_pretrained(c.out_dir, p, artifacts);
    std::cout << "checkpoint " << to_string(p.summary.regime) << " seed " << p.summary.seed << ": source acc "
              << p.summary.source_val.accuracy << ", mean max-softmax " << p.summary.source_val.mean_confidence
              << std::endl;
  };
  hooks.on_run = [&](const RunReport& r) {
    const std::string dir = run_dir(c.out_dir, r);
    write_run_artifacts(dir, r);
    for (const std::string& a : run_artifacts(dir)) artifacts.push_back(a);
    std::cout << run_id(r.regime, r.strategy.name(), r.seed) << ": " << r.status << ", target accuracy "
              << r.final_eval.accuracy << ", band " << band_string(r.band) << std::endl;
  };
  const ExperimentResult result = run_experiment(cfg, hooks);
  bool failed = false;
  for (const RunReport& r : result.runs) failed = failed || !r.completed();
  if (result.aggregate) {
    for (const std::string& a : write_aggregate(c.out_dir, *result.aggregate)) artifacts.push_back(a);
    for (const std::string& a : write_plots((fs::path(c.out_dir) / "plots").string(),
                                            aggregate_plots(*result.aggregate, (fs::path(c.out_dir) / "plots").string()))) {
      artifacts.push_back(a);
    }
    std::cout << summary_table(*result.aggregate);
  }
  write_manifest(c, "run", cfg.seeds.front(), cfg, artifacts);
  return failed ? kExitRunFailure : 0;
}

void print_error(const std::string& command, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  j["command"] = command;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inflect: layer-wise fine-tuning diagnostics and selective LoRA injection"};
  app.require_subcommand(1);

  Common common;
  auto* pretrain = app.add_subcommand("pretrain", "Pretrain UNDER and OVER checkpoints on the source task");
  add_common(pretrain, common);

  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune a checkpoint with one strategy and record diagnostics");
  add_common(finetune_cmd, common);
  std::string regime = "OVER", strategy, checkpoint;
  finetune_cmd->add_option("--regime", regime, "UNDER or OVER")->capture_default_str();
  finetune_cmd->add_option("--strategy", strategy, "shallow-top-k | full | selective-lora | lora-everywhere")
      ->required();
  finetune_cmd->add_option("--checkpoint", checkpoint,
                           "Checkpoint file (default: <out-dir>/checkpoints/<REGIME>_seed<N>.ckpt)");

  auto* locate = app.add_subcommand("locate", "Locate the inflection band from a metrics CSV");
  add_common(locate, common);
  std::string metrics, method = "greedy";
  std::optional<double> alpha, threshold;
  std::optional<int> radius;
  locate->add_option("--metrics", metrics, "Metrics CSV (step,layer,metric,value)")->required();
  locate->add_option("--method", method, "greedy or ski-maxima")->capture_default_str();
  locate->add_option("--alpha", alpha, "SKI mixing weight in [0, 1]");
  locate->add_option("--threshold", threshold, "Normalised gradient threshold (greedy)");
  locate->add_option("--s", radius, "Band expansion radius");

  auto* probe = app.add_subcommand("probe", "Layer-wise linear and MLP probes on a checkpoint");
  add_common(probe, common);
  std::string probe_checkpoint;
  probe->add_option("--checkpoint", probe_checkpoint, "Checkpoint file")->required();

  auto* aggregate = app.add_subcommand("aggregate", "Aggregate run reports across seeds");
  add_common(aggregate, common);
  std::string reports_dir;
  aggregate->add_option("--reports", reports_dir, "Directory searched for report.json (default: <out-dir>/runs)");

  auto* plot = app.add_subcommand("plot", "Render SVG plots from an aggregate or metrics CSVs");
  add_common(plot, common);
  std::string aggregate_path, kind;
  std::vector<std::string> series;
  plot->add_option("--aggregate", aggregate_path, "aggregate.json (default: <out-dir>/aggregate.json)");
  plot->add_option("--kind", kind, "Plot kind (default: all kinds available)");
  plot->add_option("--series", series, "LABEL=metrics.csv, repeatable (per-layer kinds only)");

  auto* run = app.add_subcommand("run", "Full pipeline: pretrain, fine-tune every strategy, aggregate, plot");
  add_common(run, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(argc > 1 ? argv[1] : "", "usage", e.what());
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (pretrain->parsed()) return cmd_pretrain(common);
    if (finetune_cmd->parsed()) return cmd_finetune(common, regime, strategy, checkpoint);
    if (locate->parsed()) return cmd_locate(common, metrics, method, alpha, threshold, radius);
    if (probe->parsed()) return cmd_probe(common, probe_checkpoint);
    if (aggregate->parsed()) return cmd_aggregate(common, reports_dir);
    if (plot->parsed()) return cmd_plot(common, aggregate_path, series, kind);
    if (run->parsed()) return cmd_run(common);
  } catch (const UsageError& e) {
    print_error(command, "usage", e.what());
    return kExitUsage;
  } catch (const InvalidInput& e) {
    // Config problems and malformed inputs.
    print_error(command, e.kind(), e.what());
    return kExitUsage;
  } catch (const Error& e) {
    print_error(command, e.kind(), e.what());
    return kExitRunFailure;
  } catch (const std::exception& e) {
    print_error(command, "run-failure", e.what());
    return kExitRunFailure;
  }
  return kExitUsage;
}
