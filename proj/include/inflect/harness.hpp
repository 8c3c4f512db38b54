#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inflect/dataset.hpp"
#include "inflect/diagnostics.hpp"
#include "inflect/lora.hpp"
#include "inflect/model.hpp"
#include "inflect/probes.hpp"
#include "inflect/ski.hpp"
#include "inflect/task.hpp"

namespace inflect {

enum class Regime { under, over };
const char* to_string(Regime r);
Regime regime_from_string(const std::string& s);

/// Source-domain pretraining budget.
struct RegimeSpec {
  Regime regime = Regime::under;
  int source_epochs = 1;
  double learning_rate = 2e-4;
  int batch_size = 32;
  double weight_decay = 0.01;

  void validate() const;
};
RegimeSpec default_regime(Regime r);  // UNDER: 1 epoch, OVER: 8 epochs

enum class Strategy { shallow_top_k, full, selective_lora, lora_everywhere };
const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

enum class BandSource { greedy, ski_maxima, explicit_list };
const char* to_string(BandSource b);
BandSource band_source_from_string(const std::string& s);

struct StrategySpec {
  Strategy strategy = Strategy::shallow_top_k;
  int k = 2;                      // shallow only
  LoraSpec lora;                  // layers are filled from the band or all layers
  BandSource band_source = BandSource::greedy;
  std::vector<int> explicit_band;  // used by explicit_list and as the locator fallback
  int steps = 300;
  double learning_rate = 2e-5;
  int batch_size = 16;
  double weight_decay = 0.01;
  bool train_head = true;

  void validate(int num_layers) const;
  std::string name() const { return to_string(strategy); }
};
StrategySpec default_strategy(Strategy s);

/// Locator settings and the classifier-only calibration phase that feeds it.
struct LocatorSettings {
  int calibration_steps = 20;
  double alpha_mix = kDefaultAlphaMix;
  double grad_threshold = kDefaultGradThreshold;
  int expansion = kDefaultExpansion;
};

/// Measurement budgets shared by every run.
struct MeasureSettings {
  int pca_dim = 16;
  Index cka_samples = 512;
  Index probe_train = 1000;
  Index probe_val = 512;
  ProbeConfig linear_probe{};
  ProbeConfig mlp_probe{ProbeKind::mlp};
};

struct ExperimentConfig {
  TaskSpec task;
  ModelConfig model;
  RegimeSpec under = default_regime(Regime::under);
  RegimeSpec over = default_regime(Regime::over);
  std::vector<StrategySpec> strategies{default_strategy(Strategy::shallow_top_k), default_strategy(Strategy::full),
                                       default_strategy(Strategy::selective_lora),
                                       default_strategy(Strategy::lora_everywhere)};
  std::vector<std::uint64_t> seeds{42, 43, 44};
  LocatorSettings locator;
  MeasureSettings measure;

  void validate() const;
  const RegimeSpec& regime(Regime r) const { return r == Regime::under ? under : over; }
};

/// Summary of a pretrained checkpoint on held-out source data.
struct CheckpointSummary {
  Regime regime = Regime::under;
  std::uint64_t seed = 0;
  int epochs = 0;
  EvalStats source_val;
  EvalStats target_val;              // zero-shot
  std::vector<double> epoch_loss;    // mean training loss per epoch
};

struct Pretrained {
  Model model;
  CheckpointSummary summary;
};

/// Trains `model` on the source split for `regime.source_epochs` epochs.
/// Snapshots are taken after each epoch listed in `snapshot_epochs`.
/// Divergence raises RunFailure.
struct PretrainOutput {
  Pretrained final;
  std::map<int, Pretrained> snapshots;
};
PretrainOutput pretrain(Model model, const TaskData& task, const RegimeSpec& regime, std::uint64_t seed,
                        const std::vector<int>& snapshot_epochs = {});

/// UNDER and OVER checkpoints for one seed. When both regimes share lr, batch
/// and weight decay, UNDER is the OVER trajectory's snapshot after UNDER's
/// epoch count (identical by construction).
std::pair<Pretrained, Pretrained> pretrain_pair(const ExperimentConfig& config, const TaskData& task,
                                                std::uint64_t seed);

/// Everything produced by one fine-tuning run.
struct RunReport {
  std::string status = "completed";  // or "failed"
  std::string error;
  std::uint64_t seed = 0;
  Regime regime = Regime::under;
  StrategySpec strategy;
  int num_layers = 0;
  DiagnosticsLog diagnostics;
  std::vector<double> train_loss;     // per step
  std::vector<double> delta_cka;      // per layer
  std::vector<std::string> warnings;
  ProbeReport probes;
  EvalStats final_eval;               // target val after fine-tuning
  EvalStats initial_eval;             // target val before fine-tuning
  Index trainable_params = 0;
  Index adapter_params = 0;
  Index total_params = 0;
  std::uint64_t frozen_checksum_before = 0;
  std::uint64_t frozen_checksum_after = 0;
  SkiResult locator;                  // from the calibration profile
  std::vector<int> band;              // layers that received adapters (selective / everywhere)
  std::string band_origin;            // "greedy", "ski-maxima", "explicit", "fallback-explicit", "all-layers" or ""

  bool completed() const { return status == "completed"; }
};

/// Per-layer entropy and activation-gradient profiles averaged over a short
/// classifier-only phase on a copy of `checkpoint`.
DiagnosticsLog calibrate(const Model& checkpoint, const Dataset& target_train, int steps, int batch_size,
                         double learning_rate, double weight_decay, std::uint64_t seed);

/// Fine-tunes a copy of `checkpoint` and measures it. Never throws for run
/// errors: the report is marked failed instead.
RunReport finetune(const Model& checkpoint, const TaskData& task, Regime regime, const StrategySpec& strategy,
                   std::uint64_t seed, const LocatorSettings& locator = {}, const MeasureSettings& measure = {});

/// Mean and sample standard deviation (n - 1). Zero std for a single value.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& values);

struct AggregateCell {
  Regime regime = Regime::under;
  std::string strategy;
  std::vector<std::uint64_t> seeds;   // completed runs
  std::vector<std::uint64_t> failed;
  MeanStd accuracy;
  MeanStd trainable_params;
  // Per-layer means over completed seeds.
  std::vector<double> entropy, activation_grad, param_grad, delta_cka, linear_probe, mlp_probe;
  std::vector<std::vector<int>> bands;  // locator band per completed seed
  bool band_consistent = true;
};

struct Aggregate {
  std::vector<AggregateCell> cells;   // sorted by (regime, strategy order)
  bool partial = false;
  std::vector<std::string> failed_runs;
};

/// Deterministic fold over run reports sorted by (regime, strategy, seed).
/// InvalidInput when some (regime, strategy) cell has fewer than two runs.
Aggregate multi_seed(const std::vector<RunReport>& reports);

struct ExperimentResult {
  std::vector<CheckpointSummary> checkpoints;
  std::vector<RunReport> runs;
  std::optional<Aggregate> aggregate;
};

/// Called after each checkpoint and each run so callers can persist artifacts
/// incrementally.
struct ExperimentHooks {
  std::function<void(const Pretrained&)> on_checkpoint;
  std::function<void(const RunReport&)> on_run;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks = {});

std::string run_id(Regime regime, const std::string& strategy, std::uint64_t seed);

}  // namespace inflect
