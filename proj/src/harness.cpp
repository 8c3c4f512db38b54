#include "inflect/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "inflect/optim.hpp"
#include "inflect/representation.hpp"

namespace inflect {

const char* to_string(Regime r) { return r == Regime::under ? "UNDER" : "OVER"; }

Regime regime_from_string(const std::string& s) {
  if (s == "UNDER" || s == "under") return Regime::under;
  if (s == "OVER" || s == "over") return Regime::over;
  throw InvalidInput("unknown regime '" + s + "' (expected UNDER or OVER)");
}

void RegimeSpec::validate() const {
  if (source_epochs < 1) throw InvalidInput("regime: source_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidInput("regime: learning_rate must be positive");
  if (batch_size < 1) throw InvalidInput("regime: batch_size must be >= 1");
  if (weight_decay < 0.0) throw InvalidInput("regime: weight_decay must be >= 0");
}

RegimeSpec default_regime(Regime r) {
  RegimeSpec spec;
  spec.regime = r;
  spec.source_epochs = r == Regime::under ? 1 : 8;
  return spec;
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::shallow_top_k:
      return "shallow-top-k";
    case Strategy::full:
      return "full";
    case Strategy::selective_lora:
      return "selective-lora";
    case Strategy::lora_everywhere:
      return "lora-everywhere";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  for (Strategy v : {Strategy::shallow_top_k, Strategy::full, Strategy::selective_lora, Strategy::lora_everywhere}) {
    if (s == to_string(v)) return v;
  }
  throw InvalidInput("unknown strategy '" + s + "'");
}

const char* to_string(BandSource b) {
  switch (b) {
    case BandSource::greedy:
      return "greedy";
    case BandSource::ski_maxima:
      return "ski-maxima";
    case BandSource::explicit_list:
      return "explicit";
  }
  return "?";
}

BandSource band_source_from_string(const std::string& s) {
  for (BandSource v : {BandSource::greedy, BandSource::ski_maxima, BandSource::explicit_list}) {
    if (s == to_string(v)) return v;
  }
  throw InvalidInput("unknown band source '" + s + "'");
}

void StrategySpec::validate(int num_layers) const {
  if (strategy == Strategy::shallow_top_k && (k < 0 || k > num_layers)) {
    throw InvalidInput("strategy: k must be in [0, " + std::to_string(num_layers) + "]");
  }
  if (steps < 0) throw InvalidInput("strategy: steps must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidInput("strategy: learning_rate must be positive");
  if (batch_size < 1) throw InvalidInput("strategy: batch_size must be >= 1");
  if (weight_decay < 0.0) throw InvalidInput("strategy: weight_decay must be >= 0");
  if (lora.rank < 1) throw InvalidInput("strategy: lora rank must be >= 1");
  if (lora.dropout < 0.0 || lora.dropout >= 1.0) throw InvalidInput("strategy: lora dropout must be in [0, 1)");
  if (lora.targets.empty()) throw InvalidInput("strategy: lora targets must not be empty");
  for (int l : explicit_band) {
    if (l < 0 || l >= num_layers) throw InvalidInput("strategy: explicit band layer out of range");
  }
  if (strategy == Strategy::selective_lora && band_source == BandSource::explicit_list && explicit_band.empty()) {
    throw InvalidInput("strategy: explicit band source needs a non-empty explicit_band");
  }
}

StrategySpec default_strategy(Strategy s) {
  StrategySpec spec;
  spec.strategy = s;
  return spec;
}

void ExperimentConfig::validate() const {
  task.validate();
  model.validate();
  under.validate();
  over.validate();
  if (under.regime != Regime::under || over.regime != Regime::over) {
    throw InvalidInput("regimes: under/over sections carry the wrong regime tag");
  }
  if (over.source_epochs <= under.source_epochs) throw InvalidInput("regimes: OVER epochs must exceed UNDER epochs");
  if (task.vocab_size > model.vocab_size) throw InvalidInput("task vocab_size exceeds model vocab_size");
  if (task.num_classes != model.num_classes) throw InvalidInput("task num_classes must equal model num_classes");
  if (task.seq_len + 1 > model.max_seq_len) throw InvalidInput("task seq_len + [CLS] exceeds model max_seq_len");
  if (strategies.empty()) throw InvalidInput("at least one strategy is required");
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    strategies[i].validate(model.num_layers);
    for (std::size_t j = 0; j < i; ++j) {
      if (strategies[j].name() == strategies[i].name()) {
        throw InvalidInput("duplicate strategy '" + strategies[i].name() + "'");
      }
    }
  }
  if (seeds.empty()) throw InvalidInput("at least one seed is required");
  if (locator.calibration_steps < 1) throw InvalidInput("locator: calibration_steps must be >= 1");
  if (locator.alpha_mix < 0.0 || locator.alpha_mix > 1.0) throw InvalidInput("locator: alpha_mix must be in [0, 1]");
  if (!(locator.grad_threshold > 0.0 && locator.grad_threshold < 1.0)) {
    throw InvalidInput("locator: grad_threshold must be in (0, 1)");
  }
  if (locator.expansion < 0) throw InvalidInput("locator: expansion must be >= 0");
  if (measure.pca_dim < 1 || measure.pca_dim > model.d_model) throw InvalidInput("measure: pca_dim out of range");
  if (measure.cka_samples < 2 || measure.cka_samples > task.target_val) {
    throw InvalidInput("measure: cka_samples must be in [2, target_val]");
  }
  if (measure.probe_train < 2 || measure.probe_train > task.target_train) {
    throw InvalidInput("measure: probe_train must be in [2, target_train]");
  }
  if (measure.probe_val < 1 || measure.probe_val > task.target_val) {
    throw InvalidInput("measure: probe_val must be in [1, target_val]");
  }
}

namespace {

/// Cycles through shuffled epochs of a dataset.
class BatchSampler {
 public:
  BatchSampler(Index size, Index batch, Rng rng) : size_(size), batch_(batch), rng_(rng) { reshuffle(); }

  std::vector<Index> next() {
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(batch_));
    while (static_cast<Index>(rows.size()) < batch_) {
      if (pos_ == order_.size()) reshuffle();
      rows.push_back(order_[pos_++]);
    }
    return rows;
  }

 private:
  void reshuffle() {
    order_.resize(static_cast<std::size_t>(size_));
    std::iota(order_.begin(), order_.end(), Index{0});
    rng_.shuffle(order_);
    pos_ = 0;
  }

  Index size_;
  Index batch_;
  Rng rng_;
  std::vector<Index> order_;
  std::size_t pos_ = 0;
};

}  // namespace

PretrainOutput pretrain(Model model, const TaskData& task, const RegimeSpec& regime, std::uint64_t seed,
                        const std::vector<int>& snapshot_epochs) {
  regime.validate();
  const Dataset& data = task.source_train;
  if (data.size() < 1) throw InvalidInput("pretrain: empty source dataset");
  Rng root(seed);
  Rng shuffle = root.stream("pretrain/shuffle");
  Rng dropout = root.stream("pretrain/dropout");
  model.set_strategy(Freezing::full);
  model.train(true);
  AdamW opt(model.parameters(), {regime.learning_rate, 0.9, 0.999, 1e-8, regime.weight_decay});

  PretrainOutput out{{model, {}}, {}};
  std::vector<double> epoch_loss;
  const Index n = data.size();
  const Index batch = std::min<Index>(regime.batch_size, n);
  auto summarize = [&](int epochs) {
    Pretrained p{model, {}};
    p.model.train(false);
    p.summary.regime = regime.regime;
    p.summary.seed = seed;
    p.summary.epochs = epochs;
    p.summary.epoch_loss = epoch_loss;
    p.summary.source_val = evaluate(p.model, task.source_val);
    p.summary.target_val = evaluate(p.model, task.target_val);
    return p;
  };

  long step = 0;
  for (int epoch = 1; epoch <= regime.source_epochs; ++epoch) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    shuffle.shuffle(order);
    double total = 0.0;
    Index batches = 0;
    for (Index begin = 0; begin < n; begin += batch) {
      const Index end = std::min(n, begin + batch);
      std::vector<Index> rows(order.begin() + begin, order.begin() + end);
      ++step;
      try {
        Graph g;
        ForwardTrace tr = model.forward(g, data.batch(rows), {false, &dropout});
        Var loss = cross_entropy(tr.logits, data.labels_of(rows));
        opt.zero_grad();
        g.backward(loss);
        opt.step();
        total += loss.value()[0];
        ++batches;
        for (Param* p : model.parameters()) {
          if (!p->value.all_finite()) throw NumericError("parameter '" + p->name + "' became non-finite");
        }
      } catch (const NumericError& e) {
        std::string dump = "pretrain diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": " + e.what() + "; epoch losses so far:";
        for (double l : epoch_loss) dump += " " + std::to_string(l);
        throw RunFailure(dump);
      }
    }
    epoch_loss.push_back(total / static_cast<double>(batches));
    if (std::find(snapshot_epochs.begin(), snapshot_epochs.end(), epoch) != snapshot_epochs.end()) {
      out.snapshots.emplace(epoch, summarize(epoch));
    }
  }
  out.final = summarize(regime.source_epochs);
  return out;
}

std::pair<Pretrained, Pretrained> pretrain_pair(const ExperimentConfig& config, const TaskData& task,
                                                std::uint64_t seed) {
  const Model fresh(config.model, derive_seed(seed, "pretrain/init"));
  const RegimeSpec& u = config.under;
  const RegimeSpec& o = config.over;
  const bool shared = u.learning_rate == o.learning_rate && u.batch_size == o.batch_size &&
                      u.weight_decay == o.weight_decay && u.source_epochs < o.source_epochs;
  if (shared) {
    PretrainOutput run = pretrain(fresh, task, o, seed, {u.source_epochs});
    Pretrained under = std::move(run.snapshots.at(u.source_epochs));
    under.summary.regime = Regime::under;
    return {std::move(under), std::move(run.final)};
  }
  PretrainOutput a = pretrain(fresh, task, u, seed);
  PretrainOutput b = pretrain(fresh, task, o, seed);
  return {std::move(a.final), std::move(b.final)};
}

DiagnosticsLog calibrate(const Model& checkpoint, const Dataset& target_train, int steps, int batch_size,
                         double learning_rate, double weight_decay, std::uint64_t seed) {
  Model model = checkpoint;
  model.set_strategy(Freezing::frozen_backbone);
  model.train(true);
  Rng root(seed);
  BatchSampler sampler(target_train.size(), batch_size, root.stream("calibration/shuffle"));
  Rng dropout = root.stream("calibration/dropout");
  AdamW opt(model.parameters(), {learning_rate, 0.9, 0.999, 1e-8, weight_decay});
  DiagnosticsLog log(model.num_layers());
  for (int step = 0; step < steps; ++step) {
    const std::vector<Index> rows = sampler.next();
    Graph g;
    ForwardTrace tr = model.forward(g, target_train.batch(rows), {true, &dropout});
    Var loss = cross_entropy(tr.logits, target_train.labels_of(rows));
    opt.zero_grad();
    g.backward(loss);
    log.record(tr, g, model);
    opt.step();
  }
  return log;
}

namespace {

std::vector<int> all_layers(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<int> normalized_band(std::vector<int> band) {
  std::sort(band.begin(), band.end());
  band.erase(std::unique(band.begin(), band.end()), band.end());
  return band;
}

}  // namespace

RunReport finetune(const Model& checkpoint, const TaskData& task, Regime regime, const StrategySpec& strategy,
                   std::uint64_t seed, const LocatorSettings& locator, const MeasureSettings& measure) {
  RunReport report;
  report.seed = seed;
  report.regime = regime;
  report.strategy = strategy;
  report.num_layers = checkpoint.num_layers();
  report.diagnostics = DiagnosticsLog(checkpoint.num_layers());
  try {
    const int L = checkpoint.num_layers();
    strategy.validate(L);
    Rng root(seed);

    // Diagnose before injecting: profiles from a classifier-only phase.
    DiagnosticsLog calib = calibrate(checkpoint, task.target_train, locator.calibration_steps, strategy.batch_size,
                                     strategy.learning_rate, strategy.weight_decay, derive_seed(seed, "calibration"));
    const std::vector<double> h = calib.mean_entropy();
    const std::vector<double> gact = calib.mean_activation_grad();
    std::optional<std::string> locator_error;
    try {
      if (strategy.band_source == BandSource::ski_maxima) {
        report.locator = locate_band_maxima(h, gact, locator.alpha_mix, locator.expansion);
      } else {
        report.locator =
            locate_band_greedy(h, gact, locator.grad_threshold, locator.expansion, locator.alpha_mix);
      }
    } catch (const DegenerateInput& e) {
      locator_error = e.what();
      report.locator = SkiResult{};
      report.locator.entropy = h;
      report.locator.activation_grad = gact;
      report.locator.flags.push_back("degenerate-input");
    }

    Model model = checkpoint;
    model.train(true);
    switch (strategy.strategy) {
      case Strategy::shallow_top_k:
        model.set_strategy(Freezing::shallow_top_k, strategy.k);
        break;
      case Strategy::full:
        model.set_strategy(Freezing::full);
        break;
      case Strategy::selective_lora:
      case Strategy::lora_everywhere: {
        std::vector<int> band;
        if (strategy.strategy == Strategy::lora_everywhere) {
          band = all_layers(L);
          report.band_origin = "all-layers";
        } else if (strategy.band_source == BandSource::explicit_list) {
          band = strategy.explicit_band;
          report.band_origin = "explicit";
        } else if (locator_error) {
          if (strategy.explicit_band.empty()) {
            throw DegenerateInput(*locator_error + " (no explicit fallback band configured)");
          }
          band = strategy.explicit_band;
          report.band_origin = "fallback-explicit";
          report.warnings.push_back("locator degenerate (" + *locator_error + "); using explicit band");
        } else {
          band = report.locator.band;
          report.band_origin = to_string(strategy.band_source);
        }
        LoraSpec spec = strategy.lora;
        spec.layers = normalized_band(band);
        report.band = spec.layers;
        mount_lora(model, spec, derive_seed(seed, "finetune/lora-init"));
        break;
      }
    }
    if (!strategy.train_head) {
      for (Param* p : model.head_parameters()) p->trainable = false;
    }
    report.trainable_params = model.count_trainable();
    report.total_params = model.count_total();
    for (const Param* p : model.adapter_parameters()) report.adapter_params += p->size();
    report.frozen_checksum_before = model.frozen_checksum();

    const Dataset cka_data = task.target_val.subset(0, measure.cka_samples);
    const std::vector<Matrix> before = cls_representations(model, cka_data);
    report.initial_eval = evaluate(model, task.target_val);

    BatchSampler sampler(task.target_train.size(), strategy.batch_size, root.stream("finetune/shuffle"));
    Rng dropout = root.stream("finetune/dropout");
    AdamW opt(model.parameters(), {strategy.learning_rate, 0.9, 0.999, 1e-8, strategy.weight_decay});
    model.train(true);
    for (int step = 1; step <= strategy.steps; ++step) {
      const std::vector<Index> rows = sampler.next();
      Graph g;
      ForwardTrace tr = model.forward(g, task.target_train.batch(rows), {true, &dropout});
      Var loss = cross_entropy(tr.logits, task.target_train.labels_of(rows));
      opt.zero_grad();
      g.backward(loss);
      report.diagnostics.record(tr, g, model);
      report.train_loss.push_back(loss.value()[0]);
      opt.step();
    }
    model.train(false);
    report.frozen_checksum_after = model.frozen_checksum();
    if (report.frozen_checksum_after != report.frozen_checksum_before) {
      throw StateError("frozen parameters changed during fine-tuning");
    }

    const std::vector<Matrix> after = cls_representations(model, cka_data);
    report.delta_cka.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      PcaBasis<double> basis = shared_pca_basis(before[static_cast<std::size_t>(l)],
                                                after[static_cast<std::size_t>(l)], measure.pca_dim);
      if (!basis.warning.empty()) report.warnings.push_back("layer " + std::to_string(l) + ": " + basis.warning);
      const Matrix pb = basis.project(before[static_cast<std::size_t>(l)]);
      const Matrix pa = basis.project(after[static_cast<std::size_t>(l)]);
      report.delta_cka[static_cast<std::size_t>(l)] = 1.0 - linear_cka(pb, pa);
    }

    const Dataset probe_train = task.target_train.subset(0, measure.probe_train);
    const Dataset probe_val = task.target_val.subset(0, measure.probe_val);
    const std::vector<Matrix> train_reps = cls_representations(model, probe_train);
    const std::vector<Matrix> val_reps = cls_representations(model, probe_val);
    ProbeConfig lin = measure.linear_probe;
    ProbeConfig mlp = measure.mlp_probe;
    lin.kind = ProbeKind::linear;
    mlp.kind = ProbeKind::mlp;
    lin.seed = mlp.seed = derive_seed(seed, "probe");
    report.probes = probe_sweep(train_reps, probe_train.labels, val_reps, probe_val.labels, lin, mlp);

    report.final_eval = evaluate(model, task.target_val);
  } catch (const Error& e) {
    report.status = "failed";
    report.error = std::string(e.kind()) + ": " + e.what();
  }
  return report;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

std::string run_id(Regime regime, const std::string& strategy, std::uint64_t seed) {
  return std::string(to_string(regime)) + "_" + strategy + "_seed" + std::to_string(seed);
}

Aggregate multi_seed(const std::vector<RunReport>& reports) {
  // Sorted run order: regime, then strategy in canonical order, then seed.
  auto strategy_rank = [](const std::string& s) {
    for (int i = 0; i < 4; ++i) {
      if (s == to_string(static_cast<Strategy>(i))) return i;
    }
    return 4;
  };
  std::vector<const RunReport*> sorted;
  for (const RunReport& r : reports) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [&](const RunReport* a, const RunReport* b) {
    const auto ka = std::make_tuple(static_cast<int>(a->regime), strategy_rank(a->strategy.name()), a->strategy.name(),
                                    a->seed);
    const auto kb = std::make_tuple(static_cast<int>(b->regime), strategy_rank(b->strategy.name()), b->strategy.name(),
                                    b->seed);
    return ka < kb;
  });

  Aggregate agg;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    const RunReport& first = *sorted[i];
    AggregateCell cell;
    cell.regime = first.regime;
    cell.strategy = first.strategy.name();
    std::vector<double> acc, params;
    std::vector<std::vector<double>> ent, act, par, cka, lin, mlp;
    while (j < sorted.size() && sorted[j]->regime == cell.regime && sorted[j]->strategy.name() == cell.strategy) {
      const RunReport& r = *sorted[j++];
      if (!r.completed()) {
        cell.failed.push_back(r.seed);
        agg.failed_runs.push_back(run_id(r.regime, cell.strategy, r.seed));
        continue;
      }
      cell.seeds.push_back(r.seed);
      acc.push_back(r.final_eval.accuracy);
      params.push_back(static_cast<double>(r.trainable_params));
      ent.push_back(r.diagnostics.mean_entropy());
      act.push_back(r.diagnostics.mean_activation_grad());
      par.push_back(r.diagnostics.mean_param_grad());
      cka.push_back(r.delta_cka);
      lin.push_back(r.probes.linear_accuracy);
      mlp.push_back(r.probes.mlp_accuracy);
      cell.bands.push_back(r.locator.band);
    }
    if (cell.seeds.size() + cell.failed.size() < 2) {
      throw InvalidInput("multi_seed: cell " + std::string(to_string(cell.regime)) + "/" + cell.strategy +
                         " needs runs from at least two seeds");
    }
    cell.accuracy = mean_std(acc);
    cell.trainable_params = mean_std(params);
    auto layer_mean = [](const std::vector<std::vector<double>>& rows) {
      std::vector<double> out;
      if (rows.empty()) return out;
      out.assign(rows.front().size(), 0.0);
      for (const auto& row : rows) {
        if (row.size() != out.size()) throw InvalidInput("multi_seed: runs disagree on layer count");
        for (std::size_t l = 0; l < row.size(); ++l) out[l] += row[l];
      }
      for (double& v : out) v /= static_cast<double>(rows.size());
      return out;
    };
    cell.entropy = layer_mean(ent);
    cell.activation_grad = layer_mean(act);
    cell.param_grad = layer_mean(par);
    cell.delta_cka = layer_mean(cka);
    cell.linear_probe = layer_mean(lin);
    cell.mlp_probe = layer_mean(mlp);
    for (const auto& b : cell.bands) cell.band_consistent = cell.band_consistent && b == cell.bands.front();
    if (!cell.failed.empty()) agg.partial = true;
    agg.cells.push_back(std::move(cell));
    i = j;
  }
  return agg;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks) {
  config.validate();
  ExperimentResult result;
  const TaskData task = generate_task(config.task);
  for (std::uint64_t seed : config.seeds) {
    std::optional<std::pair<Pretrained, Pretrained>> pair;
    std::string failure;
    try {
      pair = pretrain_pair(config, task, seed);
    } catch (const Error& e) {
      failure = std::string(e.kind()) + ": " + e.what();
    }
    for (Regime regime : {Regime::under, Regime::over}) {
      const Pretrained* ckpt = nullptr;
      if (pair) {
        ckpt = regime == Regime::under ? &pair->first : &pair->second;
        result.checkpoints.push_back(ckpt->summary);
        if (hooks.on_checkpoint) hooks.on_checkpoint(*ckpt);
      }
      for (const StrategySpec& s : config.strategies) {
        RunReport report;
        if (ckpt) {
          report = finetune(ckpt->model, task, regime, s, seed, config.locator, config.measure);
        } else {
          report.status = "failed";
          report.error = failure;
          report.seed = seed;
          report.regime = regime;
          report.strategy = s;
          report.num_layers = config.model.num_layers;
          report.diagnostics = DiagnosticsLog(config.model.num_layers);
        }
        if (hooks.on_run) hooks.on_run(report);
        result.runs.push_back(std::move(report));
      }
    }
  }
  if (config.seeds.size() >= 2) result.aggregate = multi_seed(result.runs);
  return result;
}

}  // namespace inflect
