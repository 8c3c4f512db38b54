#pragma once

#include "inflect/harness.hpp"

namespace inflect::testing {

// A few-second experiment: 3 layers, width 16, sequences of 8 tokens.
inline ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.task.vocab_size = 24;
  c.task.seq_len = 8;
  c.task.motif_len = 3;
  c.task.source_train = 256;
  c.task.source_val = 64;
  c.task.target_train = 128;
  c.task.target_val = 64;
  c.model.num_layers = 3;
  c.model.num_heads = 2;
  c.model.d_model = 16;
  c.model.d_ff = 32;
  c.model.vocab_size = 24;
  c.model.max_seq_len = 9;
  c.under.source_epochs = 1;
  c.under.learning_rate = 3e-3;
  c.over.source_epochs = 3;
  c.over.learning_rate = 3e-3;
  for (StrategySpec& s : c.strategies) {
    s.steps = 6;
    s.learning_rate = 1e-3;
    s.explicit_band = {1};
  }
  c.seeds = {42, 43};
  c.locator.calibration_steps = 3;
  c.measure.pca_dim = 4;
  c.measure.cka_samples = 48;
  c.measure.probe_train = 64;
  c.measure.probe_val = 32;
  c.measure.linear_probe.epochs = 3;
  c.measure.mlp_probe.epochs = 3;
  c.measure.mlp_probe.hidden_dim = 8;
  return c;
}

}  // namespace inflect::testing
