#pragma once

#include <string>

#include "inflect/harness.hpp"

namespace inflect {

/// Parses a JSON experiment config. Every section and key is optional and
/// falls back to the defaults; unknown keys, wrong types and an empty or
/// malformed document raise InvalidInput. The result is validated.
///
///   {
///     "task":     {"vocab_size", "seq_len", "num_classes", "family", "motif_len",
///                  "substitution_rate", "label_correlation", "source_train",
///                  "source_val", "target_train", "target_val", "seed"},
///     "model":    {"num_layers", "num_heads", "d_model", "d_ff", "vocab_size",
///                  "max_seq_len", "num_classes", "dropout", "norm", "layer_norm_eps"},
///     "regimes":  {"UNDER": {"source_epochs", "learning_rate", "batch_size", "weight_decay"},
///                  "OVER":  {...}},
///     "strategies": [{"strategy", "k", "band_source", "explicit_band", "steps",
///                     "learning_rate", "batch_size", "weight_decay", "train_head",
///                     "lora": {"rank", "alpha", "dropout", "targets"}}],
///     "seeds":    [42, 43, 44],
///     "locator":  {"calibration_steps", "alpha_mix", "grad_threshold", "expansion"},
///     "measure":  {"pca_dim", "cka_samples", "probe_train", "probe_val",
///                  "linear_probe": {...}, "mlp_probe": {...}}
///   }
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON with every field spelled out; parse_config(to_json(c))
/// reproduces c.
std::string config_to_json(const ExperimentConfig& config);

}  // namespace inflect
