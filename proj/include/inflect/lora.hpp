#pragma once

#include <cstdint>
#include <vector>

#include "inflect/autodiff.hpp"
#include "inflect/model.hpp"

namespace inflect {

struct LoraSpec {
  int rank = 4;
  double alpha = 16.0;
  double dropout = 0.05;
  std::vector<LoraTarget> targets{LoraTarget::query, LoraTarget::key, LoraTarget::value};
  std::vector<int> layers;

  /// Effective multiplier applied to B·A: alpha / rank.
  double multiplier() const { return alpha / static_cast<double>(rank); }
  /// Adapter parameter count for a square d_model projection.
  Index parameter_count(int d_model) const;
};

/// Mounts zero-initialised adapters on the listed (layer, target) pairs and
/// freezes the backbone (classifier head stays trainable). A is drawn from
/// U(-1/sqrt(d_in), 1/sqrt(d_in)); B is zero, so the model output is
/// unchanged. Throws InvalidInput for a bad layer or rank and Conflict when a
/// pair already carries an adapter or the multiplier differs from mounted ones.
void mount_lora(Model& model, const LoraSpec& spec, std::uint64_t seed);

/// x·Wᵀ (+ bias) + multiplier · (dropout(x)·Aᵀ)·Bᵀ with W [out, in],
/// A [rank, in], B [out, rank]. `bias` may be an invalid Var. Dropout applies
/// only when `rng` is non-null and `dropout` > 0.
Var adapted_projection(Var x, Var w, Var bias, Var a, Var b, double multiplier, double dropout, Rng* rng);

/// Folds every adapter into its base weight (W += multiplier·B·A) and removes
/// the adapters. Throws StateError when nothing is mounted or when the model
/// is in training mode with adapter dropout active.
void merge_lora(Model& model);

}  // namespace inflect
