#pragma once

#include <span>
#include <vector>

#include "inflect/model.hpp"

namespace inflect {

/// Fixed-length labelled token sequences, row-major [size, seq_len].
struct Dataset {
  Index seq_len = 0;
  std::vector<int> tokens;
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
  std::span<const int> row(Index i) const {
    return {tokens.data() + i * seq_len, static_cast<std::size_t>(seq_len)};
  }
  TokenBatch batch(std::span<const Index> rows) const;
  TokenBatch slice(Index begin, Index end) const;
  std::vector<int> labels_of(std::span<const Index> rows) const;
  Dataset subset(Index begin, Index end) const;
  void push_back(std::span<const int> seq, int label);
};

/// Per-layer [CLS] vectors in eval mode: one [size, d_model] matrix per layer.
/// The model's training flag is restored afterwards.
std::vector<Matrix> cls_representations(Model& model, const Dataset& data, Index batch_size = 128);

/// Accuracy and mean max-softmax confidence in eval mode.
struct EvalStats {
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double mean_loss = 0.0;
};
EvalStats evaluate(Model& model, const Dataset& data, Index batch_size = 128);

}  // namespace inflect
