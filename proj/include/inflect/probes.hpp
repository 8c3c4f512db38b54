#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inflect/tensor.hpp"

namespace inflect {

enum class ProbeKind { linear, mlp };
const char* to_string(ProbeKind k);

struct ProbeConfig {
  ProbeKind kind = ProbeKind::linear;
  int hidden_dim = 64;  // mlp only
  double dropout = 0.1;  // mlp only
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 3e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 42;
};

/// Features are standardised with train-split statistics before training.
struct ProbeSplit {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix val_x;
  std::vector<int> val_y;
};

/// A trained linear or one-hidden-layer (ReLU) MLP classifier.
struct Probe {
  ProbeKind kind = ProbeKind::linear;
  Vector<double> mean, inv_std;
  RowMatrix<double> w1;
  Vector<double> b1;
  RowMatrix<double> w2;  // mlp only
  Vector<double> b2;

  std::vector<int> predict(const Matrix& x) const;
  double accuracy(const Matrix& x, std::span<const int> y) const;
};

struct ProbeResult {
  Probe probe;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

/// Trains with AdamW (decoupled weight decay, fixed lr) on shuffled
/// mini-batches. Deterministic for a fixed seed. InvalidInput when fewer than
/// two classes appear in the training labels.
ProbeResult train_probe(const ProbeSplit& data, const ProbeConfig& config);

inline constexpr std::string_view kProbeCsvHeader = "layer,kind,accuracy,seed";

struct ProbeReport {
  std::vector<double> linear_accuracy;  // per layer
  std::vector<double> mlp_accuracy;     // per layer
  Index train_size = 0;
  Index val_size = 0;
  std::uint64_t seed = 0;
};

/// One linear and one MLP probe per layer on the given representations.
ProbeReport probe_sweep(std::span<const Matrix> train_reps, std::span<const int> train_y,
                        std::span<const Matrix> val_reps, std::span<const int> val_y, ProbeConfig linear_config,
                        ProbeConfig mlp_config);

void write_probe_csv(std::ostream& out, const ProbeReport& report);

}  // namespace inflect
