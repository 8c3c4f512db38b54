#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inflect/autodiff.hpp"
#include "inflect/model.hpp"
#include "inflect/representation.hpp"
#include "inflect/tensor.hpp"

namespace inflect {

/// Shannon entropy in nats of one distribution, with 0·ln 0 = 0.
double row_entropy(std::span<const double> p);

/// Mean attention entropy (nats) over batch, head and query positions.
///
/// `attn` is [batch, head, query, key]. `key_mask`, when non-empty, is
/// [batch, key] with 1 for real tokens: masked keys leave the support and
/// masked query positions leave the average. Rows whose (unmasked) sum is
/// more than 1e-6 away from 1 are rejected with InvalidInput.
double attention_entropy(const Tensor& attn, std::span<const std::uint8_t> key_mask = {});

/// ||∂L/∂h||₂ over the whole (flattened) gradient of a tapped node.
/// StateError if `h` was not tapped or backward has not run.
double activation_grad_norm(const Graph& graph, Var h);

/// ||∇θ L||₂ over every gradient buffer of block `layer`, mounted adapters
/// included. Parameters without a buffer contribute 0.
double param_grad_norm(Model& model, int layer);

/// Euclidean norm with a fixed sequential summation order.
double l2_norm(std::span<const double> values);

/// Per-layer series recorded once per training step.
struct LayerDiagnostics {
  int layer = 0;
  std::vector<double> entropy;
  std::vector<double> activation_grad_norm;
  std::vector<double> param_grad_norm;
};

inline constexpr const char* kMetricEntropy = "attention_entropy";
inline constexpr const char* kMetricActivationGrad = "activation_grad_norm";
inline constexpr const char* kMetricParamGrad = "param_grad_norm";
inline constexpr const char* kMetricDeltaCka = "delta_cka";

/// Step-indexed diagnostics for every layer of one run.
class DiagnosticsLog {
 public:
  explicit DiagnosticsLog(int num_layers = 0);

  /// Records one step from a completed forward+backward in which every block
  /// output was tapped.
  void record(const ForwardTrace& trace, const Graph& graph, Model& model);
  /// Appends one step from precomputed per-layer values (each of size L).
  void append(std::span<const double> entropy, std::span<const double> act_grad, std::span<const double> param_grad);

  int num_layers() const { return static_cast<int>(layers_.size()); }
  std::size_t steps() const { return layers_.empty() ? 0 : layers_.front().entropy.size(); }
  const std::vector<LayerDiagnostics>& layers() const { return layers_; }

  // Arithmetic means over recorded steps, one value per layer.
  std::vector<double> mean_entropy() const;
  std::vector<double> mean_activation_grad() const;
  std::vector<double> mean_param_grad() const;

 private:
  std::vector<LayerDiagnostics> layers_;
};

double mean_of(std::span<const double> v);

}  // namespace inflect
