#include "inflect/diagnostics.hpp"

#include <cmath>

namespace inflect {

double row_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double l2_norm(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double attention_entropy(const Tensor& attn, std::span<const std::uint8_t> key_mask) {
  if (attn.rank() != 4) throw InvalidInput("attention_entropy: expected [batch, head, query, key], got " + shape_string(attn.shape()));
  const Index B = attn.dim(0), H = attn.dim(1), Q = attn.dim(2), K = attn.dim(3);
  const bool masked = !key_mask.empty();
  if (masked && static_cast<Index>(key_mask.size()) != B * K) throw InvalidInput("attention_entropy: mask must be [batch, key]");
  if (masked && Q != K) throw InvalidInput("attention_entropy: masking needs self-attention (query == key)");

  std::vector<double> row(static_cast<std::size_t>(K));
  double total = 0.0;
  Index rows = 0;
  const double* data = attn.values().data();
  for (Index b = 0; b < B; ++b) {
    for (Index h = 0; h < H; ++h) {
      for (Index q = 0; q < Q; ++q) {
        if (masked && !key_mask[static_cast<std::size_t>(b * K + q)]) continue;
        const double* r = data + ((b * H + h) * Q + q) * K;
        std::size_t n = 0;
        double sum = 0.0;
        for (Index k = 0; k < K; ++k) {
          if (masked && !key_mask[static_cast<std::size_t>(b * K + k)]) continue;
          if (r[k] < 0.0 || !std::isfinite(r[k])) throw InvalidInput("attention_entropy: negative or non-finite weight");
          row[n++] = r[k];
          sum += r[k];
        }
        if (std::abs(sum - 1.0) > 1e-6) {
          throw InvalidInput("attention_entropy: row sums to " + std::to_string(sum) + ", not a distribution");
        }
        total += row_entropy(std::span<const double>(row.data(), n));
        ++rows;
      }
    }
  }
  if (rows == 0) throw InvalidInput("attention_entropy: no unmasked rows");
  return total / static_cast<double>(rows);
}

double activation_grad_norm(const Graph& graph, Var h) {
  if (!graph.tapped(h)) throw StateError("activation_grad_norm: block output was not tapped");
  const Tensor g = graph.grad(h);
  return l2_norm(std::span<const double>(g.values().data(), static_cast<std::size_t>(g.size())));
}

double param_grad_norm(Model& model, int layer) {
  double s = 0.0;
  for (Param* p : model.layer_parameters(layer)) {
    if (!p->value.has_grad()) continue;
    for (double v : p->value.grad()) s += v * v;
  }
  return std::sqrt(s);
}

DiagnosticsLog::DiagnosticsLog(int num_layers) {
  for (int l = 0; l < num_layers; ++l) layers_.push_back(LayerDiagnostics{l, {}, {}, {}});
}

void DiagnosticsLog::append(std::span<const double> entropy, std::span<const double> act_grad,
                            std::span<const double> param_grad) {
  const std::size_t L = layers_.size();
  if (entropy.size() != L || act_grad.size() != L || param_grad.size() != L) {
    throw InvalidInput("diagnostics: expected one value per layer");
  }
  for (std::size_t l = 0; l < L; ++l) {
    layers_[l].entropy.push_back(entropy[l]);
    layers_[l].activation_grad_norm.push_back(act_grad[l]);
    layers_[l].param_grad_norm.push_back(param_grad[l]);
  }
}

void DiagnosticsLog::record(const ForwardTrace& trace, const Graph& graph, Model& model) {
  const int L = num_layers();
  if (static_cast<int>(trace.attention.size()) != L || static_cast<int>(trace.block_outputs.size()) != L) {
    throw InvalidInput("diagnostics: trace layer count does not match the log");
  }
  std::vector<double> h(L), a(L), p(L);
  for (int l = 0; l < L; ++l) {
    h[l] = attention_entropy(trace.attention[l]);
    a[l] = activation_grad_norm(graph, trace.block_outputs[l]);
    p[l] = param_grad_norm(model, l);
  }
  append(h, a, p);
}

std::vector<double> DiagnosticsLog::mean_entropy() const {
  std::vector<double> out;
  for (const auto& l : layers_) out.push_back(mean_of(l.entropy));
  return out;
}

std::vector<double> DiagnosticsLog::mean_activation_grad() const {
  std::vector<double> out;
  for (const auto& l : layers_) out.push_back(mean_of(l.activation_grad_norm));
  return out;
}

std::vector<double> DiagnosticsLog::mean_param_grad() const {
  std::vector<double> out;
  for (const auto& l : layers_) out.push_back(mean_of(l.param_grad_norm));
  return out;
}

}  // namespace inflect
