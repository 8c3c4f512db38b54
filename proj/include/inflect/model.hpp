#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "inflect/autodiff.hpp"
#include "inflect/rng.hpp"
#include "inflect/tensor.hpp"

namespace inflect {

enum class NormPosition { post, pre };

/// Encoder hyper-parameters. Defaults are the desk-scale configuration.
struct ModelConfig {
  int num_layers = 6;
  int num_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 64;
  int max_seq_len = 32;  // including the prepended [CLS]
  int num_classes = 2;
  double dropout = 0.1;
  NormPosition norm = NormPosition::post;
  double layer_norm_eps = 1e-5;

  void validate() const;
  int head_dim() const { return d_model / num_heads; }
  bool operator==(const ModelConfig&) const = default;
};

/// Token id reserved for [CLS]; the model prepends it to every sequence.
inline constexpr int kClsToken = 0;

enum class LoraTarget { query, key, value };
const char* to_string(LoraTarget t);
LoraTarget lora_target_from_string(const std::string& s);

/// Which backbone blocks are trainable. The classifier head is trainable in
/// all three; mounted adapters keep their own trainable flags.
enum class Freezing { shallow_top_k, full, frozen_backbone };

struct LayerParams {
  Param wq, bq, wk, bk, wv, bv, wo, bo;
  Param ln1_gamma, ln1_beta;
  Param w1, b1, w2, b2;
  Param ln2_gamma, ln2_beta;

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
};

/// Low-rank update ΔW = B·A on one projection; A [rank, d_in], B [d_out, rank].
struct LoraAdapter {
  int layer = 0;
  LoraTarget target = LoraTarget::query;
  Param a;
  Param b;
};

/// Rows of token ids, row-major [batch, seq], without the [CLS] token.
struct TokenBatch {
  Index batch = 0;
  Index seq = 0;
  std::vector<int> ids;

  int at(Index b, Index s) const { return ids[static_cast<std::size_t>(b * seq + s)]; }
};

struct ForwardOptions {
  bool tap_blocks = false;      // tap every block output h^(l)
  Rng* dropout_rng = nullptr;   // required in training mode when any dropout is active
};

struct ForwardTrace {
  Index batch = 0;
  Index seq = 0;                      // including [CLS]
  std::vector<Tensor> attention;      // per layer [batch, head, query, key]
  std::vector<Var> block_outputs;     // per layer [batch, seq, d_model]
  std::vector<Var> cls;               // per layer [batch, d_model]
  Var embedding_output;               // [batch, seq, d_model]
  Var logits;                         // [batch, num_classes]
};

/// Post-norm (BERT-style) transformer encoder with a linear [CLS] classifier.
///
/// Value type: copying a Model copies every parameter and adapter.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  int num_layers() const { return config_.num_layers; }

  void train(bool on) { training_ = on; }
  bool training() const { return training_; }

  ForwardTrace forward(Graph& g, const TokenBatch& batch, ForwardOptions options = {});
  /// Eval-style convenience: logits of a batch without keeping the graph.
  RowMatrix<double> logits(const TokenBatch& batch);

  void set_strategy(Freezing kind, int k = 0);
  void freeze_all();

  Index count_trainable() const;
  Index count_total() const;

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  /// Parameters of block `layer` plus adapters mounted on it.
  std::vector<Param*> layer_parameters(int layer);
  std::vector<Param*> head_parameters();
  std::vector<Param*> embedding_parameters();
  std::vector<Param*> adapter_parameters();

  LayerParams& layer(int l) { return layers_.at(static_cast<std::size_t>(l)); }
  const LayerParams& layer(int l) const { return layers_.at(static_cast<std::size_t>(l)); }
  Param& token_embedding() { return token_embedding_; }
  Param& position_embedding() { return position_embedding_; }
  Param& head_weight() { return head_weight_; }
  Param& head_bias() { return head_bias_; }

  // -- adapter storage (mount/merge live in lora.hpp) -------------------------
  std::deque<LoraAdapter>& adapters() { return adapters_; }
  const std::deque<LoraAdapter>& adapters() const { return adapters_; }
  const LoraAdapter* find_adapter(int layer, LoraTarget target) const;
  double lora_multiplier() const { return lora_multiplier_; }
  double lora_dropout() const { return lora_dropout_; }
  void set_lora_settings(double multiplier, double dropout) {
    lora_multiplier_ = multiplier;
    lora_dropout_ = dropout;
  }

  /// Combined checksum of every frozen parameter.
  std::uint64_t frozen_checksum() const;

  bool operator==(const Model& other) const;

 private:
  friend Model load_checkpoint(const std::string& path);
  explicit Model(ModelConfig config);

  Var project(Graph& g, Var x, int layer, LoraTarget target, Var w, Var b, Rng* rng);
  void allocate();

  ModelConfig config_;
  bool training_ = false;
  Param token_embedding_, position_embedding_, embed_ln_gamma_, embed_ln_beta_;
  std::vector<LayerParams> layers_;
  Param head_weight_, head_bias_;
  std::deque<LoraAdapter> adapters_;
  double lora_multiplier_ = 0.0;
  double lora_dropout_ = 0.0;
};

/// Binary checkpoint: 8-byte magic "INFLCKPT", little-endian u64 header
/// length, a JSON header (config, lora settings, and for every array its name,
/// shape, trainable flag and element offset), then all values as raw
/// little-endian float64 in header order. load(save(m)) == m bitwise.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace inflect
