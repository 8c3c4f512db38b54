#include "inflect/model.hpp"

#include <cmath>

#include "inflect/kernels.hpp"
#include "inflect/lora.hpp"

namespace inflect {

void ModelConfig::validate() const {
  if (num_layers < 1) throw InvalidInput("model config: num_layers must be >= 1");
  if (num_heads < 1 || d_model < 1 || d_model % num_heads != 0) {
    throw InvalidInput("model config: d_model must be a positive multiple of num_heads");
  }
  if (num_classes < 2) throw InvalidInput("model config: num_classes must be >= 2");
  if (vocab_size < 2) throw InvalidInput("model config: vocab_size must be >= 2");
  if (max_seq_len < 2) throw InvalidInput("model config: max_seq_len must be >= 2");
  if (d_ff < 1) throw InvalidInput("model config: d_ff must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidInput("model config: dropout must be in [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw InvalidInput("model config: layer_norm_eps must be positive");
}

const char* to_string(LoraTarget t) {
  switch (t) {
    case LoraTarget::query:
      return "q";
    case LoraTarget::key:
      return "k";
    case LoraTarget::value:
      return "v";
  }
  return "?";
}

LoraTarget lora_target_from_string(const std::string& s) {
  if (s == "q" || s == "Q" || s == "query") return LoraTarget::query;
  if (s == "k" || s == "K" || s == "key") return LoraTarget::key;
  if (s == "v" || s == "V" || s == "value") return LoraTarget::value;
  throw InvalidInput("unknown LoRA target '" + s + "'");
}

std::vector<Param*> LayerParams::all() {
  return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln1_gamma, &ln1_beta, &w1, &b1, &w2, &b2, &ln2_gamma, &ln2_beta};
}

std::vector<const Param*> LayerParams::all() const {
  return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln1_gamma, &ln1_beta, &w1, &b1, &w2, &b2, &ln2_gamma, &ln2_beta};
}

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  allocate();
}

Model::Model(ModelConfig config, std::uint64_t seed) : Model(config) {
  Rng rng(seed);
  auto normal_fill = [&rng](Param& p, double stddev) {
    for (Index i = 0; i < p.size(); ++i) p.value[i] = stddev * rng.normal();
  };
  constexpr double kInitStd = 0.02;
  normal_fill(token_embedding_, kInitStd);
  normal_fill(position_embedding_, kInitStd);
  for (LayerParams& lp : layers_) {
    for (Param* w : {&lp.wq, &lp.wk, &lp.wv, &lp.wo, &lp.w1, &lp.w2}) normal_fill(*w, kInitStd);
  }
  normal_fill(head_weight_, kInitStd);
}

void Model::allocate() {
  const Index d = config_.d_model, ff = config_.d_ff;
  auto make = [](std::string name, Shape shape, double fill = 0.0) {
    Param p{std::move(name), Tensor(std::move(shape)), true};
    p.value.values().setConstant(fill);
    return p;
  };
  token_embedding_ = make("embed.token", {config_.vocab_size, d});
  position_embedding_ = make("embed.position", {config_.max_seq_len, d});
  embed_ln_gamma_ = make("embed.ln.gamma", {d}, 1.0);
  embed_ln_beta_ = make("embed.ln.beta", {d});
  layers_.clear();
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    LayerParams lp{
        make(p + "wq", {d, d}),        make(p + "bq", {d}),          make(p + "wk", {d, d}),
        make(p + "bk", {d}),           make(p + "wv", {d, d}),       make(p + "bv", {d}),
        make(p + "wo", {d, d}),        make(p + "bo", {d}),          make(p + "ln1.gamma", {d}, 1.0),
        make(p + "ln1.beta", {d}),     make(p + "w1", {ff, d}),      make(p + "b1", {ff}),
        make(p + "w2", {d, ff}),       make(p + "b2", {d}),          make(p + "ln2.gamma", {d}, 1.0),
        make(p + "ln2.beta", {d}),
    };
    layers_.push_back(std::move(lp));
  }
  head_weight_ = make("head.weight", {config_.num_classes, d});
  head_bias_ = make("head.bias", {config_.num_classes});
}

const LoraAdapter* Model::find_adapter(int layer, LoraTarget target) const {
  for (const LoraAdapter& ad : adapters_) {
    if (ad.layer == layer && ad.target == target) return &ad;
  }
  return nullptr;
}

Var Model::project(Graph& g, Var x, int layer, LoraTarget target, Var w, Var b, Rng* rng) {
  for (LoraAdapter& ad : adapters_) {
    if (ad.layer == layer && ad.target == target) {
      return adapted_projection(x, w, b, g.param(ad.a), g.param(ad.b), lora_multiplier_, lora_dropout_,
                                training_ ? rng : nullptr);
    }
  }
  return linear(x, w, b);
}

ForwardTrace Model::forward(Graph& g, const TokenBatch& batch, ForwardOptions options) {
  const Index B = batch.batch;
  const Index S = batch.seq + 1;
  const Index d = config_.d_model;
  const Index H = config_.num_heads;
  const Index dh = config_.head_dim();
  if (B < 1) throw InvalidInput("forward: empty batch");
  if (static_cast<Index>(batch.ids.size()) != B * batch.seq) throw InvalidInput("forward: id buffer size mismatch");
  if (S > config_.max_seq_len) {
    throw InvalidInput("forward: sequence length " + std::to_string(S) + " (with [CLS]) exceeds max_seq_len " +
                       std::to_string(config_.max_seq_len));
  }
  const bool stochastic = training_ && (config_.dropout > 0.0 || (lora_dropout_ > 0.0 && !adapters_.empty()));
  if (stochastic && options.dropout_rng == nullptr) {
    throw StateError("forward: training mode with dropout requires a dropout rng");
  }
  Rng* rng = training_ ? options.dropout_rng : nullptr;
  const double p_drop = training_ ? config_.dropout : 0.0;
  auto drop = [&](Var v) { return p_drop > 0.0 ? dropout(v, p_drop, *rng) : v; };

  std::vector<int> ids(static_cast<std::size_t>(B * S));
  std::vector<int> positions(ids.size());
  for (Index b = 0; b < B; ++b) {
    ids[static_cast<std::size_t>(b * S)] = kClsToken;
    for (Index s = 0; s < S; ++s) positions[static_cast<std::size_t>(b * S + s)] = static_cast<int>(s);
    for (Index s = 1; s < S; ++s) {
      const int id = batch.at(b, s - 1);
      if (id < 0 || id >= config_.vocab_size) {
        throw InvalidInput("forward: token id " + std::to_string(id) + " outside vocabulary of size " +
                           std::to_string(config_.vocab_size));
      }
      ids[static_cast<std::size_t>(b * S + s)] = id;
    }
  }

  ForwardTrace trace;
  trace.batch = B;
  trace.seq = S;
  std::vector<Index> cls_rows;
  for (Index b = 0; b < B; ++b) cls_rows.push_back(b * S);

  Var x = embedding(g.param(token_embedding_), ids) + embedding(g.param(position_embedding_), positions);
  x = drop(layer_norm(x, g.param(embed_ln_gamma_), g.param(embed_ln_beta_), config_.layer_norm_eps));
  x = reshape(x, {B, S, d});
  trace.embedding_output = x;

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool post = config_.norm == NormPosition::post;
  for (int l = 0; l < config_.num_layers; ++l) {
    LayerParams& lp = layers_[static_cast<std::size_t>(l)];
    Var ln1_g = g.param(lp.ln1_gamma), ln1_b = g.param(lp.ln1_beta);
    Var ln2_g = g.param(lp.ln2_gamma), ln2_b = g.param(lp.ln2_beta);

    Var in = post ? x : layer_norm(x, ln1_g, ln1_b, config_.layer_norm_eps);
    auto heads = [&](Var v) { return swap_axes_12(reshape(v, {B, S, H, dh})); };
    Var q = heads(project(g, in, l, LoraTarget::query, g.param(lp.wq), g.param(lp.bq), rng));
    Var k = heads(project(g, in, l, LoraTarget::key, g.param(lp.wk), g.param(lp.bk), rng));
    Var v = heads(project(g, in, l, LoraTarget::value, g.param(lp.wv), g.param(lp.bv), rng));
    Var attn = softmax(scale(batched_matmul(q, k, true), inv_sqrt_dh));
    trace.attention.push_back(attn.value());
    Var ctx = reshape(swap_axes_12(batched_matmul(attn, v)), {B, S, d});
    Var a = drop(linear(ctx, g.param(lp.wo), g.param(lp.bo)));
    Var x1 = post ? layer_norm(x + a, ln1_g, ln1_b, config_.layer_norm_eps) : x + a;

    Var in2 = post ? x1 : layer_norm(x1, ln2_g, ln2_b, config_.layer_norm_eps);
    Var f = linear(gelu(linear(in2, g.param(lp.w1), g.param(lp.b1))), g.param(lp.w2), g.param(lp.b2));
    f = drop(f);
    Var h = post ? layer_norm(x1 + f, ln2_g, ln2_b, config_.layer_norm_eps) : x1 + f;

    if (options.tap_blocks) g.tap(h);
    trace.block_outputs.push_back(h);
    trace.cls.push_back(select_rows(h, cls_rows));
    x = h;
  }
  trace.logits = linear(trace.cls.back(), g.param(head_weight_), g.param(head_bias_));
  return trace;
}

RowMatrix<double> Model::logits(const TokenBatch& batch) {
  Graph g;
  return forward(g, batch).logits.value().matrix();
}

void Model::freeze_all() {
  for (Param* p : parameters()) p->trainable = false;
}

void Model::set_strategy(Freezing kind, int k) {
  const int L = config_.num_layers;
  if (kind == Freezing::shallow_top_k && (k < 0 || k > L)) {
    throw InvalidInput("set_strategy: shallow k=" + std::to_string(k) + " outside [0, " + std::to_string(L) + "]");
  }
  for (Param* p : embedding_parameters()) p->trainable = kind == Freezing::full;
  for (int l = 0; l < L; ++l) {
    const bool on = kind == Freezing::full || (kind == Freezing::shallow_top_k && l >= L - k);
    for (Param* p : layers_[static_cast<std::size_t>(l)].all()) p->trainable = on;
  }
  for (Param* p : head_parameters()) p->trainable = true;
  for (Param* p : adapter_parameters()) p->trainable = true;
}

std::vector<Param*> Model::embedding_parameters() {
  return {&token_embedding_, &position_embedding_, &embed_ln_gamma_, &embed_ln_beta_};
}

std::vector<Param*> Model::head_parameters() { return {&head_weight_, &head_bias_}; }

std::vector<Param*> Model::adapter_parameters() {
  std::vector<Param*> out;
  for (LoraAdapter& ad : adapters_) {
    out.push_back(&ad.a);
    out.push_back(&ad.b);
  }
  return out;
}

std::vector<Param*> Model::layer_parameters(int layer) {
  std::vector<Param*> out = layers_.at(static_cast<std::size_t>(layer)).all();
  for (LoraAdapter& ad : adapters_) {
    if (ad.layer == layer) {
      out.push_back(&ad.a);
      out.push_back(&ad.b);
    }
  }
  return out;
}

std::vector<Param*> Model::parameters() {
  std::vector<Param*> out = embedding_parameters();
  for (LayerParams& lp : layers_) {
    for (Param* p : lp.all()) out.push_back(p);
  }
  for (Param* p : head_parameters()) out.push_back(p);
  for (Param* p : adapter_parameters()) out.push_back(p);
  return out;
}

std::vector<const Param*> Model::parameters() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
  return out;
}

Index Model::count_trainable() const {
  Index n = 0;
  for (const Param* p : parameters()) n += p->trainable ? p->size() : 0;
  return n;
}

Index Model::count_total() const {
  Index n = 0;
  for (const Param* p : parameters()) n += p->size();
  return n;
}

std::uint64_t Model::frozen_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Param* p : parameters()) {
    if (!p->trainable) h = checksum(p->value, h);
  }
  return h;
}

bool Model::operator==(const Model& other) const {
  if (!(config_ == other.config_) || training_ != other.training_ || lora_multiplier_ != other.lora_multiplier_ ||
      lora_dropout_ != other.lora_dropout_ || adapters_.size() != other.adapters_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < adapters_.size(); ++i) {
    if (adapters_[i].layer != other.adapters_[i].layer || adapters_[i].target != other.adapters_[i].target) return false;
  }
  auto mine = parameters();
  auto theirs = other.parameters();
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->name != theirs[i]->name || mine[i]->trainable != theirs[i]->trainable ||
        !(mine[i]->value == theirs[i]->value)) {
      return false;
    }
  }
  return true;
}

}  // namespace inflect
