#include "inflect/lora.hpp"

#include <algorithm>
#include <cmath>

namespace inflect {

Index LoraSpec::parameter_count(int d_model) const {
  return static_cast<Index>(layers.size() * targets.size()) * 2 * rank * d_model;
}

namespace {

Param& base_weight(Model& model, int layer, LoraTarget target) {
  LayerParams& lp = model.layer(layer);
  switch (target) {
    case LoraTarget::query:
      return lp.wq;
    case LoraTarget::key:
      return lp.wk;
    case LoraTarget::value:
      return lp.wv;
  }
  throw InvalidInput("lora: unknown target");
}

}  // namespace

void mount_lora(Model& model, const LoraSpec& spec, std::uint64_t seed) {
  const int L = model.num_layers();
  if (spec.rank < 1) throw InvalidInput("mount_lora: rank must be >= 1");
  if (spec.dropout < 0.0 || spec.dropout >= 1.0) throw InvalidInput("mount_lora: dropout must be in [0, 1)");
  if (spec.targets.empty() || spec.layers.empty()) throw InvalidInput("mount_lora: empty target or layer set");
  for (int l : spec.layers) {
    if (l < 0 || l >= L) throw InvalidInput("mount_lora: layer " + std::to_string(l) + " outside [0, " + std::to_string(L) + ")");
  }
  std::vector<std::pair<int, LoraTarget>> pairs;
  for (int l : spec.layers) {
    for (LoraTarget t : spec.targets) {
      if (model.find_adapter(l, t) ||
          std::find(pairs.begin(), pairs.end(), std::pair{l, t}) != pairs.end()) {
        throw Conflict("mount_lora: adapter already mounted on layer " + std::to_string(l) + " " + to_string(t));
      }
      pairs.emplace_back(l, t);
    }
  }
  if (!model.adapters().empty() &&
      (model.lora_multiplier() != spec.multiplier() || model.lora_dropout() != spec.dropout)) {
    throw Conflict("mount_lora: settings differ from already mounted adapters");
  }

  model.set_strategy(Freezing::frozen_backbone);
  model.set_lora_settings(spec.multiplier(), spec.dropout);
  Rng rng(seed);
  for (auto [l, t] : pairs) {
    const Param& w = base_weight(model, l, t);
    const Index d_out = w.value.shape()[0];
    const Index d_in = w.value.shape()[1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    LoraAdapter ad;
    ad.layer = l;
    ad.target = t;
    const std::string prefix = "lora." + std::to_string(l) + "." + to_string(t);
    ad.a = Param{prefix + ".A", Tensor({spec.rank, d_in}), true};
    for (Index i = 0; i < ad.a.size(); ++i) ad.a.value[i] = rng.uniform(-bound, bound);
    ad.b = Param{prefix + ".B", Tensor({d_out, spec.rank}), true};
    model.adapters().push_back(std::move(ad));
  }
}

Var adapted_projection(Var x, Var w, Var bias, Var a, Var b, double multiplier, double dropout, Rng* rng) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != w.shape()[1] || b.shape()[0] != w.shape()[0] ||
      b.shape()[1] != a.shape()[0]) {
    throw InvalidInput("adapted_projection: adapter shapes " + shape_string(a.shape()) + ", " +
                       shape_string(b.shape()) + " do not fit weight " + shape_string(w.shape()));
  }
  Var base = bias.valid() ? linear(x, w, bias) : linear(x, w);
  Var xin = (rng != nullptr && dropout > 0.0) ? inflect::dropout(x, dropout, *rng) : x;
  Var delta = linear(linear(xin, a), b);
  return base + scale(delta, multiplier);
}

void merge_lora(Model& model) {
  if (model.adapters().empty()) throw StateError("merge_lora: no adapters mounted (already merged?)");
  if (model.training() && model.lora_dropout() > 0.0) {
    throw StateError("merge_lora: adapter dropout is active; switch the model to eval mode first");
  }
  const double m = model.lora_multiplier();
  for (LoraAdapter& ad : model.adapters()) {
    Param& w = base_weight(model, ad.layer, ad.target);
    RowMatrix<double> delta = ad.b.value.matrix() * ad.a.value.matrix();
    w.value.matrix() += m * delta;
  }
  model.adapters().clear();
  model.set_lora_settings(0.0, 0.0);
}

}  // namespace inflect
