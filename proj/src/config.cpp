#include "inflect/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "inflect/errors.hpp"

namespace inflect {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

/// Reads keys of one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidInput("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    const json* v = find(key);
    if (!v) return;
    out = convert<T>(*v, path_ + "." + key);
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw InvalidInput("config: unknown key '" + path_ + "." + it.key() + "'");
    }
  }

  const std::string& path() const { return path_; }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw InvalidInput("config: '" + where + "' must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw InvalidInput("config: '" + where + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<long long>() < 0) throw InvalidInput("config: '" + where + "' must be non-negative");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw InvalidInput("config: '" + where + "' must be a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw InvalidInput("config: '" + where + "' must be a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw InvalidInput("config: '" + where + "' must be an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_section(Section& parent, const char* key, Fn fn) {
  if (const json* v = parent.find(key)) {
    Section s(*v, parent.path() + "." + key);
    fn(s);
    s.finish();
  }
}

void read_task(Section& s, TaskSpec& t) {
  s.read("vocab_size", t.vocab_size);
  s.read("seq_len", t.seq_len);
  s.read("num_classes", t.num_classes);
  std::string family = to_string(t.family);
  s.read("family", family);
  t.family = pattern_family_from_string(family);
  s.read("motif_len", t.motif_len);
  s.read("substitution_rate", t.substitution_rate);
  s.read("label_correlation", t.label_correlation);
  s.read("source_train", t.source_train);
  s.read("source_val", t.source_val);
  s.read("target_train", t.target_train);
  s.read("target_val", t.target_val);
  s.read("seed", t.seed);
}

void read_model(Section& s, ModelConfig& m) {
  s.read("num_layers", m.num_layers);
  s.read("num_heads", m.num_heads);
  s.read("d_model", m.d_model);
  s.read("d_ff", m.d_ff);
  s.read("vocab_size", m.vocab_size);
  s.read("max_seq_len", m.max_seq_len);
  s.read("num_classes", m.num_classes);
  s.read("dropout", m.dropout);
  std::string norm = m.norm == NormPosition::post ? "post" : "pre";
  s.read("norm", norm);
  if (norm != "post" && norm != "pre") throw InvalidInput("config: model.norm must be \"post\" or \"pre\"");
  m.norm = norm == "post" ? NormPosition::post : NormPosition::pre;
  s.read("layer_norm_eps", m.layer_norm_eps);
}

void read_regime(Section& s, RegimeSpec& r) {
  s.read("source_epochs", r.source_epochs);
  s.read("learning_rate", r.learning_rate);
  s.read("batch_size", r.batch_size);
  s.read("weight_decay", r.weight_decay);
}

void read_lora(Section& s, LoraSpec& l) {
  s.read("rank", l.rank);
  s.read("alpha", l.alpha);
  s.read("dropout", l.dropout);
  if (const json* v = s.find("targets")) {
    l.targets.clear();
    for (const std::string& t : Section::convert<std::vector<std::string>>(*v, s.path() + ".targets")) {
      l.targets.push_back(lora_target_from_string(t));
    }
  }
}

StrategySpec read_strategy(const json& j, const std::string& path) {
  Section s(j, path);
  const json* name = s.find("strategy");
  if (!name) throw InvalidInput("config: '" + path + ".strategy' is required");
  StrategySpec spec = default_strategy(strategy_from_string(Section::convert<std::string>(*name, path + ".strategy")));
  s.read("k", spec.k);
  std::string source = to_string(spec.band_source);
  s.read("band_source", source);
  spec.band_source = band_source_from_string(source);
  s.read("explicit_band", spec.explicit_band);
  s.read("steps", spec.steps);
  s.read("learning_rate", spec.learning_rate);
  s.read("batch_size", spec.batch_size);
  s.read("weight_decay", spec.weight_decay);
  s.read("train_head", spec.train_head);
  with_section(s, "lora", [&](Section& ls) { read_lora(ls, spec.lora); });
  s.finish();
  return spec;
}

void read_probe(Section& s, ProbeConfig& p) {
  s.read("hidden_dim", p.hidden_dim);
  s.read("dropout", p.dropout);
  s.read("epochs", p.epochs);
  s.read("batch_size", p.batch_size);
  s.read("learning_rate", p.learning_rate);
  s.read("weight_decay", p.weight_decay);
}

ojson regime_json(const RegimeSpec& r) {
  ojson j;
  j["source_epochs"] = r.source_epochs;
  j["learning_rate"] = r.learning_rate;
  j["batch_size"] = r.batch_size;
  j["weight_decay"] = r.weight_decay;
  return j;
}

ojson probe_json(const ProbeConfig& p) {
  ojson j;
  j["hidden_dim"] = p.hidden_dim;
  j["dropout"] = p.dropout;
  j["epochs"] = p.epochs;
  j["batch_size"] = p.batch_size;
  j["learning_rate"] = p.learning_rate;
  j["weight_decay"] = p.weight_decay;
  return j;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw InvalidInput("config: empty document");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    Section root(doc, "config");
    with_section(root, "task", [&](Section& s) { read_task(s, c.task); });
    with_section(root, "model", [&](Section& s) { read_model(s, c.model); });
    with_section(root, "regimes", [&](Section& s) {
      with_section(s, "UNDER", [&](Section& r) { read_regime(r, c.under); });
      with_section(s, "OVER", [&](Section& r) { read_regime(r, c.over); });
    });
    if (const json* v = root.find("strategies")) {
      if (!v->is_array()) throw InvalidInput("config: 'config.strategies' must be an array");
      c.strategies.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        c.strategies.push_back(read_strategy((*v)[i], "config.strategies[" + std::to_string(i) + "]"));
      }
    }
    root.read("seeds", c.seeds);
    with_section(root, "locator", [&](Section& s) {
      s.read("calibration_steps", c.locator.calibration_steps);
      s.read("alpha_mix", c.locator.alpha_mix);
      s.read("grad_threshold", c.locator.grad_threshold);
      s.read("expansion", c.locator.expansion);
    });
    with_section(root, "measure", [&](Section& s) {
      s.read("pca_dim", c.measure.pca_dim);
      s.read("cka_samples", c.measure.cka_samples);
      s.read("probe_train", c.measure.probe_train);
      s.read("probe_val", c.measure.probe_val);
      with_section(s, "linear_probe", [&](Section& p) { read_probe(p, c.measure.linear_probe); });
      with_section(s, "mlp_probe", [&](Section& p) { read_probe(p, c.measure.mlp_probe); });
    });
    root.finish();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("config: cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  ojson j;
  const TaskSpec& t = c.task;
  j["task"] = {{"vocab_size", t.vocab_size},
               {"seq_len", t.seq_len},
               {"num_classes", t.num_classes},
               {"family", to_string(t.family)},
               {"motif_len", t.motif_len},
               {"substitution_rate", t.substitution_rate},
               {"label_correlation", t.label_correlation},
               {"source_train", t.source_train},
               {"source_val", t.source_val},
               {"target_train", t.target_train},
               {"target_val", t.target_val},
               {"seed", t.seed}};
  const ModelConfig& m = c.model;
  j["model"] = {{"num_layers", m.num_layers},     {"num_heads", m.num_heads},
                {"d_model", m.d_model},           {"d_ff", m.d_ff},
                {"vocab_size", m.vocab_size},     {"max_seq_len", m.max_seq_len},
                {"num_classes", m.num_classes},   {"dropout", m.dropout},
                {"norm", m.norm == NormPosition::post ? "post" : "pre"},
                {"layer_norm_eps", m.layer_norm_eps}};
  j["regimes"]["UNDER"] = regime_json(c.under);
  j["regimes"]["OVER"] = regime_json(c.over);
  j["strategies"] = ojson::array();
  for (const StrategySpec& s : c.strategies) {
    ojson sj;
    sj["strategy"] = s.name();
    sj["k"] = s.k;
    sj["band_source"] = to_string(s.band_source);
    sj["explicit_band"] = s.explicit_band;
    sj["steps"] = s.steps;
    sj["learning_rate"] = s.learning_rate;
    sj["batch_size"] = s.batch_size;
    sj["weight_decay"] = s.weight_decay;
    sj["train_head"] = s.train_head;
    ojson targets = ojson::array();
    for (LoraTarget t : s.lora.targets) targets.push_back(to_string(t));
    sj["lora"] = {{"rank", s.lora.rank}, {"alpha", s.lora.alpha}, {"dropout", s.lora.dropout}, {"targets", targets}};
    j["strategies"].push_back(sj);
  }
  j["seeds"] = c.seeds;
  j["locator"] = {{"calibration_steps", c.locator.calibration_steps},
                  {"alpha_mix", c.locator.alpha_mix},
                  {"grad_threshold", c.locator.grad_threshold},
                  {"expansion", c.locator.expansion}};
  j["measure"] = {{"pca_dim", c.measure.pca_dim},
                  {"cka_samples", c.measure.cka_samples},
                  {"probe_train", c.measure.probe_train},
                  {"probe_val", c.measure.probe_val},
                  {"linear_probe", probe_json(c.measure.linear_probe)},
                  {"mlp_probe", probe_json(c.measure.mlp_probe)}};
  return j.dump(2) + "\n";
}

}  // namespace inflect
