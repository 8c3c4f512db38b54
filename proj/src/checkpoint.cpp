#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "inflect/model.hpp"

namespace inflect {

namespace {

constexpr char kMagic[8] = {'I', 'N', 'F', 'L', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers}, {"num_heads", c.num_heads},     {"d_model", c.d_model},
          {"d_ff", c.d_ff},             {"vocab_size", c.vocab_size},   {"max_seq_len", c.max_seq_len},
          {"num_classes", c.num_classes}, {"dropout", c.dropout},
          {"norm", c.norm == NormPosition::post ? "post" : "pre"}, {"layer_norm_eps", c.layer_norm_eps}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.norm = j.at("norm").get<std::string>() == "pre" ? NormPosition::pre : NormPosition::post;
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  nlohmann::json header;
  header["format"] = "inflect-checkpoint";
  header["version"] = kFormatVersion;
  header["config"] = config_to_json(model.config());
  header["training"] = model.training();
  nlohmann::json adapters = nlohmann::json::array();
  for (const LoraAdapter& ad : model.adapters()) adapters.push_back({{"layer", ad.layer}, {"target", to_string(ad.target)}});
  header["lora"] = {{"multiplier", model.lora_multiplier()}, {"dropout", model.lora_dropout()}, {"adapters", adapters}};
  nlohmann::json arrays = nlohmann::json::array();
  Index offset = 0;
  const auto params = model.parameters();
  for (const Param* p : params) {
    arrays.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"trainable", p->trainable}, {"offset", offset}});
    offset += p->size();
  }
  header["arrays"] = arrays;
  header["total_values"] = offset;

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Param* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.values().data()),
              static_cast<std::streamsize>(p->size() * sizeof(double)));
  }
  if (!out) throw InvalidInput("save_checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw InvalidInput("load_checkpoint: bad magic in " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 30)) throw InvalidInput("load_checkpoint: corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("load_checkpoint: malformed header: ") + e.what());
  }
  if (header.value("version", 0) != kFormatVersion) throw InvalidInput("load_checkpoint: unsupported version");

  Model model(config_from_json(header.at("config")));
  model.train(header.at("training").get<bool>());
  const auto& lora = header.at("lora");
  model.set_lora_settings(lora.at("multiplier").get<double>(), lora.at("dropout").get<double>());
  for (const auto& ad : lora.at("adapters")) {
    LoraAdapter a;
    a.layer = ad.at("layer").get<int>();
    a.target = lora_target_from_string(ad.at("target").get<std::string>());
    const std::string prefix = "lora." + std::to_string(a.layer) + "." + to_string(a.target);
    a.a.name = prefix + ".A";
    a.b.name = prefix + ".B";
    model.adapters().push_back(std::move(a));
  }
  std::map<std::string, Param*> by_name;
  for (Param* p : model.parameters()) by_name[p->name] = p;

  const auto& arrays = header.at("arrays");
  if (arrays.size() != by_name.size()) throw InvalidInput("load_checkpoint: array count does not match config");
  for (const auto& entry : arrays) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InvalidInput("load_checkpoint: unexpected array '" + name + "'");
    Param& p = *it->second;
    const Shape shape = entry.at("shape").get<Shape>();
    if (p.size() != 0 && p.value.shape() != shape) throw InvalidInput("load_checkpoint: shape mismatch for " + name);
    p.value = Tensor(shape);
    p.trainable = entry.at("trainable").get<bool>();
    in.read(reinterpret_cast<char*>(p.value.values().data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!in) throw InvalidInput("load_checkpoint: truncated data for " + name);
  }
  return model;
}

}  // namespace inflect
