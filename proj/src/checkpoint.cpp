#include "choplab/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <json.hpp>

namespace choplab {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json config_to_json(const EncoderConfig& c) {
  return json{{"layers", c.layers},         {"heads", c.heads},
              {"d_model", c.d_model},       {"d_ff", c.d_ff},
              {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
              {"num_classes", c.num_classes}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.validate();
  return c;
}

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const json& j) {
  Tensor t(j.at("shape").get<std::vector<std::size_t>>());
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != t.size()) throw CheckpointError("tensor data/shape mismatch");
  t.data = std::move(data);
  return t;
}

json load_file(const std::string& path, const std::string& expect_kind) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format_version", -1) != kFormatVersion)
    throw CheckpointError("unsupported checkpoint format in " + path);
  if (j.value("kind", "") != expect_kind)
    throw CheckpointError("checkpoint kind mismatch in " + path + " (want " +
                          expect_kind + ")");
  return j;
}

void write_file(const std::string& path, const json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write checkpoint: " + tmp);
    out << j.dump() << "\n";
    if (!out) throw CheckpointError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError("cannot move checkpoint into place: " + path);
}

}  // namespace

void save_encoder_checkpoint(const std::string& path, const EncoderParams& params,
                             const std::string& config_hash, std::uint64_t seed) {
  json tensors = json::object();
  params.for_each([&](const std::string& name, const Tensor& t) {
    tensors[name] = tensor_to_json(t);
  });
  write_file(path, json{{"format_version", kFormatVersion},
                        {"kind", "encoder"},
                        {"config", config_to_json(params.config)},
                        {"config_hash", config_hash},
                        {"seed", seed},
                        {"tensors", std::move(tensors)}});
}

EncoderParams load_encoder_checkpoint(const std::string& path, std::string* config_hash) {
  const json j = load_file(path, "encoder");
  const EncoderConfig cfg = config_from_json(j.at("config"));
  EncoderParams params = EncoderParams::init(cfg, 0);
  const json& tensors = j.at("tensors");
  params.for_each([&](const std::string& name, Tensor& t) {
    if (!tensors.contains(name))
      throw CheckpointError("checkpoint missing tensor: " + name);
    Tensor loaded = tensor_from_json(tensors.at(name));
    if (!loaded.same_shape(t))
      throw CheckpointError("checkpoint tensor shape mismatch: " + name);
    t = std::move(loaded);
  });
  if (config_hash) *config_hash = j.value("config_hash", "");
  return params;
}

void save_gate_checkpoint(const std::string& path, const GateParams& gate,
                          const EncoderConfig& cfg, const std::string& config_hash,
                          std::uint64_t seed) {
  json tensors = json::object();
  gate.for_each([&](const std::string& name, const Tensor& t) {
    tensors[name] = tensor_to_json(t);
  });
  write_file(path, json{{"format_version", kFormatVersion},
                        {"kind", "gate"},
                        {"config", config_to_json(cfg)},
                        {"config_hash", config_hash},
                        {"per_layer", gate.per_layer},
                        {"lambda", gate.lambda},
                        {"seed", seed},
                        {"tensors", std::move(tensors)}});
}

GateParams load_gate_checkpoint(const std::string& path, EncoderConfig* cfg_out,
                                std::string* config_hash) {
  const json j = load_file(path, "gate");
  const EncoderConfig cfg = config_from_json(j.at("config"));
  GateParams gate = GateParams::zeros(cfg, j.at("per_layer").get<bool>(),
                                      j.at("lambda").get<double>());
  const json& tensors = j.at("tensors");
  gate.for_each([&](const std::string& name, Tensor& t) {
    if (!tensors.contains(name))
      throw CheckpointError("checkpoint missing tensor: " + name);
    Tensor loaded = tensor_from_json(tensors.at(name));
    if (!loaded.same_shape(t))
      throw CheckpointError("checkpoint tensor shape mismatch: " + name);
    t = std::move(loaded);
  });
  if (cfg_out) *cfg_out = cfg;
  if (config_hash) *config_hash = j.value("config_hash", "");
  return gate;
}

}  // namespace choplab
