#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "choplab/checkpoint.hpp"
#include "choplab/rng.hpp"

using namespace choplab;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.vocab_size = 12;
  cfg.max_seq_len = 6;
  cfg.num_classes = 3;
  return cfg;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("encoder checkpoints round-trip bitwise") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 12345);
  // Push some awkward values through the serializer.
  params.tok_emb.at(0, 0) = 1.0 / 3.0;
  params.tok_emb.at(0, 1) = 1e-300;
  params.tok_emb.at(0, 2) = -0.0;
  params.cls_b.at(0, 0) = 1e17 + 1;

  TempFile f("ckpt_encoder_test.json");
  save_encoder_checkpoint(f.path, params, "cafebabe00000000", 12345);
  std::string hash;
  EncoderParams loaded = load_encoder_checkpoint(f.path, &hash);
  CHECK(hash == "cafebabe00000000");
  CHECK(loaded.config == cfg);

  auto a = params.tensors();
  auto b = loaded.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->shape == b[i]->shape);
    for (std::size_t j = 0; j < a[i]->size(); ++j)
      CHECK(a[i]->data[j] == b[i]->data[j]);
  }
  // -0.0 survives with its sign.
  CHECK(std::signbit(loaded.tok_emb.at(0, 2)));
}

TEST_CASE("gate checkpoints round-trip with their hyperparameters") {
  EncoderConfig cfg = tiny_config();
  GateParams gate = GateParams::init(cfg, /*per_layer=*/true, 0.025, 9);
  TempFile f("ckpt_gate_test.json");
  save_gate_checkpoint(f.path, gate, cfg, "0123456789abcdef", 9);
  EncoderConfig cfg_out;
  std::string hash;
  GateParams loaded = load_gate_checkpoint(f.path, &cfg_out, &hash);
  CHECK(hash == "0123456789abcdef");
  CHECK(cfg_out == cfg);
  CHECK(loaded.per_layer);
  CHECK(loaded.lambda == 0.025);
  REQUIRE(loaded.w.size() == gate.w.size());
  for (std::size_t i = 0; i < gate.w.size(); ++i) {
    CHECK(max_abs_diff(loaded.w[i], gate.w[i]) == 0.0);
    CHECK(max_abs_diff(loaded.b[i], gate.b[i]) == 0.0);
  }
}

TEST_CASE("loading the wrong kind or a damaged file fails loudly") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 1);
  GateParams gate = GateParams::zeros(cfg);

  TempFile enc("ckpt_kind_enc.json"), gat("ckpt_kind_gate.json");
  save_encoder_checkpoint(enc.path, params, "x", 1);
  save_gate_checkpoint(gat.path, gate, cfg, "x", 1);
  CHECK_THROWS_AS(load_gate_checkpoint(enc.path), CheckpointError);
  CHECK_THROWS_AS(load_encoder_checkpoint(gat.path), CheckpointError);

  CHECK_THROWS_AS(load_encoder_checkpoint("ckpt_missing_file.json"), CheckpointError);

  TempFile bad("ckpt_bad.json");
  std::ofstream(bad.path) << "{\"format_version\": 999}";
  CHECK_THROWS_AS(load_encoder_checkpoint(bad.path), CheckpointError);

  TempFile junk("ckpt_junk.json");
  std::ofstream(junk.path) << "not json at all";
  CHECK_THROWS_AS(load_encoder_checkpoint(junk.path), CheckpointError);
}

TEST_CASE("a shape-tampered checkpoint is rejected") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 2);
  TempFile f("ckpt_tamper.json");
  save_encoder_checkpoint(f.path, params, "x", 2);
  std::ifstream in(f.path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  // Shrink the declared vocabulary so tensor shapes disagree.
  auto key = text.find("\"vocab_size\"");
  REQUIRE(key != std::string::npos);
  auto num = text.find("12", key);
  REQUIRE(num != std::string::npos);
  text.replace(num, 2, "11");
  std::ofstream(f.path) << text;
  CHECK_THROWS_AS(load_encoder_checkpoint(f.path), CheckpointError);
}
