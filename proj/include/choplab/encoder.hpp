#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "choplab/tape.hpp"
#include "choplab/tensor.hpp"

namespace choplab {

class Rng;

struct EncoderConfig {
  std::size_t layers = 6;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 34;
  std::size_t num_classes = 8;

  std::size_t d_head() const { return d_model / heads; }
  void validate() const;

  // L=6, H=4, d=64: big enough to show layer specialization, small
  // enough for minutes-scale CPU training.
  static EncoderConfig desk_default() { return EncoderConfig{}; }
  // BERT-base shape; used for parameter accounting, not training.
  static EncoderConfig paper_scale();

  bool operator==(const EncoderConfig&) const = default;
};

// Binary head mask (L×H) plus a set of skipped layer indices.
// Layer indices are 0-based internally; reports render them 1-based.
struct ChopPlan {
  std::vector<std::vector<int>> head_mask;
  std::set<std::size_t> skip_layers;

  static ChopPlan identity(const EncoderConfig& cfg);
  static ChopPlan identity(std::size_t layers, std::size_t heads);
  void validate(std::size_t layers, std::size_t heads) const;
  bool is_skipped(std::size_t layer) const { return skip_layers.count(layer) > 0; }
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor ln2_g, ln2_b;
};

struct EncoderParams {
  EncoderConfig config;
  Tensor tok_emb;  // vocab × d_model
  Tensor pos_emb;  // max_seq_len × d_model
  std::vector<LayerParams> layers;
  Tensor cls_w;  // d_model × num_classes
  Tensor cls_b;  // 1 × num_classes

  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed);

  // Stable named traversal; the order defines checkpoint and
  // optimizer-state layout.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::vector<Tensor*> tensors();
  std::vector<std::string> names() const;
};

struct ForwardTrace {
  // hidden[0] is the embedding output; hidden[l] the state after layer l
  // (a copy of hidden[l-1] when layer l is skipped). Size layers+1.
  std::vector<Tensor> hidden;
  // attention[l][h] is the seq×seq weight matrix; empty vector for a
  // skipped layer.
  std::vector<std::vector<Tensor>> attention;
  Tensor logits;  // 1 × num_classes

  // Row 0 of the layer's hidden state, the [CLS] feature.
  Tensor cls_feature(std::size_t layer_out) const;
};

// Attention sublayer on one sequence; head h's concatenated slice is
// multiplied by mask_row[h] before the output projection.
std::pair<Tensor, std::vector<Tensor>> multi_head_attention(
    const Tensor& x, const LayerParams& p, std::size_t heads,
    const std::vector<int>& mask_row);

// One full encoder block (attention -> add -> norm -> FFN -> add -> norm).
Tensor encoder_layer_forward(const Tensor& x, const LayerParams& p,
                             std::size_t heads, const std::vector<int>& mask_row,
                             std::vector<Tensor>* attn_out = nullptr);

// Full forward pass under a chop plan. Skipped layers pass their input
// through unchanged; logits come from the classifier over the last
// surviving [CLS] row.
ForwardTrace encoder_forward(const std::vector<int>& tokens,
                             const EncoderParams& params, const ChopPlan& plan);

// Argmax over trace.logits, ties broken by lowest class index.
std::size_t classify(const ForwardTrace& trace);
std::size_t argmax_lowest(const Tensor& scores);

struct LayerParamCount {
  std::size_t attention = 0;
  std::size_t ffn = 0;
  std::size_t norms = 0;
  std::size_t total() const { return attention + ffn + norms; }
};

struct ParamCount {
  std::size_t total = 0;            // everything, embeddings and classifier included
  std::size_t kept = 0;             // total minus skipped layers
  std::size_t embedding = 0;
  std::size_t classifier = 0;
  std::size_t encoder_stack = 0;       // all L layers
  std::size_t encoder_stack_kept = 0;  // surviving layers only
  double kept_fraction = 1.0;          // encoder-stack ratio
  std::vector<LayerParamCount> per_layer;
  std::vector<bool> layer_kept;
};

// Head masking never reduces the count; only layer skips do.
ParamCount count_parameters(const EncoderConfig& cfg, const ChopPlan& plan);

// ---- tape graph construction (training path) ----

struct LayerTapeIds {
  NodeId wq, bq, wk, bk, wv, bv, wo, bo;
  NodeId ln1_g, ln1_b;
  NodeId ff1_w, ff1_b, ff2_w, ff2_b;
  NodeId ln2_g, ln2_b;
};

struct EncoderTapeIds {
  NodeId tok_emb, pos_emb;
  std::vector<LayerTapeIds> layers;
  NodeId cls_w, cls_b;

  // Aligned with EncoderParams::tensors().
  std::vector<NodeId> all() const;
};

EncoderTapeIds register_encoder_params(Tape& tape, const EncoderParams& params);

// Token+position embeddings for a stacked batch: returns (B·S)×d.
NodeId embedding_graph(Tape& tape, const EncoderTapeIds& ids,
                       const EncoderConfig& cfg,
                       const std::vector<std::vector<int>>& batch_tokens);

NodeId encoder_layer_graph(Tape& tape, const LayerTapeIds& ids, NodeId x,
                           std::size_t batch, std::size_t seq, std::size_t heads,
                           const std::vector<double>& alpha);

// Picks each example's [CLS] row and applies the classifier: B×C logits.
NodeId classifier_graph(Tape& tape, const EncoderTapeIds& ids, NodeId x,
                        std::size_t batch, std::size_t seq);

// Full batch graph under a chop plan; returns B×C logits.
NodeId encoder_logits_graph(Tape& tape, const EncoderTapeIds& ids,
                            const EncoderConfig& cfg,
                            const std::vector<std::vector<int>>& batch_tokens,
                            const ChopPlan& plan);

constexpr double kLayerNormEps = 1e-5;

}  // namespace choplab
