#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "choplab/encoder.hpp"
#include "choplab/taskgen.hpp"

namespace choplab {

// The dynamic chopping module: a linear map from a layer's [CLS]
// feature to H head scores, averaged and squashed into a per-layer
// score S_l in (0,1). One projection is shared across layers by
// default; per_layer switches to independent projections.
struct GateParams {
  std::vector<Tensor> w;  // d_model × heads; size 1 (shared) or L (per layer)
  std::vector<Tensor> b;  // 1 × heads
  bool per_layer = false;
  double lambda = 1e-3;  // weight of the L1 penalty on pre-sigmoid head scores

  static GateParams init(const EncoderConfig& cfg, bool per_layer, double lambda,
                         std::uint64_t seed);
  static GateParams zeros(const EncoderConfig& cfg, bool per_layer = false,
                          double lambda = 1e-3);

  const Tensor& w_for(std::size_t layer) const { return w[per_layer ? layer : 0]; }
  const Tensor& b_for(std::size_t layer) const { return b[per_layer ? layer : 0]; }
  std::vector<Tensor*> tensors();
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
};

using LayerScores = std::vector<double>;  // length L, each strictly in (0,1)

// S_l = sigmoid(mean over heads of W·cls_l + b). Scores are
// per-instance; never cache them across inputs.
LayerScores layer_scores(const ForwardTrace& trace, const GateParams& gate,
                         const EncoderConfig& cfg);

// skip_layers = { l : S_l < theta }; head mask stays all ones.
ChopPlan apply_threshold(const LayerScores& scores, double theta,
                         const EncoderConfig& cfg);

struct GatedResult {
  Tensor logits;
  LayerScores scores;  // from the full (pass-1) trace
  ChopPlan plan;
  bool all_layers_chopped = false;
};

// Two passes: score on the full trace, then rerun the encoder under
// the derived plan. Chopping every layer is legal (the classifier sees
// the embedded [CLS]); the warning flag reports it.
GatedResult gated_forward(const std::vector<int>& tokens, const EncoderParams& params,
                          const GateParams& gate, double theta);

// Differentiable training surrogate: layer output becomes
// S_l·Layer_l(x) + (1-S_l)·x, which matches the hard semantics at
// S_l in {0,1}.
Tensor soft_gated_forward(const std::vector<int>& tokens, const EncoderParams& params,
                          const GateParams& gate, LayerScores* scores_out = nullptr);

struct GateTapeIds {
  std::vector<NodeId> w, b;
};
GateTapeIds register_gate_params(Tape& tape, const GateParams& gate);

struct GateGraph {
  NodeId logits;      // B×C
  NodeId l1_penalty;  // scalar, sum of |q| over layers, mean over batch
  NodeId scores;      // unavailable as one node; per-layer score nodes below
  std::vector<NodeId> layer_score_nodes;  // each B×1
};

// Batch graph of the soft-gated encoder; encoder parameters enter as
// tape leaves too, so gradients w.r.t. them exist but are simply not
// applied when only the gate trains.
GateGraph soft_gated_graph(Tape& tape, const EncoderTapeIds& enc_ids,
                           const GateTapeIds& gate_ids, const EncoderConfig& cfg,
                           const GateParams& gate,
                           const std::vector<std::vector<int>>& batch_tokens);

struct GateTrainOptions {
  std::size_t steps = 400;
  std::size_t batch = 64;
  double lr = 1e-3;  // maximal learning rate; linear warmup then constant
  std::size_t warmup = 50;
  std::uint64_t seed = 1;
  std::size_t log_every = 50;
};

struct GateTrainResult {
  std::vector<double> loss_history;
};

// Trains the gate with BCE + lambda·L1(q) through the soft surrogate.
// Encoder parameters are frozen; asserted bitwise unchanged on return.
// Throws NumericError on a non-finite loss.
GateTrainResult train_gate(const Dataset& data, const EncoderParams& params,
                           GateParams& gate, const GateTrainOptions& opt);

// Matrix entry (t, l) = mean S_l over instances of type t. Row order
// follows type_ids; throws on an empty type bucket.
std::vector<std::vector<double>> mean_scores_by_type(
    const std::vector<LabeledInstance>& instances, const std::vector<int>& type_ids,
    const EncoderParams& params, const GateParams& gate);

}  // namespace choplab
