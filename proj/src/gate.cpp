#include "choplab/gate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "choplab/adam.hpp"
#include "choplab/rng.hpp"

namespace choplab {

GateParams GateParams::init(const EncoderConfig& cfg, bool per_layer, double lambda,
                            std::uint64_t seed) {
  GateParams g;
  g.per_layer = per_layer;
  g.lambda = lambda;
  const std::size_t n = per_layer ? cfg.layers : 1;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "gate/init/" + std::to_string(i)));
    g.w.push_back(Tensor::randn(cfg.d_model, cfg.heads, 0.02, rng));
    g.b.push_back(Tensor::zeros(1, cfg.heads));
  }
  return g;
}

GateParams GateParams::zeros(const EncoderConfig& cfg, bool per_layer, double lambda) {
  GateParams g;
  g.per_layer = per_layer;
  g.lambda = lambda;
  const std::size_t n = per_layer ? cfg.layers : 1;
  for (std::size_t i = 0; i < n; ++i) {
    g.w.push_back(Tensor::zeros(cfg.d_model, cfg.heads));
    g.b.push_back(Tensor::zeros(1, cfg.heads));
  }
  return g;
}

std::vector<Tensor*> GateParams::tensors() {
  std::vector<Tensor*> out;
  for (Tensor& t : w) out.push_back(&t);
  for (Tensor& t : b) out.push_back(&t);
  return out;
}

void GateParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for (std::size_t i = 0; i < w.size(); ++i) fn("gate.w" + std::to_string(i), w[i]);
  for (std::size_t i = 0; i < b.size(); ++i) fn("gate.b" + std::to_string(i), b[i]);
}

void GateParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < w.size(); ++i) fn("gate.w" + std::to_string(i), w[i]);
  for (std::size_t i = 0; i < b.size(); ++i) fn("gate.b" + std::to_string(i), b[i]);
}

namespace {

double score_from_cls(const Tensor& cls, const GateParams& gate, std::size_t layer) {
  const Tensor q = add_bias_row(matmul(cls, gate.w_for(layer)), gate.b_for(layer));
  double mean = 0.0;
  for (double v : q.data) mean += v;
  mean /= static_cast<double>(q.size());
  return sigmoid_scalar(mean);
}

}  // namespace

LayerScores layer_scores(const ForwardTrace& trace, const GateParams& gate,
                         const EncoderConfig& cfg) {
  if (trace.hidden.size() != cfg.layers + 1)
    throw ShapeError("layer_scores: trace does not cover all layers");
  LayerScores s(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    s[l] = score_from_cls(trace.cls_feature(l + 1), gate, l);
  return s;
}

ChopPlan apply_threshold(const LayerScores& scores, double theta,
                         const EncoderConfig& cfg) {
  ChopPlan plan = ChopPlan::identity(cfg);
  for (std::size_t l = 0; l < scores.size(); ++l)
    if (scores[l] < theta) plan.skip_layers.insert(l);
  return plan;
}

GatedResult gated_forward(const std::vector<int>& tokens, const EncoderParams& params,
                          const GateParams& gate, double theta) {
  const ForwardTrace full = encoder_forward(tokens, params, ChopPlan::identity(params.config));
  GatedResult out;
  out.scores = layer_scores(full, gate, params.config);
  out.plan = apply_threshold(out.scores, theta, params.config);
  out.all_layers_chopped = out.plan.skip_layers.size() == params.config.layers;
  out.logits = encoder_forward(tokens, params, out.plan).logits;
  return out;
}

Tensor soft_gated_forward(const std::vector<int>& tokens, const EncoderParams& params,
                          const GateParams& gate, LayerScores* scores_out) {
  const EncoderConfig& cfg = params.config;
  const ChopPlan identity = ChopPlan::identity(cfg);
  if (tokens.empty()) throw std::invalid_argument("soft_gated_forward: empty sequence");
  const std::size_t seq = tokens.size();
  Tensor x({seq, cfg.d_model});
  for (std::size_t r = 0; r < seq; ++r) {
    const int id = tokens[r];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw std::invalid_argument("soft_gated_forward: unknown token id");
    for (std::size_t c = 0; c < cfg.d_model; ++c)
      x.data[r * cfg.d_model + c] =
          params.tok_emb.at(static_cast<std::size_t>(id), c) + params.pos_emb.at(r, c);
  }
  LayerScores scores(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Tensor y =
        encoder_layer_forward(x, params.layers[l], cfg.heads, identity.head_mask[l]);
    Tensor cls({1, cfg.d_model});
    for (std::size_t c = 0; c < cfg.d_model; ++c) cls.data[c] = y.at(0, c);
    const double s = score_from_cls(cls, gate, l);
    scores[l] = s;
    for (std::size_t i = 0; i < x.size(); ++i)
      x.data[i] = x.data[i] + s * (y.data[i] - x.data[i]);
  }
  Tensor cls({1, cfg.d_model});
  for (std::size_t c = 0; c < cfg.d_model; ++c) cls.data[c] = x.at(0, c);
  if (scores_out) *scores_out = scores;
  return add_bias_row(matmul(cls, params.cls_w), params.cls_b);
}

GateTapeIds register_gate_params(Tape& tape, const GateParams& gate) {
  GateTapeIds ids;
  for (const Tensor& t : gate.w) ids.w.push_back(tape.leaf(t));
  for (const Tensor& t : gate.b) ids.b.push_back(tape.leaf(t));
  return ids;
}

GateGraph soft_gated_graph(Tape& tape, const EncoderTapeIds& enc_ids,
                           const GateTapeIds& gate_ids, const EncoderConfig& cfg,
                           const GateParams& gate,
                           const std::vector<std::vector<int>>& batch_tokens) {
  const std::size_t batch = batch_tokens.size();
  const std::size_t seq = batch_tokens[0].size();
  const std::vector<double> alpha(cfg.heads, 1.0);
  std::vector<std::size_t> cls_rows(batch);
  for (std::size_t e = 0; e < batch; ++e) cls_rows[e] = e * seq;

  GateGraph out;
  NodeId x = embedding_graph(tape, enc_ids, cfg, batch_tokens);
  NodeId l1 = 0;
  bool have_l1 = false;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    NodeId y = encoder_layer_graph(tape, enc_ids.layers[l], x, batch, seq, cfg.heads, alpha);
    NodeId cls = tape.pick_rows(y, cls_rows);
    const std::size_t gi = gate.per_layer ? l : 0;
    NodeId q = tape.add_bias_row(tape.matmul(cls, gate_ids.w[gi]), gate_ids.b[gi]);
    NodeId s = tape.sigmoid(tape.row_mean(q));
    out.layer_score_nodes.push_back(s);
    NodeId ql1 = tape.sum_abs(q);
    l1 = have_l1 ? tape.add(l1, ql1) : ql1;
    have_l1 = true;
    x = tape.lerp_rows_by_example(x, y, s, seq);
  }
  out.l1_penalty = tape.scale(l1, 1.0 / static_cast<double>(batch));
  out.logits = classifier_graph(tape, enc_ids, x, batch, seq);
  return out;
}

GateTrainResult train_gate(const Dataset& data, const EncoderParams& params,
                           GateParams& gate, const GateTrainOptions& opt) {
  if (data.train.empty()) throw std::invalid_argument("train_gate: empty train split");
  // Snapshot to assert the encoder really is frozen.
  std::vector<std::vector<double>> snapshot;
  params.for_each([&](const std::string&, const Tensor& t) { snapshot.push_back(t.data); });

  std::vector<Tensor*> gate_tensors = gate.tensors();
  AdamState adam = AdamState::init(gate_tensors, opt.lr);
  GateTrainResult result;

  Rng batch_rng(derive_seed(opt.seed, "gate/batches"));
  for (std::size_t step = 0; step < opt.steps; ++step) {
    std::vector<std::vector<int>> tokens;
    std::vector<int> labels;
    for (std::size_t i = 0; i < opt.batch; ++i) {
      const LabeledInstance& inst = data.train[batch_rng.below(data.train.size())];
      tokens.push_back(inst.tokens);
      labels.push_back(inst.label);
    }
    Tape tape;
    EncoderTapeIds enc_ids = register_encoder_params(tape, params);
    GateTapeIds gate_ids = register_gate_params(tape, gate);
    GateGraph graph = soft_gated_graph(tape, enc_ids, gate_ids, params.config, gate, tokens);
    NodeId loss = tape.add(tape.bce_mean(graph.logits, labels),
                           tape.scale(graph.l1_penalty, gate.lambda));
    const double loss_val = tape.value(loss).item();
    if (!std::isfinite(loss_val))
      throw NumericError("train_gate: non-finite loss at step " + std::to_string(step));
    result.loss_history.push_back(loss_val);
    tape.backward(loss);

    std::vector<const Tensor*> grads;
    for (std::size_t i = 0; i < gate_ids.w.size(); ++i) grads.push_back(&tape.grad(gate_ids.w[i]));
    for (std::size_t i = 0; i < gate_ids.b.size(); ++i) grads.push_back(&tape.grad(gate_ids.b[i]));
    const double warm =
        opt.warmup > 0 ? std::min(1.0, static_cast<double>(step + 1) /
                                           static_cast<double>(opt.warmup))
                       : 1.0;
    adam_step(gate_tensors, grads, adam, warm);
  }

  std::size_t idx = 0;
  bool unchanged = true;
  params.for_each([&](const std::string&, const Tensor& t) {
    if (t.data != snapshot[idx++]) unchanged = false;
  });
  if (!unchanged)
    throw std::logic_error("train_gate: encoder parameters changed during gate training");
  return result;
}

std::vector<std::vector<double>> mean_scores_by_type(
    const std::vector<LabeledInstance>& instances, const std::vector<int>& type_ids,
    const EncoderParams& params, const GateParams& gate) {
  const std::size_t L = params.config.layers;
  std::vector<std::vector<double>> sums(type_ids.size(), std::vector<double>(L, 0.0));
  std::vector<std::size_t> counts(type_ids.size(), 0);
  const ChopPlan identity = ChopPlan::identity(params.config);
  for (const LabeledInstance& inst : instances) {
    const auto it = std::find(type_ids.begin(), type_ids.end(), inst.type_id);
    if (it == type_ids.end()) continue;
    const std::size_t row = static_cast<std::size_t>(it - type_ids.begin());
    const ForwardTrace trace = encoder_forward(inst.tokens, params, identity);
    const LayerScores s = layer_scores(trace, gate, params.config);
    for (std::size_t l = 0; l < L; ++l) sums[row][l] += s[l];
    counts[row] += 1;
  }
  for (std::size_t t = 0; t < type_ids.size(); ++t) {
    if (counts[t] == 0)
      throw std::invalid_argument("mean_scores_by_type: empty type bucket " +
                                  std::to_string(type_ids[t]));
    for (double& v : sums[t]) v /= static_cast<double>(counts[t]);
  }
  return sums;
}

}  // namespace choplab
