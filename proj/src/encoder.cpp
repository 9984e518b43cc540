#include "choplab/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "choplab/rng.hpp"

namespace choplab {

void EncoderConfig::validate() const {
  if (layers < 1 || heads < 1) throw ShapeError("config: L and H must be >= 1");
  if (d_model % heads != 0) throw ShapeError("config: d_model not divisible by heads");
  if (vocab_size < 1 || max_seq_len < 1 || num_classes < 1)
    throw ShapeError("config: zero extent");
}

EncoderConfig EncoderConfig::paper_scale() {
  EncoderConfig c;
  c.layers = 12;
  c.heads = 12;
  c.d_model = 768;
  c.d_ff = 3072;
  c.vocab_size = 30522;
  c.max_seq_len = 512;
  c.num_classes = 1618;
  return c;
}

ChopPlan ChopPlan::identity(std::size_t layers, std::size_t heads) {
  ChopPlan p;
  p.head_mask.assign(layers, std::vector<int>(heads, 1));
  return p;
}

ChopPlan ChopPlan::identity(const EncoderConfig& cfg) {
  return identity(cfg.layers, cfg.heads);
}

void ChopPlan::validate(std::size_t layers, std::size_t heads) const {
  if (head_mask.size() != layers) throw ShapeError("plan: head_mask layer count");
  for (const auto& row : head_mask) {
    if (row.size() != heads) throw ShapeError("plan: head_mask head count");
    for (int v : row)
      if (v != 0 && v != 1) throw ShapeError("plan: mask entries must be 0 or 1");
  }
  for (std::size_t l : skip_layers)
    if (l >= layers) throw ShapeError("plan: skip index out of range");
}

namespace {

Tensor init_tensor(std::size_t rows, std::size_t cols, double stddev,
                   std::uint64_t seed, const std::string& name) {
  if (stddev == 0.0) return Tensor::zeros(rows, cols);
  Rng rng(derive_seed(seed, "init/" + name));
  return Tensor::randn(rows, cols, stddev, rng);
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  // Fan-in scaling keeps activation and attention-logit variance near 1
  // at any width; a fixed small constant starves narrow models of
  // attention contrast and stalls training.
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  const double s_ff = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
  EncoderParams p;
  p.config = cfg;
  p.tok_emb = init_tensor(cfg.vocab_size, cfg.d_model, s, seed, "tok_emb");
  p.pos_emb = init_tensor(cfg.max_seq_len, cfg.d_model, s, seed, "pos_emb");
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerParams lp;
    lp.wq = init_tensor(cfg.d_model, cfg.d_model, s, seed, pre + "wq");
    lp.bq = Tensor::zeros(1, cfg.d_model);
    lp.wk = init_tensor(cfg.d_model, cfg.d_model, s, seed, pre + "wk");
    lp.bk = Tensor::zeros(1, cfg.d_model);
    lp.wv = init_tensor(cfg.d_model, cfg.d_model, s, seed, pre + "wv");
    lp.bv = Tensor::zeros(1, cfg.d_model);
    lp.wo = init_tensor(cfg.d_model, cfg.d_model, s, seed, pre + "wo");
    lp.bo = Tensor::zeros(1, cfg.d_model);
    lp.ln1_g = Tensor::full(1, cfg.d_model, 1.0);
    lp.ln1_b = Tensor::zeros(1, cfg.d_model);
    lp.ff1_w = init_tensor(cfg.d_model, cfg.d_ff, s, seed, pre + "ff1_w");
    lp.ff1_b = Tensor::zeros(1, cfg.d_ff);
    lp.ff2_w = init_tensor(cfg.d_ff, cfg.d_model, s_ff, seed, pre + "ff2_w");
    lp.ff2_b = Tensor::zeros(1, cfg.d_model);
    lp.ln2_g = Tensor::full(1, cfg.d_model, 1.0);
    lp.ln2_b = Tensor::zeros(1, cfg.d_model);
    p.layers.push_back(std::move(lp));
  }
  p.cls_w = init_tensor(cfg.d_model, cfg.num_classes, s, seed, "cls_w");
  p.cls_b = Tensor::zeros(1, cfg.num_classes);
  return p;
}

namespace {

template <typename Params, typename Fn>
void for_each_impl(Params& p, Fn&& fn) {
  fn("tok_emb", p.tok_emb);
  fn("pos_emb", p.pos_emb);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    auto& lp = p.layers[l];
    fn(pre + "wq", lp.wq);
    fn(pre + "bq", lp.bq);
    fn(pre + "wk", lp.wk);
    fn(pre + "bk", lp.bk);
    fn(pre + "wv", lp.wv);
    fn(pre + "bv", lp.bv);
    fn(pre + "wo", lp.wo);
    fn(pre + "bo", lp.bo);
    fn(pre + "ln1_g", lp.ln1_g);
    fn(pre + "ln1_b", lp.ln1_b);
    fn(pre + "ff1_w", lp.ff1_w);
    fn(pre + "ff1_b", lp.ff1_b);
    fn(pre + "ff2_w", lp.ff2_w);
    fn(pre + "ff2_b", lp.ff2_b);
    fn(pre + "ln2_g", lp.ln2_g);
    fn(pre + "ln2_b", lp.ln2_b);
  }
  fn("cls_w", p.cls_w);
  fn("cls_b", p.cls_b);
}

}  // namespace

void EncoderParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  for_each_impl(*this, fn);
}

void EncoderParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for_each_impl(*this, fn);
}

std::vector<Tensor*> EncoderParams::tensors() {
  std::vector<Tensor*> out;
  for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> EncoderParams::names() const {
  std::vector<std::string> out;
  for_each([&](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

Tensor ForwardTrace::cls_feature(std::size_t layer_out) const {
  const Tensor& h = hidden.at(layer_out);
  Tensor f({1, h.cols()});
  for (std::size_t c = 0; c < h.cols(); ++c) f.data[c] = h.at(0, c);
  return f;
}

namespace {

Tensor col_block(const Tensor& x, std::size_t h, std::size_t dh) {
  Tensor out({x.rows(), dh});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < dh; ++c) out.data[r * dh + c] = x.at(r, h * dh + c);
  return out;
}

}  // namespace

std::pair<Tensor, std::vector<Tensor>> multi_head_attention(
    const Tensor& x, const LayerParams& p, std::size_t heads,
    const std::vector<int>& mask_row) {
  if (mask_row.size() != heads) throw ShapeError("attention: mask_row length != heads");
  ensure_finite(x, "attention input");
  const std::size_t d = x.cols();
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = add_bias_row(matmul(x, p.wq), p.bq);
  const Tensor k = add_bias_row(matmul(x, p.wk), p.bk);
  const Tensor v = add_bias_row(matmul(x, p.wv), p.bv);
  Tensor concat({x.rows(), d});
  std::vector<Tensor> weights;
  weights.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor a =
        softmax_rows(scale(matmul_nt(col_block(q, h, dh), col_block(k, h, dh)), sc));
    const Tensor oh = scale(matmul(a, col_block(v, h, dh)),
                            static_cast<double>(mask_row[h]));
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < dh; ++c)
        concat.data[r * d + h * dh + c] = oh.data[r * dh + c];
    weights.push_back(a);
  }
  return {add_bias_row(matmul(concat, p.wo), p.bo), std::move(weights)};
}

Tensor encoder_layer_forward(const Tensor& x, const LayerParams& p, std::size_t heads,
                             const std::vector<int>& mask_row,
                             std::vector<Tensor>* attn_out) {
  auto [attn, weights] = multi_head_attention(x, p, heads, mask_row);
  if (attn_out) *attn_out = std::move(weights);
  const Tensor h1 = layer_norm(add(x, attn), p.ln1_g, p.ln1_b, kLayerNormEps);
  const Tensor ff =
      add_bias_row(matmul(gelu(add_bias_row(matmul(h1, p.ff1_w), p.ff1_b)), p.ff2_w),
                   p.ff2_b);
  return layer_norm(add(h1, ff), p.ln2_g, p.ln2_b, kLayerNormEps);
}

ForwardTrace encoder_forward(const std::vector<int>& tokens,
                             const EncoderParams& params, const ChopPlan& plan) {
  const EncoderConfig& cfg = params.config;
  plan.validate(cfg.layers, cfg.heads);
  if (tokens.empty()) throw std::invalid_argument("encoder_forward: empty sequence");
  if (tokens.size() > cfg.max_seq_len)
    throw std::invalid_argument("encoder_forward: sequence too long");
  const std::size_t seq = tokens.size();
  const std::size_t d = cfg.d_model;

  Tensor x({seq, d});
  for (std::size_t r = 0; r < seq; ++r) {
    const int id = tokens[r];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw std::invalid_argument("encoder_forward: unknown token id");
    for (std::size_t c = 0; c < d; ++c)
      x.data[r * d + c] = params.tok_emb.at(static_cast<std::size_t>(id), c) +
                          params.pos_emb.at(r, c);
  }

  ForwardTrace trace;
  trace.hidden.push_back(x);
  trace.attention.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    if (plan.is_skipped(l)) {
      trace.hidden.push_back(trace.hidden.back());
      continue;
    }
    std::vector<Tensor> weights;
    Tensor y = encoder_layer_forward(trace.hidden.back(), params.layers[l], cfg.heads,
                                     plan.head_mask[l], &weights);
    trace.attention[l] = std::move(weights);
    trace.hidden.push_back(std::move(y));
  }

  const Tensor cls = trace.cls_feature(cfg.layers);
  trace.logits = add_bias_row(matmul(cls, params.cls_w), params.cls_b);
  ensure_finite(trace.logits, "logits");
  return trace;
}

std::size_t argmax_lowest(const Tensor& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores.data[i] > scores.data[best]) best = i;
  return best;
}

std::size_t classify(const ForwardTrace& trace) { return argmax_lowest(trace.logits); }

ParamCount count_parameters(const EncoderConfig& cfg, const ChopPlan& plan) {
  cfg.validate();
  plan.validate(cfg.layers, cfg.heads);
  const std::size_t d = cfg.d_model;
  ParamCount out;
  out.embedding = cfg.vocab_size * d + cfg.max_seq_len * d;
  out.classifier = d * cfg.num_classes + cfg.num_classes;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerParamCount lc;
    lc.attention = 4 * (d * d + d);
    lc.ffn = d * cfg.d_ff + cfg.d_ff + cfg.d_ff * d + d;
    lc.norms = 4 * d;
    out.per_layer.push_back(lc);
    out.layer_kept.push_back(!plan.is_skipped(l));
    out.encoder_stack += lc.total();
    if (!plan.is_skipped(l)) out.encoder_stack_kept += lc.total();
  }
  out.total = out.embedding + out.classifier + out.encoder_stack;
  out.kept = out.embedding + out.classifier + out.encoder_stack_kept;
  out.kept_fraction = static_cast<double>(out.encoder_stack_kept) /
                      static_cast<double>(out.encoder_stack);
  return out;
}

// ---- tape graph construction ----

EncoderTapeIds register_encoder_params(Tape& tape, const EncoderParams& params) {
  EncoderTapeIds ids;
  ids.tok_emb = tape.leaf(params.tok_emb);
  ids.pos_emb = tape.leaf(params.pos_emb);
  for (const LayerParams& lp : params.layers) {
    LayerTapeIds li;
    li.wq = tape.leaf(lp.wq);
    li.bq = tape.leaf(lp.bq);
    li.wk = tape.leaf(lp.wk);
    li.bk = tape.leaf(lp.bk);
    li.wv = tape.leaf(lp.wv);
    li.bv = tape.leaf(lp.bv);
    li.wo = tape.leaf(lp.wo);
    li.bo = tape.leaf(lp.bo);
    li.ln1_g = tape.leaf(lp.ln1_g);
    li.ln1_b = tape.leaf(lp.ln1_b);
    li.ff1_w = tape.leaf(lp.ff1_w);
    li.ff1_b = tape.leaf(lp.ff1_b);
    li.ff2_w = tape.leaf(lp.ff2_w);
    li.ff2_b = tape.leaf(lp.ff2_b);
    li.ln2_g = tape.leaf(lp.ln2_g);
    li.ln2_b = tape.leaf(lp.ln2_b);
    ids.layers.push_back(li);
  }
  ids.cls_w = tape.leaf(params.cls_w);
  ids.cls_b = tape.leaf(params.cls_b);
  return ids;
}

std::vector<NodeId> EncoderTapeIds::all() const {
  std::vector<NodeId> out{tok_emb, pos_emb};
  for (const LayerTapeIds& l : layers)
    for (NodeId id : {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_g, l.ln1_b,
                      l.ff1_w, l.ff1_b, l.ff2_w, l.ff2_b, l.ln2_g, l.ln2_b})
      out.push_back(id);
  out.push_back(cls_w);
  out.push_back(cls_b);
  return out;
}

NodeId embedding_graph(Tape& tape, const EncoderTapeIds& ids, const EncoderConfig& cfg,
                       const std::vector<std::vector<int>>& batch_tokens) {
  if (batch_tokens.empty()) throw std::invalid_argument("embedding_graph: empty batch");
  const std::size_t seq = batch_tokens[0].size();
  std::vector<int> flat_tokens;
  std::vector<int> flat_pos;
  flat_tokens.reserve(batch_tokens.size() * seq);
  for (const auto& toks : batch_tokens) {
    if (toks.size() != seq)
      throw std::invalid_argument("embedding_graph: ragged batch");
    if (seq == 0 || seq > cfg.max_seq_len)
      throw std::invalid_argument("embedding_graph: bad sequence length");
    for (std::size_t r = 0; r < seq; ++r) {
      flat_tokens.push_back(toks[r]);
      flat_pos.push_back(static_cast<int>(r));
    }
  }
  NodeId te = tape.gather_rows(ids.tok_emb, flat_tokens);
  NodeId pe = tape.gather_rows(ids.pos_emb, flat_pos);
  return tape.add(te, pe);
}

NodeId encoder_layer_graph(Tape& tape, const LayerTapeIds& ids, NodeId x,
                           std::size_t batch, std::size_t seq, std::size_t heads,
                           const std::vector<double>& alpha) {
  NodeId q = tape.add_bias_row(tape.matmul(x, ids.wq), ids.bq);
  NodeId k = tape.add_bias_row(tape.matmul(x, ids.wk), ids.bk);
  NodeId v = tape.add_bias_row(tape.matmul(x, ids.wv), ids.bv);
  NodeId concat = tape.batched_attention(q, k, v, batch, seq, heads, alpha);
  NodeId attn = tape.add_bias_row(tape.matmul(concat, ids.wo), ids.bo);
  NodeId h1 = tape.layer_norm(tape.add(x, attn), ids.ln1_g, ids.ln1_b, kLayerNormEps);
  NodeId ff = tape.add_bias_row(
      tape.matmul(tape.gelu(tape.add_bias_row(tape.matmul(h1, ids.ff1_w), ids.ff1_b)),
                  ids.ff2_w),
      ids.ff2_b);
  return tape.layer_norm(tape.add(h1, ff), ids.ln2_g, ids.ln2_b, kLayerNormEps);
}

NodeId classifier_graph(Tape& tape, const EncoderTapeIds& ids, NodeId x,
                        std::size_t batch, std::size_t seq) {
  std::vector<std::size_t> cls_rows(batch);
  for (std::size_t e = 0; e < batch; ++e) cls_rows[e] = e * seq;
  NodeId cls = tape.pick_rows(x, cls_rows);
  return tape.add_bias_row(tape.matmul(cls, ids.cls_w), ids.cls_b);
}

NodeId encoder_logits_graph(Tape& tape, const EncoderTapeIds& ids,
                            const EncoderConfig& cfg,
                            const std::vector<std::vector<int>>& batch_tokens,
                            const ChopPlan& plan) {
  plan.validate(cfg.layers, cfg.heads);
  const std::size_t batch = batch_tokens.size();
  const std::size_t seq = batch_tokens[0].size();
  NodeId x = embedding_graph(tape, ids, cfg, batch_tokens);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    if (plan.is_skipped(l)) continue;
    std::vector<double> alpha(plan.head_mask[l].begin(), plan.head_mask[l].end());
    x = encoder_layer_graph(tape, ids.layers[l], x, batch, seq, cfg.heads, alpha);
  }
  return classifier_graph(tape, ids, x, batch, seq);
}

}  // namespace choplab
