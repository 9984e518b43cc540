#include "choplab/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "choplab/ablation.hpp"
#include "choplab/adam.hpp"
#include "choplab/rng.hpp"

namespace choplab {

namespace {

// Shared training-loop state so the plain and staged trainers run the
// exact same step: sample a batch, build the graph, backprop, Adam with
// linear warmup on the global step, periodic validation with
// best-snapshot tracking.
struct TrainLoop {
  const Dataset& data;  // owns the validation split used throughout
  EncoderParams& params;
  const TrainOptions& opt;
  ChopPlan identity;
  std::vector<Tensor*> tensors;
  AdamState adam;
  Rng batch_rng;
  TrainResult result;
  std::size_t global_step = 0;

  TrainLoop(const Dataset& data_, EncoderParams& params_, const TrainOptions& opt_)
      : data(data_),
        params(params_),
        opt(opt_),
        identity(ChopPlan::identity(params_.config)),
        tensors(params_.tensors()),
        adam(AdamState::init(tensors, opt_.lr)),
        batch_rng(derive_seed(opt_.seed, "train/batches")) {
    result.best = params_;
  }

  void run_eval() {
    if (data.val.empty()) return;
    const EvalReport rep = eval_by_type(params, identity, data.val);
    EvalPoint pt;
    pt.step = global_step;
    pt.val_overall = rep.overall;
    for (const auto& [type, acc] : rep.per_type_acc) pt.per_type.emplace_back(type, acc);
    result.eval_history.push_back(pt);
    if (opt.log) {
      (*opt.log) << "step " << global_step << " val " << rep.overall;
      for (const auto& [type, acc] : rep.per_type_acc)
        (*opt.log) << " type" << type << "=" << acc;
      (*opt.log) << "\n";
    }
    if (rep.overall >= result.best_val_acc) {
      result.best_val_acc = rep.overall;
      result.best = params;
    }
  }

  // Runs `steps` optimizer steps, drawing each example through `sample`.
  // Returns false when the loss went non-finite (result.diverged is set).
  bool run_phase(std::size_t steps,
                 const std::function<const LabeledInstance&(Rng&)>& sample) {
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<std::vector<int>> tokens;
      std::vector<int> labels;
      for (std::size_t i = 0; i < opt.batch; ++i) {
        const LabeledInstance& inst = sample(batch_rng);
        tokens.push_back(inst.tokens);
        labels.push_back(inst.label);
      }
      Tape tape;
      EncoderTapeIds ids = register_encoder_params(tape, params);
      NodeId logits = encoder_logits_graph(tape, ids, params.config, tokens, identity);
      NodeId loss = tape.cross_entropy_mean(logits, labels);
      const double loss_val = tape.value(loss).item();
      if (!std::isfinite(loss_val)) {
        result.diverged = true;
        if (opt.log) (*opt.log) << "diverged at step " << global_step << "\n";
        return false;
      }
      result.loss_history.push_back(loss_val);
      tape.backward(loss);

      std::vector<const Tensor*> grads;
      for (NodeId id : ids.all()) grads.push_back(&tape.grad(id));
      const double warm =
          opt.warmup > 0 ? std::min(1.0, static_cast<double>(global_step + 1) /
                                             static_cast<double>(opt.warmup))
                         : 1.0;
      adam_step(tensors, grads, adam, warm);

      ++global_step;
      if (opt.eval_interval > 0 && global_step % opt.eval_interval == 0) run_eval();
    }
    return true;
  }

  TrainResult finish() {
    const bool evaluated_last =
        opt.eval_interval > 0 && global_step > 0 && global_step % opt.eval_interval == 0;
    if (!result.diverged && !evaluated_last) run_eval();
    if (data.val.empty()) result.best = params;
    return std::move(result);
  }
};

}  // namespace

TrainResult train_encoder(const Dataset& data, EncoderParams& params,
                          const TrainOptions& opt) {
  if (data.train.empty()) throw std::invalid_argument("train_encoder: empty train split");
  TrainLoop loop(data, params, opt);
  loop.run_phase(opt.steps, [&](Rng& rng) -> const LabeledInstance& {
    return data.train[rng.below(data.train.size())];
  });
  return loop.finish();
}

void align_pointer_embeddings(EncoderParams& params, const TaskSpec& spec) {
  const std::size_t d = params.config.d_model;
  if (params.pos_emb.rows() < spec.seq_len + 1)
    throw std::invalid_argument("align_pointer_embeddings: position table too short");
  for (std::size_t pos = 1; pos <= spec.seq_len; ++pos) {
    const int tok = spec.ptr_token(pos);
    if (tok < 0 || static_cast<std::size_t>(tok) >= params.tok_emb.rows())
      throw std::invalid_argument("align_pointer_embeddings: vocabulary too small");
    for (std::size_t c = 0; c < d; ++c)
      params.tok_emb.at(static_cast<std::size_t>(tok), c) += params.pos_emb.at(pos, c);
  }
}

std::vector<TaskSpec> count_cued_variant(std::vector<TaskSpec> specs) {
  for (TaskSpec& s : specs) s.balanced_values = false;
  return specs;
}

TrainResult train_encoder_staged(const Dataset& data, const Dataset& aux,
                                 EncoderParams& params, const TrainOptions& opt) {
  if (data.train.empty())
    throw std::invalid_argument("train_encoder_staged: empty train split");
  if (opt.ladder_steps > 0 && aux.train.empty())
    throw std::invalid_argument("train_encoder_staged: empty ramp train split");

  TrainLoop loop(data, params, opt);

  if (opt.ladder_steps > 0) {
    std::map<int, std::size_t> type_depth;
    for (const TaskSpec& s : aux.specs) type_depth[s.type_id] = s.depth;
    // Train indices bucketed by depth; std::map keeps depths ascending.
    std::map<std::size_t, std::vector<std::size_t>> by_depth;
    for (std::size_t i = 0; i < aux.train.size(); ++i) {
      const auto it = type_depth.find(aux.train[i].type_id);
      if (it == type_depth.end())
        throw std::invalid_argument("train_encoder_staged: instance with unknown type");
      by_depth[it->second].push_back(i);
    }

    std::vector<std::size_t> replay;  // everything from completed phases
    for (const auto& [depth, fresh] : by_depth) {
      const bool mix = !replay.empty();
      const bool ok =
          loop.run_phase(opt.ladder_steps, [&](Rng& rng) -> const LabeledInstance& {
            // 70% current depth, 30% replay of easier depths.
            const std::vector<std::size_t>& pool =
                (mix && rng.below(10) < 3) ? replay : fresh;
            return aux.train[pool[rng.below(pool.size())]];
          });
      if (!ok) return loop.finish();
      replay.insert(replay.end(), fresh.begin(), fresh.end());
    }
  }

  loop.run_phase(opt.steps, [&](Rng& rng) -> const LabeledInstance& {
    return data.train[rng.below(data.train.size())];
  });
  return loop.finish();
}

}  // namespace choplab
