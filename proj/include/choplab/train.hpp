#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "choplab/encoder.hpp"
#include "choplab/taskgen.hpp"

namespace choplab {

struct TrainOptions {
  std::size_t steps = 800;     // final phase on the real (balanced) suite
  std::size_t batch = 32;
  double lr = 1e-3;
  std::size_t warmup = 200;
  std::size_t eval_interval = 400;
  // Steps per depth-ramp phase (one phase per distinct task depth, easy
  // to hard) in train_encoder_staged. The positional-lookup and
  // pointer-following circuits have no useful gradient on count-balanced
  // sequences until they already half-exist, so each phase trains on the
  // count-cued variant of one depth (70%) plus replay of easier depths
  // (30%); the final `steps` phase then drops the count cue entirely.
  std::size_t ladder_steps = 2600;
  std::uint64_t seed = 1;
  std::ostream* log = nullptr;
};

struct EvalPoint {
  std::size_t step = 0;
  double val_overall = 0.0;
  std::vector<std::pair<int, double>> per_type;  // (type_id, accuracy)
};

struct TrainResult {
  std::vector<double> loss_history;
  std::vector<EvalPoint> eval_history;
  EncoderParams best;  // best-validation snapshot
  double best_val_acc = 0.0;
  bool diverged = false;  // params hold the last finite state when set
};

// Cross-entropy training on the train split; validation accuracy is
// logged every eval_interval steps and the best snapshot kept. On a
// non-finite loss, training stops and `diverged` is set; `best` still
// holds the last good snapshot.
TrainResult train_encoder(const Dataset& data, EncoderParams& params,
                          const TrainOptions& opt);

// Adds each body position's embedding row onto the embedding of the
// pointer token that names it, so "attend to the named position" is a
// plain similarity match from the first step. Serves as the desk-scale
// stand-in for starting from a pretrained checkpoint; the rows stay
// ordinary trainable parameters.
void align_pointer_embeddings(EncoderParams& params, const TaskSpec& spec);

// Unbalanced copies of `specs` for the depth-ramp phases.
std::vector<TaskSpec> count_cued_variant(std::vector<TaskSpec> specs);

// Depth-ramp training: one phase of opt.ladder_steps per distinct task
// depth in `aux` (easiest first, 70% fresh / 30% replay), then opt.steps
// on `data` itself. Validation always runs against data.val. With both
// opt.ladder_steps and opt.steps zero, params are returned untouched.
TrainResult train_encoder_staged(const Dataset& data, const Dataset& aux,
                                 EncoderParams& params, const TrainOptions& opt);

}  // namespace choplab
