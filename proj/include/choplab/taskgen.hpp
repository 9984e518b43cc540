#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "choplab/rng.hpp"

namespace choplab {

// One synthetic task family. Sequences are pointer chases: a start
// marker, `depth` pointer hops, and a value token whose class is the
// label. Token ids: 0 = [CLS], 1 = start marker, 2..seq_len+1 pointer
// tokens (pointer to body position j has id 1+j), then value tokens.
struct TaskSpec {
  int type_id = 0;
  std::size_t depth = 0;     // pointer hops; 0 = value adjacent to start
  std::size_t seq_len = 32;  // body length, [CLS] excluded
  std::size_t num_classes = 8;
  // Every value class appears exactly this many times per sequence
  // (chain value included), so token counts carry no label signal.
  // Different counts give the "surface variants" of the 12-type suite.
  std::size_t value_rounds = 2;
  // When false, distractor values are drawn uniformly instead of being
  // count-balanced, so class counts weakly favour the label. Depth-0
  // suites disable balancing: the count cue gives the optimizer an early
  // foothold from which the positional lookup circuit can form, and the
  // order-blind-baseline guarantee is only required of depth ≥ 1 tasks.
  bool balanced_values = true;

  static constexpr int kCls = 0;
  static constexpr int kStart = 1;
  int ptr_token(std::size_t body_pos) const { return 1 + static_cast<int>(body_pos); }
  int value_token(std::size_t cls) const {
    return static_cast<int>(seq_len) + 2 + static_cast<int>(cls);
  }
  bool is_ptr(int tok) const { return tok >= 2 && tok <= static_cast<int>(seq_len) + 1; }
  bool is_value(int tok) const {
    return tok >= value_token(0) && tok < value_token(num_classes);
  }
  std::size_t ptr_target(int tok) const { return static_cast<std::size_t>(tok - 1); }
  std::size_t value_class(int tok) const {
    return static_cast<std::size_t>(tok - value_token(0));
  }
  // Smallest vocabulary containing every token this spec can emit.
  std::size_t vocab_required() const { return seq_len + 2 + num_classes; }

  void validate() const;
};

struct LabeledInstance {
  std::vector<int> tokens;  // position 0 = [CLS]
  int label = 0;
  int type_id = 0;
};

struct TaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic given (spec, rng state). forced_label < 0 samples the
// label uniformly; generate_dataset forces labels round-robin to keep
// class histograms balanced within 1.
LabeledInstance generate_instance(const TaskSpec& spec, Rng& rng, int forced_label = -1);

// Independent oracle: walks the pointer chain by direct indexing and
// returns the label. Throws TaskError on a broken chain or cycle.
int resolve(const TaskSpec& spec, const std::vector<int>& tokens);

struct Dataset {
  std::vector<TaskSpec> specs;
  std::uint64_t seed = 0;
  std::vector<LabeledInstance> train, val, test;
};

// n instances per type, split 80/10/10 by per-index hash, each split
// shuffled deterministically.
Dataset generate_dataset(const std::vector<TaskSpec>& specs, std::size_t n_per_type,
                         std::uint64_t seed);

// Default suites: 4 types with depths 0..3, or the 12-type variant
// (depths 0..3 crossed with 3 value-density surface variants).
std::vector<TaskSpec> make_suite(std::size_t num_types, std::size_t seq_len,
                                 std::size_t num_classes);

// JSON-lines interchange: {"type_id":..,"tokens":[..],"label":..}.
void write_jsonl(const std::string& path, const std::vector<LabeledInstance>& instances);
std::vector<LabeledInstance> read_jsonl(const std::string& path);
// Manifest with specs and seed, alongside the data files.
void write_dataset_manifest(const std::string& path, const Dataset& ds);

}  // namespace choplab
