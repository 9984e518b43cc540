#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "choplab/encoder.hpp"
#include "choplab/gate.hpp"
#include "choplab/taskgen.hpp"
#include "choplab/train.hpp"

namespace choplab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a run needs, parsed from a flat `key = value` file.
// Unknown keys are hard errors; silent typos would poison sweeps.
struct RunConfig {
  std::uint64_t seed = 1;
  EncoderConfig encoder;

  std::size_t task_types = 4;  // 4 or 12
  std::size_t task_seq_len = 32;
  std::size_t task_num_classes = 8;
  // 80% lands in the train split. Learning the positional-lookup circuit
  // needs on the order of 6k train examples per type; smaller corpora
  // never leave the order-blind plateau.
  std::size_t instances_per_type = 8000;

  TrainOptions train;
  GateTrainOptions gate_train;
  bool gate_per_layer = false;
  double gate_lambda = 1e-3;

  std::vector<double> thresholds{0.0, 0.05, 0.1, 0.3, 0.5, 0.7};

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text);
  // Canonical form: every key, sorted, one per line. The config hash
  // is FNV-1a over this text.
  std::string canonical_text() const;
  std::string hash() const;

  std::vector<TaskSpec> task_specs() const;
  Dataset build_dataset() const;
  // Count-cued copy of the suite (separate seed) used by the depth-ramp
  // phases of staged training.
  Dataset build_ramp_dataset() const;
  void validate() const;
};

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,
  kConfigError = 2,
  kCheckpointError = 3,
  kDivergence = 4,
  kIoError = 5,
};

// Written atomically at the end of a run; lists every emitted file.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string code_version;
  std::string started;   // ISO 8601; timestamps live only here
  std::string finished;
  std::vector<std::string> artifacts;
  std::vector<std::pair<std::string, double>> metrics;

  void write(const std::string& path) const;
};

std::string current_timestamp();
std::string code_version();

}  // namespace choplab
