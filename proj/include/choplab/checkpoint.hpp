#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "choplab/encoder.hpp"
#include "choplab/gate.hpp"

namespace choplab {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoints are a single self-describing JSON file: format version,
// kind, config, named tensors. Doubles round-trip bitwise
// (shortest-representation serialization), so load(save(x)) == x.

void save_encoder_checkpoint(const std::string& path, const EncoderParams& params,
                             const std::string& config_hash, std::uint64_t seed);
EncoderParams load_encoder_checkpoint(const std::string& path,
                                      std::string* config_hash = nullptr);

void save_gate_checkpoint(const std::string& path, const GateParams& gate,
                          const EncoderConfig& cfg, const std::string& config_hash,
                          std::uint64_t seed);
GateParams load_gate_checkpoint(const std::string& path, EncoderConfig* cfg_out = nullptr,
                                std::string* config_hash = nullptr);

}  // namespace choplab
