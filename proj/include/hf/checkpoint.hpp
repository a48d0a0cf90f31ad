#pragma once

#include <string>

#include "hf/tensor.hpp"

namespace hf {

// Versioned binary checkpoint: "HFCK" magic, fixed little-endian layout,
// named float32 tensor records for parameters and Adam moments, plus training
// counters and the RNG state. save -> load -> save is byte-identical.

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointState {
    uint64_t train_step = 0;
    uint64_t rng_state = 0;
    uint64_t rng_inc = 0;
    float loss_ema = 0.0f;
    int64_t adam_step = 0;
};

void save_checkpoint(const std::string& path, const NamedParams<float>& params,
                     const Adam<float>* optimizer, const CheckpointState& state,
                     uint64_t config_hash);

// Fills the existing (already shaped) parameter tensors by name. Throws
// CheckpointError on magic/version mismatch, truncation (naming the offending
// record), shape/name mismatches, or a config-hash mismatch unless
// allow_config_mismatch is set.
CheckpointState load_checkpoint(const std::string& path, NamedParams<float>& params,
                                Adam<float>* optimizer, uint64_t expected_config_hash,
                                bool allow_config_mismatch = false);

// Header peek (magic/version checked): returns the stored config hash.
uint64_t checkpoint_config_hash(const std::string& path);

}  // namespace hf
