#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "metagrad/meta/engine.hpp"

namespace metagrad::harness {

/// Everything needed to restore training bit-exactly: the full MetaState
/// (including per-step BN statistics and Adam moments), rng stream state and
/// the canonical config text the run was started from.
struct Checkpoint {
    std::string config_text;
    std::uint64_t config_digest = 0;
    std::uint64_t seed = 0;
    int epoch = 0;                 // completed epochs
    std::int64_t iteration = 0;    // next global iteration
    DType dtype = DType::f32;
    std::string train_rng_state;
    meta::MetaState state;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

struct LoadedCheckpoint {
    Checkpoint ckpt;
    bool digest_mismatch = false; // warning status, not an error
};

/// Loads and validates a checkpoint. Truncated or corrupt files raise IoError
/// with the failing byte offset; a digest different from `expected_digest`
/// only flags the mismatch.
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::optional<std::uint64_t> expected_digest = std::nullopt);

} // namespace metagrad::harness
