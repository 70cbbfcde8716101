#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metagrad/tensor.hpp"

namespace metagrad::data {

/// One few-shot task: a support set for task-level learning and a disjoint
/// target set for scoring the adapted model.
struct Episode {
    Tensor support_x; // [n_way*k_shot, ...]
    std::vector<std::int64_t> support_y;
    Tensor target_x; // [n_way*q_targets, ...]
    std::vector<std::int64_t> target_y;
    std::string task_id;
};

} // namespace metagrad::data
