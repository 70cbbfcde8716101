#pragma once

#include <cstdint>

#include "metagrad/param_set.hpp"

namespace metagrad::meta {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

struct AdamState {
    ParamSet m;
    ParamSet v;
    std::int64_t t = 0;

    static AdamState init_like(const ParamSet& trainables) {
        return AdamState{trainables.zeros_like(), trainables.zeros_like(), 0};
    }
};

/// Standard Adam with bias correction. Returns the updated parameters and
/// advances the moment accumulators in place. Pure value arithmetic.
ParamSet adam_step(const ParamSet& trainables, const ParamSet& grads, AdamState& state, double lr,
                   const AdamConfig& cfg = {});

} // namespace metagrad::meta
