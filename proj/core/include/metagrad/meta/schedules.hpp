#pragma once

#include <cstdint>
#include <vector>

namespace metagrad::meta {

enum class Order { first, second };

/// Multi-step-loss annealing: uniform at the start, linearly shifting weight
/// onto the final step across `horizon_epochs`, each non-final weight floored.
struct MslSchedule {
    int horizon_epochs = 100; // P
    double floor = 1e-3;      // epsilon
    bool include_pre_update = false;
    bool per_iteration = false;
};

/// Per-step importance weights v indexed by step 0..N (v[0] stays 0 unless
/// include_pre_update). Always sums to 1; every active non-final weight >= floor.
std::vector<double> anneal_loss_weights(double epoch_progress, int n_steps,
                                        const MslSchedule& sched);

/// One-hot on the final step (Eq. 4 degenerated to the vanilla objective).
std::vector<double> final_step_weights(int n_steps);

/// First-order before the switch epoch, second-order from it on.
Order derivative_order(int epoch, int switch_epoch);

/// Cosine annealing over a single cycle, no warm restarts.
double cosine_lr(std::int64_t iteration, std::int64_t total_iterations, double lr_max,
                 double lr_min);

} // namespace metagrad::meta
