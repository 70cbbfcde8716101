#include "metagrad/meta/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "metagrad/errors.hpp"

namespace metagrad::meta {

std::vector<double> anneal_loss_weights(double epoch_progress, int n_steps,
                                        const MslSchedule& sched) {
    if (epoch_progress < 0.0) throw ShapeError("anneal_loss_weights: negative epoch");
    if (n_steps < 1) throw ShapeError("anneal_loss_weights: n_steps must be >= 1");
    const int first = sched.include_pre_update ? 0 : 1;
    const int active = n_steps + 1 - first;
    if (sched.floor < 0.0 || sched.floor * (active - 1) >= 1.0)
        throw ShapeError("anneal_loss_weights: floor incompatible with step count");

    const double t =
        sched.horizon_epochs <= 0
            ? 1.0
            : std::min(1.0, epoch_progress / static_cast<double>(sched.horizon_epochs));
    std::vector<double> v(static_cast<std::size_t>(n_steps) + 1, 0.0);
    double non_final_sum = 0.0;
    for (int i = first; i < n_steps; ++i) {
        v[static_cast<std::size_t>(i)] =
            std::max(sched.floor, (1.0 - t) / static_cast<double>(active));
        non_final_sum += v[static_cast<std::size_t>(i)];
    }
    v[static_cast<std::size_t>(n_steps)] = 1.0 - non_final_sum;
    return v;
}

std::vector<double> final_step_weights(int n_steps) {
    std::vector<double> v(static_cast<std::size_t>(n_steps) + 1, 0.0);
    v.back() = 1.0;
    return v;
}

Order derivative_order(int epoch, int switch_epoch) {
    return epoch < switch_epoch ? Order::first : Order::second;
}

double cosine_lr(std::int64_t iteration, std::int64_t total_iterations, double lr_max,
                 double lr_min) {
    if (total_iterations <= 0) throw ShapeError("cosine_lr: total_iterations must be > 0");
    if (iteration < 0 || iteration > total_iterations)
        throw ShapeError("cosine_lr: iteration outside [0, total]");
    const double frac = static_cast<double>(iteration) / static_cast<double>(total_iterations);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

} // namespace metagrad::meta
