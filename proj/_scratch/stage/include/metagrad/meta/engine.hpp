#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metagrad/data/episode.hpp"
#include "metagrad/meta/adam.hpp"
#include "metagrad/meta/schedules.hpp"
#include "metagrad/nn/network.hpp"
#include "metagrad/param_set.hpp"
#include "metagrad/rng.hpp"

namespace metagrad::meta {

/// The six improvement toggles. All off replicates vanilla MAML; all on is
/// the full improved configuration.
struct MetaToggles {
    bool msl = true;  // multi-step loss
    bool lslr = true; // learned per-layer per-step inner rates
    bool bnrs = true; // per-step BN running statistics
    bool bnwb = true; // per-step BN scale/bias
    bool da = true;   // derivative-order annealing
    bool ca = true;   // cosine-annealed outer rate
};

struct MetaConfig {
    MetaToggles toggles;
    int inner_steps = 5;  // N
    int task_batch = 16;  // B
    double fixed_alpha = 0.1;
    double alpha_init = 0.1;
    int da_switch_epoch = 50;
    Order base_order = Order::second; // order in effect when DA is off
    MslSchedule msl;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    std::int64_t total_iterations = 1;   // cosine cycle length
    std::int64_t iterations_per_epoch = 1;
    int parallel_tasks = 1;              // per-task adaptation concurrency
    double grad_clip = 0.0;              // 0 = off; diagnostic only
    AdamConfig adam;
};

/// Everything the outer loop learns plus its optimizer state.
struct MetaState {
    ParamSet theta0;               // includes per-step BN scale/bias entries
    ParamSet inner_lrs;            // "alpha/<group>/step<i>", empty when LSLR off
    nn::BatchNormState bn;         // running statistics
    AdamState adam;                // over trainables()
    std::vector<double> loss_weights; // v in effect, indexed by step 0..N

    /// theta0 followed by inner_lrs; gradient/Adam ordering contract.
    ParamSet trainables() const { return ParamSet::concat(theta0, inner_lrs); }
    void assign_trainables(const ParamSet& updated);
};

MetaState init_meta_state(const nn::NetworkSpec& spec, const MetaConfig& cfg, Rng& rng, DType dt);

// ---- inner loop (Eq. 1) ----

/// theta' = theta - alpha * grad, single shared scalar rate.
ParamSet inner_step(const ParamSet& params, const ParamSet& support_grads, double alpha,
                    bool create_graph);

/// Per-layer learned rates for step `step_index` (1-based). Rates are scalar
/// tensors named "alpha/<group>/step<i>"; sign-unconstrained.
ParamSet inner_step(const ParamSet& params, const ParamSet& support_grads,
                    const ParamSet& inner_lrs, int step_index, bool create_graph);

/// Task-level model abstraction: the engine only needs per-step logits and a
/// loss. The convolutional/mlp network is the production model; tests plug in
/// scalar toy models.
class TaskModel {
public:
    virtual ~TaskModel() = default;
    virtual Tensor logits(const ParamSet& params, const Tensor& x, int step_index,
                          nn::ForwardMode mode, nn::StatsRecorder* rec) const = 0;
    virtual Tensor loss_from_logits(const Tensor& logits,
                                    const std::vector<std::int64_t>& y) const = 0;
    Tensor loss(const ParamSet& params, const Tensor& x, const std::vector<std::int64_t>& y,
                int step_index, nn::ForwardMode mode, nn::StatsRecorder* rec) const {
        return loss_from_logits(logits(params, x, step_index, mode, rec), y);
    }
};

/// Cross-entropy on nn::forward.
class NetworkTaskModel final : public TaskModel {
public:
    NetworkTaskModel(const nn::NetworkSpec& spec, nn::BatchNormState& bn)
        : spec_(&spec), bn_(&bn) {}
    Tensor logits(const ParamSet& params, const Tensor& x, int step_index, nn::ForwardMode mode,
                  nn::StatsRecorder* rec) const override;
    Tensor loss_from_logits(const Tensor& logits,
                            const std::vector<std::int64_t>& y) const override;

private:
    const nn::NetworkSpec* spec_;
    nn::BatchNormState* bn_;
};

struct AdaptationTrajectory {
    std::vector<ParamSet> params;       // theta_0 .. theta_N
    std::vector<double> support_losses; // loss at theta_{i-1} driving step i
};

enum class AdaptPurpose { training, inference };

struct AdaptOptions {
    int n_steps = 1;
    Order order = Order::second;
    AdaptPurpose purpose = AdaptPurpose::training;
    double fixed_alpha = 0.1;
    const ParamSet* inner_lrs = nullptr; // LSLR rates; null = shared scalar
    nn::StatsRecorder* recorder = nullptr;
};

/// N inner steps on the support loss; forward at parameter version i uses BN
/// slot i. order=first detaches every support gradient (the update stays
/// differentiable w.r.t. theta0 and alpha through its affine part).
AdaptationTrajectory adapt(const TaskModel& model, const ParamSet& theta0, const Tensor& support_x,
                           const std::vector<std::int64_t>& support_y, const AdaptOptions& opt);

// ---- meta objectives (Eqs. 2 and 4) ----

/// Sum over the task batch of the target loss of the final adapted
/// parameters. Target forwards run at BN slot N in eval mode.
Tensor meta_loss_vanilla(const TaskModel& model, const std::vector<AdaptationTrajectory>& trajs,
                         const std::vector<data::Episode>& tasks);

/// Sum over tasks of the v-weighted per-step target losses. v is indexed by
/// step 0..N and must sum to 1. Optionally reports the per-task per-step
/// breakdown (entries where v_i = 0 stay 0).
Tensor multi_step_meta_loss(const TaskModel& model, const std::vector<AdaptationTrajectory>& trajs,
                            const std::vector<data::Episode>& tasks, const std::vector<double>& v,
                            std::vector<std::vector<double>>* per_step_breakdown = nullptr);

// ---- outer loop (Eq. 3) ----

struct OuterMetrics {
    double loss = 0.0;
    double accuracy = 0.0; // final-step target accuracy, mean over tasks
    std::vector<double> support_losses; // per step, mean over tasks
    std::vector<double> target_losses;  // per step 0..N, mean over tasks
    std::vector<double> v;
    double beta = 0.0;
    Order order = Order::second;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
    std::uint64_t double_backward_nodes = 0;
};

std::vector<double> current_loss_weights(const MetaConfig& cfg, int epoch, std::int64_t iteration);
Order resolve_order(const MetaConfig& cfg, int epoch);

/// One meta-iteration: adapt each task, aggregate the (multi-step) meta loss,
/// differentiate w.r.t. all trainables, Adam-update with the scheduled rate,
/// and fold the deferred BN statistics in task order.
OuterMetrics outer_update(const nn::NetworkSpec& spec, const MetaConfig& cfg, MetaState& state,
                          const std::vector<data::Episode>& batch, int epoch,
                          std::int64_t iteration);

} // namespace metagrad::meta
