#pragma once

#include <string>
#include <vector>

#include "metagrad/param_set.hpp"
#include "metagrad/rng.hpp"
#include "metagrad/tensor.hpp"

namespace metagrad::nn {

enum class NetworkKind { conv, mlp };

/// How batch-norm statistics are sourced.
///   batch:            always current batch statistics, never accumulated
///                     (original-MAML replication)
///   shared_running:   one running set shared by every inner step
///   per_step_running: one running set per step slot (slots 0..N)
enum class BnStatsMode { batch, shared_running, per_step_running };

enum class BnParamsMode { shared, per_step };

struct NetworkSpec {
    NetworkKind kind = NetworkKind::conv;

    // conv backbone
    int in_channels = 1;
    int image_h = 28;
    int image_w = 28;
    int conv_layers = 4;
    int filters = 64;
    int kernel = 3;
    int stride = 2;
    int padding = 1;

    // mlp backbone (tests, toy tasks)
    int input_dim = 2;
    std::vector<int> hidden = {4};

    int n_way = 5;

    BnStatsMode bn_stats = BnStatsMode::per_step_running;
    BnParamsMode bn_params = BnParamsMode::per_step;
    bool bn_bias_only = false; // per-step restricted to biases; scale stays shared
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    int max_inner_steps = 5; // N; per-step modes allocate N+1 slots

    int num_layers() const {
        return kind == NetworkKind::conv ? conv_layers : static_cast<int>(hidden.size());
    }
    int stat_slots() const {
        return bn_stats == BnStatsMode::per_step_running ? max_inner_steps + 1 : 1;
    }
    int param_slots() const {
        return bn_params == BnParamsMode::per_step ? max_inner_steps + 1 : 1;
    }
    /// Spatial extent after layer `k` (1-based) of the conv stack.
    std::pair<int, int> spatial_after(int k) const;
    std::int64_t flat_features() const;
    void validate() const;
};

struct BnSlotStats {
    Tensor mean;
    Tensor var;
    std::int64_t count = 0;
};

/// Running statistics per BN layer and step slot. Shared modes hold a single
/// slot that every step index maps onto. The learned scale/bias live in the
/// network ParamSet under step-indexed names and are selected at forward time.
struct BatchNormState {
    BnStatsMode stats_mode = BnStatsMode::per_step_running;
    double eps = 1e-5;
    double momentum = 0.1;
    std::vector<std::vector<BnSlotStats>> layers; // [layer][slot]

    int slot_for(int step_index) const {
        return layers.empty() || layers[0].size() == 1 ? 0 : step_index;
    }
};

struct BuildResult {
    ParamSet params;
    BatchNormState bn;
};

/// Initializes all parameters (fan-in-scaled uniform weights, gamma=1,
/// beta=0) and zeroed running statistics. Deterministic per rng seed.
BuildResult build_network(const NetworkSpec& spec, Rng& rng, DType dt);

enum class ForwardMode { train, eval };

struct BnObservation {
    int layer; // 0-based BN layer
    int slot;
    Tensor mean; // detached [C]
    Tensor var;  // detached [C]
};
using StatsRecorder = std::vector<BnObservation>;

/// Forward pass under a given parameter version (step_index selects both the
/// BN statistics slot and, in per-step params mode, the gamma/beta entries).
/// Train mode normalizes by current batch statistics and updates slot
/// statistics (immediately, or deferred into `recorder` when one is given).
/// Eval mode normalizes by slot running statistics once they have >= 1
/// update, else falls back to batch statistics without accumulating.
Tensor forward(const NetworkSpec& spec, const ParamSet& params, BatchNormState& bn,
               const Tensor& inputs, int step_index, ForwardMode mode,
               StatsRecorder* recorder = nullptr);

/// EMA update of one slot: new = (1-momentum)*old + momentum*batch.
void update_running_stats(BnSlotStats& slot, const Tensor& batch_mean, const Tensor& batch_var,
                          double momentum);

/// Apply deferred observations in order (the serialization point for
/// concurrent per-task adaptations).
void apply_bn_observations(BatchNormState& bn, const StatsRecorder& recorder);

/// LSLR layer-group key: first path component of a parameter name
/// ("bn2/step1/scale" -> "bn2").
std::string layer_group(const std::string& param_name);

/// Ordered distinct layer groups of a parameter set.
std::vector<std::string> layer_groups(const ParamSet& params);

/// Name of a BN parameter for a given layer/slot under the naming scheme used
/// by build_network ("bn3/scale" or "bn3/step2/scale").
std::string bn_param_name(int layer, int slot, bool scale, BnParamsMode mode, bool bias_only);

} // namespace metagrad::nn
