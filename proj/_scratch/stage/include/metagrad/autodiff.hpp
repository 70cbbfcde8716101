#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "metagrad/tensor.hpp"

namespace metagrad::autodiff {

/// One recorded operation. Nodes form the computation record: `seq` is a
/// globally monotonic counter, so within any single record inputs always
/// precede outputs and replay order is deterministic.
struct Node {
    const char* kind;
    std::vector<Tensor> inputs;          // saved values + provenance for the backward pass
    std::weak_ptr<TensorImpl> output;    // weak: tensor owns node, not the reverse
    // Given d(loss)/d(output), return d(loss)/d(input_i) per input (undefined
    // Tensor for non-differentiable inputs). Implemented in terms of recorded
    // primitives so the backward pass can itself be recorded (second order).
    std::function<std::vector<Tensor>(const Tensor&)> backward;
    std::uint64_t seq = 0;
    int grad_depth = 0;                  // >0: node created inside a create_graph backward
};

bool recording_enabled();
int current_grad_depth();

/// Disables recording for the current thread while alive.
class NoRecordGuard {
public:
    NoRecordGuard();
    ~NoRecordGuard();
    NoRecordGuard(const NoRecordGuard&) = delete;
    NoRecordGuard& operator=(const NoRecordGuard&) = delete;

private:
    bool prev_;
};

/// Forces recording on (used by grad when create_graph is requested).
class RecordGuard {
public:
    RecordGuard();
    ~RecordGuard();
    RecordGuard(const RecordGuard&) = delete;
    RecordGuard& operator=(const RecordGuard&) = delete;

private:
    bool prev_;
};

/// Attach a freshly executed op to the record. No-op (returns t unchanged)
/// when recording is disabled.
Tensor record_op(const char* kind, Tensor result, std::vector<Tensor> inputs,
                 std::function<std::vector<Tensor>(const Tensor&)> backward);

/// Opt-in debug mode: scan every primitive output and fail fast on the first
/// non-finite value, naming the offending operation and record position.
void set_finite_check(bool enabled);
bool finite_check_enabled();

struct RecordStats {
    std::uint64_t nodes_created = 0;
    std::uint64_t double_backward_nodes = 0; // created at grad_depth >= 1
};
RecordStats stats_snapshot();
void stats_reset();

/// Reverse-mode gradients of a scalar loss w.r.t. `wrt` tensors.
/// When create_graph is true the returned gradients carry provenance and can
/// be differentiated again. Tensors the loss does not reach get zeros.
std::vector<Tensor> grad(const Tensor& loss, const std::vector<Tensor>& wrt, bool create_graph);

} // namespace metagrad::autodiff

namespace metagrad {

/// Value-identical tensor treated as a constant by gradients.
Tensor stop_gradient(const Tensor& t);

} // namespace metagrad
