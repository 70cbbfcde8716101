#include "metagrad/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_map>
#include <unordered_set>

#include "metagrad/ops.hpp"

namespace metagrad::autodiff {

namespace {

thread_local bool t_recording = true;
thread_local int t_grad_depth = 0;

std::atomic<std::uint64_t> g_seq{1};
std::atomic<bool> g_finite_check{false};
std::atomic<std::uint64_t> g_nodes_created{0};
std::atomic<std::uint64_t> g_double_backward_nodes{0};

} // namespace

bool recording_enabled() { return t_recording; }
int current_grad_depth() { return t_grad_depth; }

NoRecordGuard::NoRecordGuard() : prev_(t_recording) { t_recording = false; }
NoRecordGuard::~NoRecordGuard() { t_recording = prev_; }

RecordGuard::RecordGuard() : prev_(t_recording) { t_recording = true; }
RecordGuard::~RecordGuard() { t_recording = prev_; }

void set_finite_check(bool enabled) { g_finite_check.store(enabled); }
bool finite_check_enabled() { return g_finite_check.load(std::memory_order_relaxed); }

RecordStats stats_snapshot() { return {g_nodes_created.load(), g_double_backward_nodes.load()}; }

void stats_reset() {
    g_nodes_created.store(0);
    g_double_backward_nodes.store(0);
}

Tensor record_op(const char* kind, Tensor result, std::vector<Tensor> inputs,
                 std::function<std::vector<Tensor>(const Tensor&)> backward) {
    if (finite_check_enabled() && !result.all_finite())
        throw NumericError(std::string("non-finite output of '") + kind + "' (record position " +
                           std::to_string(g_seq.load()) + ")");
    if (!t_recording) return result;

    auto node = std::make_shared<Node>();
    node->kind = kind;
    node->inputs = std::move(inputs);
    node->output = std::weak_ptr<TensorImpl>(); // set below via fresh impl
    node->backward = std::move(backward);
    node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    node->grad_depth = t_grad_depth;

    g_nodes_created.fetch_add(1, std::memory_order_relaxed);
    if (t_grad_depth > 0) g_double_backward_nodes.fetch_add(1, std::memory_order_relaxed);

    // The result tensor may alias a payload (reshape); give it a fresh impl so
    // provenance attaches to this op alone.
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = result.shape();
    impl->dtype = result.dtype();
    impl->data = result.impl()->data;
    impl->node = node;
    Tensor out = Tensor::wrap(std::move(impl));
    node->output = out.impl_ptr();
    return out;
}

namespace {

struct GradContext {
    std::unordered_map<TensorImpl*, Tensor> grads;
    std::unordered_set<TensorImpl*> wrt_set;
};

} // namespace

std::vector<Tensor> grad(const Tensor& loss, const std::vector<Tensor>& wrt, bool create_graph) {
    if (!loss.defined()) throw ShapeError("grad: undefined loss tensor");
    if (loss.numel() != 1)
        throw ShapeError("grad: loss must be scalar, got shape " + shape_str(loss.shape()));

    std::unordered_set<TensorImpl*> wrt_set;
    for (const auto& t : wrt) wrt_set.insert(t.impl());

    // Collect nodes reachable from the loss.
    std::vector<Node*> order;
    {
        std::unordered_set<Node*> seen;
        std::vector<Node*> stack;
        if (loss.has_node()) stack.push_back(loss.node().get());
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            if (!seen.insert(n).second) continue;
            order.push_back(n);
            for (const auto& in : n->inputs)
                if (in.defined() && in.has_node()) stack.push_back(in.node().get());
        }
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->seq < b->seq; });

    // needed(node): its subtree contains a wrt tensor; only those run backward.
    std::unordered_set<Node*> needed;
    for (Node* n : order) {
        bool need = false;
        for (const auto& in : n->inputs) {
            if (!in.defined()) continue;
            if (wrt_set.count(in.impl()) || (in.has_node() && needed.count(in.node().get()))) {
                need = true;
                break;
            }
        }
        if (!need) {
            if (auto out = n->output.lock(); out && wrt_set.count(out.get())) need = true;
        }
        if (need) needed.insert(n);
    }

    std::unordered_map<TensorImpl*, Tensor> grads;
    grads.emplace(loss.impl(), Tensor::ones(Shape{}, loss.dtype()));

    auto run_backward = [&](auto&& body) {
        if (create_graph) {
            RecordGuard rg;
            ++t_grad_depth;
            try {
                body();
            } catch (...) {
                --t_grad_depth;
                throw;
            }
            --t_grad_depth;
        } else {
            NoRecordGuard ng;
            body();
        }
    };

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!needed.count(n)) continue;
        auto out_impl = n->output.lock();
        if (!out_impl) continue;
        auto git = grads.find(out_impl.get());
        if (git == grads.end()) continue;
        Tensor gout = git->second;

        std::vector<Tensor> gins;
        run_backward([&] { gins = n->backward(gout); });
        if (gins.size() != n->inputs.size())
            throw ShapeError(std::string("backward of '") + n->kind + "' returned " +
                             std::to_string(gins.size()) + " grads for " +
                             std::to_string(n->inputs.size()) + " inputs");

        for (std::size_t i = 0; i < gins.size(); ++i) {
            if (!gins[i].defined()) continue;
            const Tensor& in = n->inputs[i];
            bool wanted = wrt_set.count(in.impl()) ||
                          (in.has_node() && needed.count(in.node().get()));
            if (!wanted) continue;
            if (gins[i].shape() != in.shape())
                throw ShapeError(std::string("backward of '") + n->kind + "' produced grad shape " +
                                 shape_str(gins[i].shape()) + " for input " + shape_str(in.shape()));
            auto existing = grads.find(in.impl());
            if (existing == grads.end()) {
                grads.emplace(in.impl(), gins[i]);
            } else {
                Tensor acc;
                run_backward([&] { acc = add(existing->second, gins[i]); });
                existing->second = acc;
            }
        }
    }

    std::vector<Tensor> result;
    result.reserve(wrt.size());
    for (const auto& t : wrt) {
        auto it2 = grads.find(t.impl());
        if (it2 != grads.end())
            result.push_back(it2->second);
        else
            result.push_back(Tensor::zeros(t.shape(), t.dtype()));
    }
    return result;
}

} // namespace metagrad::autodiff

namespace metagrad {

Tensor stop_gradient(const Tensor& t) { return t.detached(); }

} // namespace metagrad
