#include "metagrad/meta/engine.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <sstream>

#include "metagrad/autodiff.hpp"
#include "metagrad/ops.hpp"

namespace metagrad::meta {

void MetaState::assign_trainables(const ParamSet& updated) {
    for (const auto& [name, t] : updated) {
        if (theta0.has(name))
            theta0.set(name, t);
        else
            inner_lrs.set(name, t);
    }
}

MetaState init_meta_state(const nn::NetworkSpec& spec, const MetaConfig& cfg, Rng& rng, DType dt) {
    auto built = nn::build_network(spec, rng, dt);
    MetaState state;
    state.theta0 = std::move(built.params);
    state.bn = std::move(built.bn);
    if (cfg.toggles.lslr) {
        for (const auto& group : nn::layer_groups(state.theta0))
            for (int i = 1; i <= cfg.inner_steps; ++i)
                state.inner_lrs.add("alpha/" + group + "/step" + std::to_string(i),
                                    Tensor::scalar(cfg.alpha_init, dt));
    }
    state.adam = AdamState::init_like(state.trainables());
    state.loss_weights = current_loss_weights(cfg, 0, 0);
    return state;
}

namespace {

ParamSet inner_step_impl(const ParamSet& params, const ParamSet& grads,
                         const std::function<Tensor(const std::string&)>& alpha_for,
                         bool create_graph) {
    params.require_compatible(grads, "inner_step");
    std::optional<autodiff::NoRecordGuard> guard;
    if (!create_graph) guard.emplace();
    ParamSet out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params.entry(i);
        out.add(name, sub(p, mul(alpha_for(name), grads.entry(i).second)));
    }
    return out;
}

} // namespace

ParamSet inner_step(const ParamSet& params, const ParamSet& support_grads, double alpha,
                    bool create_graph) {
    DType dt = params.empty() ? DType::f32 : params.entry(0).second.dtype();
    Tensor a = Tensor::scalar(alpha, dt);
    return inner_step_impl(params, support_grads, [&](const std::string&) { return a; },
                           create_graph);
}

ParamSet inner_step(const ParamSet& params, const ParamSet& support_grads,
                    const ParamSet& inner_lrs, int step_index, bool create_graph) {
    if (step_index < 1) throw ShapeError("inner_step: step_index must be >= 1 with learned rates");
    return inner_step_impl(
        params, support_grads,
        [&](const std::string& name) {
            return inner_lrs.at("alpha/" + nn::layer_group(name) + "/step" +
                                std::to_string(step_index));
        },
        create_graph);
}

Tensor NetworkTaskModel::logits(const ParamSet& params, const Tensor& x, int step_index,
                                nn::ForwardMode mode, nn::StatsRecorder* rec) const {
    return nn::forward(*spec_, params, *bn_, x, step_index, mode, rec);
}

Tensor NetworkTaskModel::loss_from_logits(const Tensor& logits,
                                          const std::vector<std::int64_t>& y) const {
    return cross_entropy(logits, y);
}

AdaptationTrajectory adapt(const TaskModel& model, const ParamSet& theta0, const Tensor& support_x,
                           const std::vector<std::int64_t>& support_y, const AdaptOptions& opt) {
    if (opt.n_steps < 1) throw ShapeError("adapt: n_steps must be >= 1");
    if (!support_x.defined() || support_x.numel() == 0)
        throw ShapeError("adapt: empty support set");

    const bool training = opt.purpose == AdaptPurpose::training;
    const bool second_order = training && opt.order == Order::second;

    AdaptationTrajectory traj;
    ParamSet current = training ? theta0 : theta0.detached();
    traj.params.push_back(current);
    for (int i = 1; i <= opt.n_steps; ++i) {
        Tensor loss;
        ParamSet grads;
        {
            // The support gradient needs the forward recorded even at
            // inference (where any enclosing scope has recording off); the
            // step's graph is dropped again right after the backward.
            autodiff::RecordGuard rg;
            loss = model.loss(current, support_x, support_y, i - 1, nn::ForwardMode::train,
                              opt.recorder);
            grads = gradients(loss, current, second_order);
        }
        traj.support_losses.push_back(loss.item());
        if (!second_order) grads = grads.detached(); // frozen-derivative path
        current = opt.inner_lrs
                      ? inner_step(current, grads, *opt.inner_lrs, i, training)
                      : inner_step(current, grads, opt.fixed_alpha, training);
        traj.params.push_back(current);
    }
    return traj;
}

Tensor meta_loss_vanilla(const TaskModel& model, const std::vector<AdaptationTrajectory>& trajs,
                         const std::vector<data::Episode>& tasks) {
    if (trajs.size() != tasks.size())
        throw ShapeError("meta_loss_vanilla: trajectory/task count mismatch");
    Tensor total;
    for (std::size_t b = 0; b < trajs.size(); ++b) {
        const int n = static_cast<int>(trajs[b].params.size()) - 1;
        Tensor lg = model.logits(trajs[b].params.back(), tasks[b].target_x, n,
                                 nn::ForwardMode::eval, nullptr);
        Tensor lb = model.loss_from_logits(lg, tasks[b].target_y);
        total = total.defined() ? add(total, lb) : lb;
    }
    return total;
}

namespace {

void validate_weights(const std::vector<double>& v, std::size_t traj_len) {
    if (v.size() != traj_len)
        throw ShapeError("multi_step_meta_loss: weight vector length " + std::to_string(v.size()) +
                         " does not match trajectory length " + std::to_string(traj_len));
    double s = 0.0;
    for (double x : v) s += x;
    if (std::abs(s - 1.0) > 1e-9)
        throw ShapeError("multi_step_meta_loss: weights sum to " + std::to_string(s));
}

/// Weighted per-step target loss of one task. Target forwards use BN slot i in
/// eval mode (running statistics once accumulated, else batch statistics).
Tensor task_weighted_loss(const TaskModel& model, const AdaptationTrajectory& traj,
                          const data::Episode& task, const std::vector<double>& v,
                          std::vector<double>* breakdown, Tensor* final_logits) {
    Tensor acc;
    for (std::size_t i = 0; i < traj.params.size(); ++i) {
        const bool last = i + 1 == traj.params.size();
        if (v[i] == 0.0 && !(last && final_logits)) continue;
        Tensor lg = model.logits(traj.params[i], task.target_x, static_cast<int>(i),
                                 nn::ForwardMode::eval, nullptr);
        if (last && final_logits) *final_logits = lg;
        if (v[i] == 0.0) continue;
        Tensor li = model.loss_from_logits(lg, task.target_y);
        if (breakdown) (*breakdown)[i] = li.item();
        Tensor wi = scale(li, v[i]);
        acc = acc.defined() ? add(acc, wi) : wi;
    }
    return acc;
}

} // namespace

Tensor multi_step_meta_loss(const TaskModel& model, const std::vector<AdaptationTrajectory>& trajs,
                            const std::vector<data::Episode>& tasks, const std::vector<double>& v,
                            std::vector<std::vector<double>>* per_step_breakdown) {
    if (trajs.size() != tasks.size())
        throw ShapeError("multi_step_meta_loss: trajectory/task count mismatch");
    Tensor total;
    for (std::size_t b = 0; b < trajs.size(); ++b) {
        validate_weights(v, trajs[b].params.size());
        std::vector<double>* row = nullptr;
        if (per_step_breakdown) {
            per_step_breakdown->emplace_back(v.size(), 0.0);
            row = &per_step_breakdown->back();
        }
        Tensor lb = task_weighted_loss(model, trajs[b], tasks[b], v, row, nullptr);
        total = total.defined() ? add(total, lb) : lb;
    }
    return total;
}

std::vector<double> current_loss_weights(const MetaConfig& cfg, int epoch,
                                         std::int64_t iteration) {
    if (!cfg.toggles.msl) return final_step_weights(cfg.inner_steps);
    const double progress =
        cfg.msl.per_iteration
            ? static_cast<double>(iteration) / static_cast<double>(cfg.iterations_per_epoch)
            : static_cast<double>(epoch);
    return anneal_loss_weights(progress, cfg.inner_steps, cfg.msl);
}

Order resolve_order(const MetaConfig& cfg, int epoch) {
    if (!cfg.toggles.da) return cfg.base_order;
    return derivative_order(epoch, cfg.da_switch_epoch);
}

namespace {

struct TaskResult {
    ParamSet grads;
    double loss_value = 0.0;
    double accuracy = 0.0;
    std::vector<double> support_losses;
    std::vector<double> target_losses;
    nn::StatsRecorder recorder;
};

std::string breakdown_string(const std::vector<double>& target_losses) {
    std::ostringstream os;
    for (std::size_t i = 0; i < target_losses.size(); ++i) {
        if (i) os << ' ';
        os << "step" << i << '=' << target_losses[i];
    }
    return os.str();
}

} // namespace

OuterMetrics outer_update(const nn::NetworkSpec& spec, const MetaConfig& cfg, MetaState& state,
                          const std::vector<data::Episode>& batch, int epoch,
                          std::int64_t iteration) {
    if (batch.empty()) throw ShapeError("outer_update: task batch must be non-empty");
    const auto t_start = std::chrono::steady_clock::now();
    autodiff::stats_reset();

    const std::vector<double> v = current_loss_weights(cfg, epoch, iteration);
    const Order order = resolve_order(cfg, epoch);
    state.loss_weights = v;
    const ParamSet trainables = state.trainables();
    const int n = cfg.inner_steps;

    auto run_task = [&](std::size_t b) -> TaskResult {
        TaskResult r;
        r.target_losses.assign(static_cast<std::size_t>(n) + 1, 0.0);
        NetworkTaskModel model(spec, state.bn);
        AdaptOptions opt;
        opt.n_steps = n;
        opt.order = order;
        opt.purpose = AdaptPurpose::training;
        opt.fixed_alpha = cfg.fixed_alpha;
        opt.inner_lrs = cfg.toggles.lslr ? &state.inner_lrs : nullptr;
        opt.recorder = &r.recorder;

        AdaptationTrajectory traj =
            adapt(model, state.theta0, batch[b].support_x, batch[b].support_y, opt);
        r.support_losses = traj.support_losses;

        Tensor final_logits;
        Tensor loss = task_weighted_loss(model, traj, batch[b], v, &r.target_losses, &final_logits);
        r.loss_value = loss.item();
        if (!std::isfinite(r.loss_value))
            throw NumericError("outer_update: non-finite meta-loss on task '" + batch[b].task_id +
                               "' (" + breakdown_string(r.target_losses) + ")");

        auto pred = argmax_rows(final_logits);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == batch[b].target_y[i]) ++hits;
        r.accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());

        r.grads = gradients(loss, trainables, false);
        return r;
    };

    const std::size_t B = batch.size();
    std::vector<TaskResult> results(B);
    const int parallel = std::max(1, cfg.parallel_tasks);
    if (parallel == 1) {
        for (std::size_t b = 0; b < B; ++b) results[b] = run_task(b);
    } else {
        for (std::size_t start = 0; start < B; start += static_cast<std::size_t>(parallel)) {
            std::vector<std::future<TaskResult>> futs;
            const std::size_t end = std::min(B, start + static_cast<std::size_t>(parallel));
            for (std::size_t b = start; b < end; ++b)
                futs.push_back(std::async(std::launch::async, run_task, b));
            for (std::size_t b = start; b < end; ++b) results[b] = futs[b - start].get();
        }
    }

    // Serial reduction point: gradients, losses and BN statistics fold in
    // fixed task order, so results are identical for any parallel_tasks.
    OuterMetrics m;
    m.v = v;
    m.order = order;
    m.support_losses.assign(static_cast<std::size_t>(n), 0.0);
    m.target_losses.assign(static_cast<std::size_t>(n) + 1, 0.0);
    ParamSet total_grads;
    {
        autodiff::NoRecordGuard ng;
        for (std::size_t b = 0; b < B; ++b) {
            const TaskResult& r = results[b];
            total_grads = b == 0 ? r.grads
                                 : ParamSet::zip(total_grads, r.grads, "outer_update",
                                                 [](const std::string&, const Tensor& x,
                                                    const Tensor& y) { return add(x, y); });
            m.loss += r.loss_value;
            m.accuracy += r.accuracy / static_cast<double>(B);
            for (std::size_t i = 0; i < r.support_losses.size(); ++i)
                m.support_losses[i] += r.support_losses[i] / static_cast<double>(B);
            for (std::size_t i = 0; i < r.target_losses.size(); ++i)
                m.target_losses[i] += r.target_losses[i] / static_cast<double>(B);
            nn::apply_bn_observations(state.bn, r.recorder);
        }
    }

    m.grad_norm = total_grads.l2_norm();
    if (cfg.grad_clip > 0.0 && m.grad_norm > cfg.grad_clip) {
        const double factor = cfg.grad_clip / m.grad_norm;
        autodiff::NoRecordGuard ng;
        total_grads = total_grads.map(
            [factor](const std::string&, const Tensor& t) { return scale(t, factor); });
    }

    m.beta = cfg.toggles.ca ? cosine_lr(iteration, cfg.total_iterations, cfg.lr_max, cfg.lr_min)
                            : cfg.lr_max;
    ParamSet updated = adam_step(trainables, total_grads, state.adam, m.beta, cfg.adam);
    state.assign_trainables(updated);

    m.double_backward_nodes = autodiff::stats_snapshot().double_backward_nodes;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
                    .count();
    return m;
}

} // namespace metagrad::meta
