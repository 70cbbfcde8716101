#include <cstdio>
#include "metagrad/harness/checkpoint.hpp"
#include "metagrad/harness/config.hpp"
#include "metagrad/harness/runner.hpp"
#include "metagrad/meta/engine.hpp"
#include "metagrad/ops.hpp"

using namespace metagrad;
using namespace metagrad::harness;

static double acc_of(const Tensor& logits, const std::vector<std::int64_t>& y) {
    auto pred = argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == y[i];
    return double(hits) / double(pred.size());
}

int main(int argc, char** argv) {
    LoadedCheckpoint lc = load_checkpoint(argv[1]);
    ExperimentConfig cfg = parse_config_text(lc.ckpt.config_text);
    DataBundle data = build_data(cfg);
    meta::MetaState& st = lc.ckpt.state;
    Rng rng(777);
    auto ep = data::sample_episode(data.pool, data.split, data::Section::meta_train,
                                   cfg.dataset.n_way, cfg.dataset.k_shot, cfg.dataset.q_targets,
                                   rng, cfg.run.precision, "dbg");
    const int N = cfg.meta.inner_steps;

    // Path A: exactly what outer_update does (training purpose, second order).
    {
        nn::BatchNormState bn = st.bn;
        meta::NetworkTaskModel model(cfg.network, bn);
        nn::StatsRecorder rec;
        meta::AdaptOptions opt;
        opt.n_steps = N;
        opt.order = meta::Order::second;
        opt.purpose = meta::AdaptPurpose::training;
        opt.fixed_alpha = cfg.meta.fixed_alpha;
        opt.inner_lrs = cfg.meta.toggles.lslr ? &st.inner_lrs : nullptr;
        opt.recorder = &rec;
        auto traj = meta::adapt(model, st.theta0, ep.support_x, ep.support_y, opt);
        std::printf("A support losses:");
        for (double l : traj.support_losses) std::printf(" %.3f", l);
        Tensor lg = model.logits(traj.params.back(), ep.target_x, N, nn::ForwardMode::eval, nullptr);
        std::printf("  -> target acc %.3f loss %.3f\n", acc_of(lg, ep.target_y),
                    cross_entropy(lg, ep.target_y).item());
    }
    // Path B: what evaluate() does (inference purpose, first order).
    {
        autodiff::NoRecordGuard ng;
        nn::BatchNormState bn = st.bn;
        meta::NetworkTaskModel model(cfg.network, bn);
        nn::StatsRecorder rec;
        meta::AdaptOptions opt;
        opt.n_steps = N;
        opt.order = meta::Order::first;
        opt.purpose = meta::AdaptPurpose::inference;
        opt.fixed_alpha = cfg.meta.fixed_alpha;
        opt.inner_lrs = cfg.meta.toggles.lslr ? &st.inner_lrs : nullptr;
        opt.recorder = &rec;
        auto traj = meta::adapt(model, st.theta0, ep.support_x, ep.support_y, opt);
        std::printf("B support losses:");
        for (double l : traj.support_losses) std::printf(" %.3f", l);
        Tensor lg = model.logits(traj.params.back(), ep.target_x, N, nn::ForwardMode::eval, nullptr);
        std::printf("  -> target acc %.3f loss %.3f\n", acc_of(lg, ep.target_y),
                    cross_entropy(lg, ep.target_y).item());
    }
    return 0;
}
