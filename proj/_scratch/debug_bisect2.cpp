#include <cstdio>
#include "metagrad/harness/checkpoint.hpp"
#include "metagrad/harness/config.hpp"
#include "metagrad/harness/runner.hpp"
#include "metagrad/meta/engine.hpp"
#include "metagrad/ops.hpp"

using namespace metagrad;
using namespace metagrad::harness;

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

    auto run = [&](const char* tag, meta::Order order, meta::AdaptPurpose purpose, bool lslr) {
        nn::BatchNormState bn = st.bn;
        meta::NetworkTaskModel model(cfg.network, bn);
        nn::StatsRecorder rec;
        meta::AdaptOptions opt;
        opt.n_steps = N;
        opt.order = order;
        opt.purpose = purpose;
        opt.fixed_alpha = cfg.meta.fixed_alpha;
        opt.inner_lrs = lslr ? &st.inner_lrs : nullptr;
        opt.recorder = &rec;
        auto traj = meta::adapt(model, st.theta0, ep.support_x, ep.support_y, opt);
        std::printf("%s:", tag);
        for (double l : traj.support_losses) std::printf(" %.3f", l);
        // param delta of first step
        double d = 0;
        for (std::size_t i = 0; i < traj.params[0].size(); ++i)
            d += max_abs_diff(traj.params[1].entry(i).second.detached(),
                              traj.params[0].entry(i).second.detached());
        std::printf("   |theta1-theta0|=%.4f\n", d);
    };
    run("train/second/lslr", meta::Order::second, meta::AdaptPurpose::training, true);
    run("train/first /lslr", meta::Order::first, meta::AdaptPurpose::training, true);
    run("infer/first /lslr", meta::Order::first, meta::AdaptPurpose::inference, true);
    run("infer/second/lslr", meta::Order::second, meta::AdaptPurpose::inference, true);
    return 0;
}
