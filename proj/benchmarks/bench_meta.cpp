#include <benchmark/benchmark.h>

#include "metagrad/data/class_pool.hpp"
#include "metagrad/harness/config.hpp"
#include "metagrad/harness/runner.hpp"
#include "metagrad/meta/engine.hpp"

using namespace metagrad;
using namespace metagrad::harness;

namespace {

/// One outer iteration of the CI preset, first- vs second-order.
void BM_outer_update(benchmark::State& state) {
    ExperimentConfig cfg = preset("synthetic-ci");
    cfg.meta.toggles.da = false;
    cfg.meta.base_order = state.range(0) ? meta::Order::second : meta::Order::first;
    cfg.finalize();
    DataBundle data = build_data(cfg);
    Rng init(1), sample(2);
    meta::MetaState st = meta::init_meta_state(cfg.network, cfg.meta, init, DType::f32);

    std::int64_t iter = 0;
    for (auto _ : state) {
        std::vector<data::Episode> batch;
        for (int b = 0; b < cfg.meta.task_batch; ++b)
            batch.push_back(data::sample_episode(data.pool, data.split,
                                                 data::Section::meta_train, cfg.dataset.n_way,
                                                 cfg.dataset.k_shot, cfg.dataset.q_targets,
                                                 sample, DType::f32, "bench"));
        benchmark::DoNotOptimize(
            meta::outer_update(cfg.network, cfg.meta, st, batch, 0, iter++ % 2000));
    }
}
BENCHMARK(BM_outer_update)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->MinTime(3.0);

} // namespace

BENCHMARK_MAIN();
