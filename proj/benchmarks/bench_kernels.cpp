#include <benchmark/benchmark.h>

#include "metagrad/autodiff.hpp"
#include "metagrad/nn/network.hpp"
#include "metagrad/ops.hpp"
#include "metagrad/param_set.hpp"
#include "metagrad/rng.hpp"

using namespace metagrad;

namespace {

Tensor randt(const Shape& s, Rng& rng, DType dt = DType::f32) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(s)));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from_vector(s, v, dt);
}

void BM_conv2d_forward(benchmark::State& state) {
    Rng rng(1);
    const auto ch = state.range(0);
    Tensor x = randt({25, ch, 14, 14}, rng);
    Tensor k = randt({ch, ch, 3, 3}, rng);
    autodiff::NoRecordGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 2, 1));
}
BENCHMARK(BM_conv2d_forward)->Arg(16)->Arg(32)->Arg(64);

void BM_conv2d_backward(benchmark::State& state) {
    Rng rng(1);
    const auto ch = state.range(0);
    Tensor x = randt({25, ch, 14, 14}, rng);
    Tensor k = randt({ch, ch, 3, 3}, rng);
    for (auto _ : state) {
        Tensor loss = sum(conv2d(x, k, 2, 1));
        auto g = autodiff::grad(loss, {x, k}, false);
        benchmark::DoNotOptimize(g);
    }
}
BENCHMARK(BM_conv2d_backward)->Arg(16)->Arg(32);

void BM_elementwise_add(benchmark::State& state) {
    Rng rng(1);
    Tensor a = randt({25, 16, 14, 14}, rng);
    Tensor b = randt({25, 16, 14, 14}, rng);
    autodiff::NoRecordGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(add(a, b));
}
BENCHMARK(BM_elementwise_add);

void BM_elementwise_add_recorded(benchmark::State& state) {
    Rng rng(1);
    Tensor a = randt({25, 16, 14, 14}, rng);
    Tensor b = randt({25, 16, 14, 14}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(add(a, b));
}
BENCHMARK(BM_elementwise_add_recorded);

void BM_broadcast_channel(benchmark::State& state) {
    Rng rng(1);
    Tensor a = randt({25, 16, 14, 14}, rng);
    Tensor b = randt({16, 1, 1}, rng);
    autodiff::NoRecordGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(mul(a, b));
}
BENCHMARK(BM_broadcast_channel);

void BM_network_forward(benchmark::State& state) {
    Rng rng(1);
    nn::NetworkSpec spec;
    spec.filters = static_cast<int>(state.range(0));
    spec.max_inner_steps = 5;
    auto built = nn::build_network(spec, rng, DType::f32);
    Tensor x = randt({25, 1, 28, 28}, rng);
    for (auto _ : state) {
        nn::StatsRecorder rec;
        benchmark::DoNotOptimize(
            nn::forward(spec, built.params, built.bn, x, 0, nn::ForwardMode::train, &rec));
    }
}
BENCHMARK(BM_network_forward)->Arg(16)->Arg(32);

void BM_network_backward(benchmark::State& state) {
    Rng rng(1);
    nn::NetworkSpec spec;
    spec.filters = static_cast<int>(state.range(0));
    spec.max_inner_steps = 5;
    auto built = nn::build_network(spec, rng, DType::f32);
    Tensor x = randt({25, 1, 28, 28}, rng);
    std::vector<std::int64_t> y;
    for (int i = 0; i < 25; ++i) y.push_back(i % 5);
    for (auto _ : state) {
        nn::StatsRecorder rec;
        Tensor logits = nn::forward(spec, built.params, built.bn, x, 0,
                                    nn::ForwardMode::train, &rec);
        Tensor loss = cross_entropy(logits, y);
        benchmark::DoNotOptimize(gradients(loss, built.params, false));
    }
}
BENCHMARK(BM_network_backward)->Arg(16)->Arg(32);

} // namespace

BENCHMARK_MAIN();
