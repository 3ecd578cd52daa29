#include <benchmark/benchmark.h>

#include <random>

#include <torch/torch.h>

#include "prior_refine/datagen/cavity.hpp"
#include "prior_refine/datagen/signal.hpp"
#include "prior_refine/diffusion/denoiser.hpp"
#include "prior_refine/diffusion/focal.hpp"
#include "prior_refine/eval/metrics.hpp"
#include "prior_refine/sdon/sdon.hpp"

using namespace prior_refine;

static void BM_CavitySolve(benchmark::State& state) {
    datagen::CavityConfig cfg;
    cfg.grid = static_cast<int>(state.range(0));
    const auto signal = datagen::sample_control_signal(3, 6, 1.0, 101);
    for (auto _ : state) benchmark::DoNotOptimize(datagen::solve_cavity(signal, cfg));
}
BENCHMARK(BM_CavitySolve)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_OperatorForward(benchmark::State& state) {
    torch::manual_seed(1);
    sdon::SDeepONet net(sdon::OperatorConfig{}, 101);
    torch::NoGradGuard g;
    const auto signals = torch::randn({state.range(0), 101});
    const auto coords = sdon::coordinate_grid(16, 32, 32);
    for (auto _ : state) benchmark::DoNotOptimize(net->forward(signals, coords));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OperatorForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_DenoiserForward(benchmark::State& state) {
    torch::manual_seed(1);
    diffusion::UNetConfig cfg;
    cfg.base_channels = static_cast<int>(state.range(0));
    diffusion::Denoiser net(cfg, true, false, 0.5);
    net->eval();
    torch::NoGradGuard g;
    const int b = 4;
    diffusion::ConditionTensors cond{torch::randn({b, 101}), torch::randn({b, 1, 16, 32, 32}), {}};
    const auto x = torch::randn({b, 1, 16, 32, 32});
    const auto sigma = torch::full({b}, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(net->forward(x, sigma, cond));
    state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_DenoiserForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_FocalLoss(benchmark::State& state) {
    const auto e = torch::rand({4, 1, 16, 32, 32});
    for (auto _ : state) benchmark::DoNotOptimize(diffusion::timewise_focal_loss(e));
}
BENCHMARK(BM_FocalLoss);

static void BM_RelL2(benchmark::State& state) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> d;
    FieldVideo a(16, 32, 32), b(16, 32, 32);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        a.data[i] = static_cast<float>(d(rng));
        b.data[i] = static_cast<float>(d(rng));
    }
    for (auto _ : state) benchmark::DoNotOptimize(eval::rel_l2(a, b));
}
BENCHMARK(BM_RelL2);
BENCHMARK_MAIN();
