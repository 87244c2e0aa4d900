#include <benchmark/benchmark.h>

#include "msl/background.hpp"
#include "msl/codes.hpp"
#include "msl/multires.hpp"
#include "msl/rjmcmc.hpp"
#include "msl/simulator.hpp"

namespace {

struct Desk {
    msl::Scene scene;
    msl::SamplingMask mask;
    msl::LidarCube cube;
    msl::ChainSetup setup;

    Desk() : scene(msl::make_scene(msl::desk_scene_spec())) {
        msl::CodeDesignSpec spec;
        spec.rows = scene.dims.rows;
        spec.cols = scene.dims.cols;
        spec.bands = scene.dims.bands;
        spec.w = 2;
        mask = msl::random_code_per_pixel(spec);
        cube = msl::render_cube(scene.truth, scene.background, scene.irf, mask, scene.dims.bins, 1);
        setup.cube = &cube;
        setup.mask = &mask;
        setup.irf = &scene.irf;
        setup.hyper = msl::table_hyper(64, 64, 1, 2, 0.25);
        setup.prior = msl::GammaHyper::constant(64, 64, 4, 2.0, 0.01);
        setup.sbr.assign(4, 1.0);
    }
};

const Desk& desk() {
    static const Desk d;
    return d;
}

void BM_log_likelihood(benchmark::State& st) {
    const auto& d = desk();
    for (auto _ : st)
        benchmark::DoNotOptimize(msl::log_likelihood(d.cube, d.scene.truth, d.scene.background, d.mask, d.scene.irf));
}
BENCHMARK(BM_log_likelihood)->Unit(benchmark::kMillisecond);

void BM_full_log_posterior(benchmark::State& st) {
    const auto& d = desk();
    msl::ChainState s(d.setup, d.scene.truth, d.scene.background);
    for (auto _ : st) benchmark::DoNotOptimize(s.full_log_posterior());
}
BENCHMARK(BM_full_log_posterior)->Unit(benchmark::kMillisecond);

void BM_mh_step(benchmark::State& st) {
    const auto& d = desk();
    msl::ChainState s(d.setup, d.scene.truth, d.scene.background);
    msl::Rng rng = msl::make_rng(2);
    msl::MoveStats stats;
    for (auto _ : st) benchmark::DoNotOptimize(msl::mh_step(s, msl::draw_move(d.setup.moves, rng), rng, stats));
}
BENCHMARK(BM_mh_step);

void BM_gibbs_sweep(benchmark::State& st) {
    const auto& d = desk();
    msl::ChainState s(d.setup, d.scene.truth, d.scene.background);
    msl::Rng rng = msl::make_rng(3);
    for (auto _ : st) s.gibbs_sweep(rng);
}
BENCHMARK(BM_gibbs_sweep)->Unit(benchmark::kMillisecond);

void BM_latent_background(benchmark::State& st) {
    const auto& d = desk();
    auto stripped = msl::strip_signal_photons(d.cube, d.scene.truth, d.scene.irf, d.mask);
    msl::EmpiricalBayesConfig cfg;
    cfg.samples = 100;
    cfg.burn_in = 20;
    msl::Rng rng = msl::make_rng(4);
    for (auto _ : st) benchmark::DoNotOptimize(msl::sample_latent_background(stripped, cfg, d.mask, rng));
}
BENCHMARK(BM_latent_background)->Unit(benchmark::kMillisecond);

void BM_local_variance(benchmark::State& st) {
    msl::CodeDesignSpec spec;
    spec.rows = spec.cols = std::size_t(st.range(0));
    auto m = msl::random_code_per_pixel(spec);
    for (auto _ : st) benchmark::DoNotOptimize(msl::local_variance(m));
}
BENCHMARK(BM_local_variance)->Arg(32)->Arg(64);

void BM_design_blue_noise(benchmark::State& st) {
    msl::CodeDesignSpec spec;
    spec.rows = spec.cols = std::size_t(st.range(0));
    spec.sweeps = 50;
    for (auto _ : st) benchmark::DoNotOptimize(msl::design_blue_noise(spec));
}
BENCHMARK(BM_design_blue_noise)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
