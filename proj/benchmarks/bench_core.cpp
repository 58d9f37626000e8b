#include <random>

#include <benchmark/benchmark.h>

#include "rgbx/densify.hpp"
#include "rgbx/fuse_filter.hpp"
#include "rgbx/homography.hpp"
#include "rgbx/matching.hpp"
#include "rgbx/synthbench.hpp"

using namespace rgbx;

namespace {

const synth::GroundTruthBundle& bundle() {
    static const synth::GroundTruthBundle b = [] {
        synth::SceneConfig sc;
        sc.seed = 1;
        sc.frames = 3;
        return synth::gen_sequence(sc);
    }();
    return b;
}

matching::Accumulation accumulated(int count) {
    const auto& b = bundle();
    std::vector<matching::MatchSet> sets;
    std::vector<Image> xs;
    for (int m = 0; m < 3; ++m) {
        sets.push_back(synth::oracle_match(b, 1, m, {}, count, 3));
        xs.push_back(b.frames[static_cast<std::size_t>(m)].x_raw);
    }
    return matching::accumulate_matches(sets, xs, 1, b.width(), b.height());
}

}  // namespace

static void BM_Accumulate(benchmark::State& state) {
    const auto& b = bundle();
    std::vector<matching::MatchSet> sets;
    std::vector<Image> xs;
    for (int m = 0; m < 3; ++m) {
        sets.push_back(synth::oracle_match(b, 1, m, {}, static_cast<int>(state.range(0)), 3));
        xs.push_back(b.frames[static_cast<std::size_t>(m)].x_raw);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(matching::accumulate_matches(sets, xs, 1, b.width(), b.height()));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 3);
}
BENCHMARK(BM_Accumulate)->Arg(1000)->Arg(10000);

static void BM_Affinities(benchmark::State& state) {
    const Image& rgb = bundle().frames[1].rgb;
    const densify::DensifyConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(densify::compute_affinities(rgb, cfg));
}
BENCHMARK(BM_Affinities)->Unit(benchmark::kMillisecond);

static void BM_InitDense(benchmark::State& state) {
    const auto acc = accumulated(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(densify::init_dense(acc.sparse));
}
BENCHMARK(BM_InitDense)->Arg(500)->Arg(3000)->Unit(benchmark::kMillisecond);

static void BM_Propagate(benchmark::State& state) {
    const auto acc = accumulated(3000);
    densify::DensifyConfig cfg;
    cfg.tol = 0.0;
    cfg.iterations = static_cast<int>(state.range(0));
    const auto aff = densify::compute_affinities(bundle().frames[1].rgb, cfg);
    const auto l0 = *densify::init_dense(acc.sparse);
    const auto cs = densify::certainty_map(acc.sparse);
    for (auto _ : state) benchmark::DoNotOptimize(densify::propagate(l0, aff, acc.sparse, cs, acc.conf, cfg));
}
BENCHMARK(BM_Propagate)->Arg(24)->Unit(benchmark::kMillisecond);

static void BM_Descriptors(benchmark::State& state) {
    const Image& x = bundle().frames[1].x_gt;
    const auto grid = fuse::PatchGrid::make(x.width(), x.height(), static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(fuse::patch_descriptors(x, grid));
}
BENCHMARK(BM_Descriptors)->Arg(32)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_Similarity(benchmark::State& state) {
    const auto& f = bundle().frames[1];
    const auto grid = fuse::PatchGrid::make(f.rgb.width(), f.rgb.height(), static_cast<int>(state.range(0)));
    const auto a = fuse::patch_descriptors(f.rgb, grid), b = fuse::patch_descriptors(f.x_gt, grid);
    for (auto _ : state) benchmark::DoNotOptimize(fuse::similarity_matrix(a, b));
}
BENCHMARK(BM_Similarity)->Arg(32)->Arg(16);

static void BM_Ransac(benchmark::State& state) {
    synth::NoiseModel nm;
    nm.outlier_fraction = 0.4;
    nm.position_sigma = 0.5;
    const auto ms = synth::oracle_match(bundle(), 1, 1, nm, static_cast<int>(state.range(0)), 5);
    for (auto _ : state) benchmark::DoNotOptimize(matching::estimate_homography(ms));
}
BENCHMARK(BM_Ransac)->Arg(200)->Arg(3000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
