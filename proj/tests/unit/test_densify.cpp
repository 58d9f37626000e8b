#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rgbx/densify.hpp"
#include "rgbx/metrics.hpp"
#include "rgbx/synthbench.hpp"
#include "test_util.hpp"

using namespace rgbx;
using namespace rgbx::densify;

namespace {

SparseMap random_sparse(int w, int h, double density, std::uint64_t seed, ConfidenceMap* conf = nullptr) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SparseMap s(w, h);
    if (conf) *conf = ConfidenceMap(w, h);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (u(rng) < density) {
            s.set(i, u(rng));
            if (conf) conf->conf[i] = 0.05 + 0.95 * u(rng);
        }
    }
    if (s.known_count() == 0) {
        s.set(0, 0.5);
        if (conf) conf->conf[0] = 1.0;
    }
    return s;
}

ConfidenceMap ones_on_known(const SparseMap& s) {
    ConfidenceMap c(s.width, s.height);
    for (std::size_t i = 0; i < s.size(); ++i) c.conf[i] = s.known(i) ? 1.0 : 0.0;
    return c;
}

}  // namespace

TEST(Affinities, ConstantGuideGivesEqualWeightsPerRing) {
    DensifyConfig cfg;
    const auto aff = compute_affinities(Image::filled(20, 20, 0.4), cfg);
    const std::size_t p = 10 * 20 + 10;
    const auto w = aff.at(p);
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double r = aff.offsets[j].radius;
        const double expected = std::exp(-r * r / (2 * cfg.sigma_spatial * cfg.sigma_spatial));
        EXPECT_NEAR(w[j] / w[0], expected / std::exp(-1.0 / (2 * cfg.sigma_spatial * cfg.sigma_spatial)), 1e-12);
    }
}

TEST(Affinities, NormalizedPerPixel) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto aff = compute_affinities(test::random_image(23, 17, 3, seed), {});
        for (int p = 0; p < 23 * 17; ++p) {
            double s = 0.0;
            for (double w : aff.at(p)) {
                EXPECT_GE(w, 0.0);
                s += w;
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(Affinities, StepEdgeWeightsAcrossBelowAlong) {
    Image step(20, 20, 1);
    for (int r = 0; r < 20; ++r) {
        for (int c = 0; c < 20; ++c) step.at(r, c) = c < 10 ? 0.1 : 0.9;
    }
    const auto aff = compute_affinities(step, {});
    const std::size_t p = 10 * 20 + 9;
    const auto w = aff.at(p);
    double along = -1, across = -1;
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (aff.offsets[j].radius != 1) continue;
        if (aff.offsets[j].dr == 1 && aff.offsets[j].dc == 0) along = w[j];
        if (aff.offsets[j].dr == 0 && aff.offsets[j].dc == 1) across = w[j];
    }
    EXPECT_LT(across, along);
}

TEST(Affinities, OutOfBoundsNeighborsHaveZeroWeight) {
    const auto aff = compute_affinities(test::random_image(9, 9, 1, 2), {});
    const auto w = aff.at(0);
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (aff.offsets[j].dr < 0 || aff.offsets[j].dc < 0) EXPECT_EQ(w[j], 0.0);
    }
}

TEST(Certainty, IndicatorOfKnownSet) {
    SparseMap s(4, 4);
    auto cs = certainty_map(s);
    for (double v : cs.cs) EXPECT_EQ(v, 0.0);
    s.set(6, 0.3);
    cs = certainty_map(s);
    for (std::size_t i = 0; i < cs.cs.size(); ++i) EXPECT_EQ(cs.cs[i], i == 6 ? 1.0 : 0.0);
}

TEST(InitDense, SingleKnownFillsConstant) {
    SparseMap s(15, 11);
    s.set(40, 0.8);
    const auto l0 = init_dense(s);
    ASSERT_TRUE(l0);
    for (double v : l0->data()) EXPECT_NEAR(v, 0.8, 1e-15);
}

TEST(InitDense, OppositeCornersMeetInTheMiddle) {
    SparseMap s(11, 11);
    s.set(0, 0.0);
    s.set(120, 1.0);
    const auto l0 = init_dense(s);
    EXPECT_NEAR(l0->at(5, 5), 0.5, 1e-9);
}

TEST(InitDense, DenseInputIsUnchanged) {
    const Image img = test::random_image(8, 6, 1, 1);
    EXPECT_EQ(*init_dense(dense_to_sparse(img)), img);
}

TEST(InitDense, EmptyIsNullopt) { EXPECT_FALSE(init_dense(SparseMap(5, 5))); }

TEST(InitDense, MatchesFullScanOracle) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const double density = seed % 3 == 0 ? 0.003 : (seed % 3 == 1 ? 0.05 : 0.4);
        const SparseMap s = random_sparse(61, 47, density, seed);
        const auto got = init_dense(s);
        const auto ref = oracle::init_dense(s);
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(got->data()[i], ref[i]) << "seed " << seed;
    }
}

TEST(Propagate, FullyAnchoredIsFixedPoint) {
    const Image img = test::random_image(12, 12, 1, 3);
    const SparseMap s = dense_to_sparse(img);
    DensifyConfig cfg;
    cfg.iterations = 1;
    const auto aff = compute_affinities(test::random_image(12, 12, 3, 4), cfg);
    const auto res = propagate(Image::filled(12, 12, 0.5), aff, s, certainty_map(s), ones_on_known(s), cfg);
    EXPECT_EQ(res.output, img);
}

TEST(Propagate, SingleAnchorConvergesToItsValue) {
    SparseMap s(32, 32);
    s.set(16 * 32 + 16, 1.0);
    DensifyConfig cfg;
    cfg.iterations = 200;
    cfg.tol = 0.0;
    const auto aff = compute_affinities(Image::filled(32, 32, 0.5), cfg);
    const auto res = propagate(*init_dense(s), aff, s, certainty_map(s), ones_on_known(s), cfg);
    for (double v : res.output.data()) EXPECT_LT(std::abs(v - 1.0), 0.01);
}

TEST(Propagate, MatchesCertaintyOnlyReference) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SparseMap s = random_sparse(16, 16, 0.2, 100 + seed);
        DensifyConfig cfg;
        cfg.iterations = 30;
        const auto aff = compute_affinities(test::random_image(16, 16, 3, seed), cfg);
        const Image l0 = *init_dense(s);
        const auto got = propagate(l0, aff, s, certainty_map(s), ones_on_known(s), cfg);
        const auto ref = oracle::propagate_certainty_only(std::vector<double>(l0.data().begin(), l0.data().end()),
                                                          aff, s, cfg.iterations, cfg.tol);
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(got.output.data()[i], ref[i]) << "seed " << seed;
    }
}

TEST(Propagate, AnchorsExactAndBounded) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ConfidenceMap conf;
        SparseMap s = random_sparse(24, 24, 0.15, seed, &conf);
        for (std::size_t i = 0; i < s.size(); i += 7) {
            if (s.known(i)) conf.conf[i] = 1.0;
        }
        DensifyConfig cfg;
        const auto aff = compute_affinities(test::random_image(24, 24, 3, seed + 50), cfg);
        const Image l0 = *init_dense(s);
        const auto res = propagate(l0, aff, s, certainty_map(s), conf, cfg);
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < s.size(); ++i) {
            lo = std::min(lo, l0.data()[i]);
            hi = std::max(hi, l0.data()[i]);
            if (s.known(i)) {
                lo = std::min(lo, s.values[i]);
                hi = std::max(hi, s.values[i]);
            }
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double v = res.output.data()[i];
            EXPECT_GE(v, lo - 1e-12);
            EXPECT_LE(v, hi + 1e-12);
            if (s.known(i) && conf.conf[i] == 1.0) EXPECT_EQ(v, s.values[i]);
        }
    }
}

TEST(Propagate, LowConfidencePullsTowardNeighbours) {
    Image base = Image::filled(9, 9, 0.2);
    SparseMap s = dense_to_sparse(base);
    const std::size_t centre = 4 * 9 + 4;
    s.values[centre] = 0.9;
    DensifyConfig cfg;
    cfg.iterations = 10;
    const auto aff = compute_affinities(Image::filled(9, 9, 0.5), cfg);
    ConfidenceMap full = ones_on_known(s), half = full;
    half.conf[centre] = 0.5;
    const Image l0 = *init_dense(s);
    const double v_full = propagate(l0, aff, s, certainty_map(s), full, cfg).output.data()[centre];
    const double v_half = propagate(l0, aff, s, certainty_map(s), half, cfg).output.data()[centre];
    EXPECT_EQ(v_full, 0.9);
    EXPECT_LT(std::abs(v_half - 0.2), std::abs(v_full - 0.2));
}

TEST(Propagate, RejectsConfidenceOnVoid) {
    SparseMap s(4, 4);
    s.set(0, 0.5);
    ConfidenceMap c(4, 4);
    c.conf[0] = 1.0;
    c.conf[5] = 0.3;
    const auto aff = compute_affinities(Image::filled(4, 4, 0.5), {});
    EXPECT_THROW(propagate(*init_dense(s), aff, s, certainty_map(s), c, {}), std::invalid_argument);
}

TEST(Propagate, ImprovesOnInitAndStepsContract) {
    synth::SceneConfig sc;
    sc.width = sc.height = 96;
    sc.frames = 1;
    const auto b = synth::gen_sequence(sc);
    const Image& gt = b.frames[0].x_gt;
    std::mt19937_64 rng(3);
    std::bernoulli_distribution keep(0.25);
    SparseMap s(96, 96);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (keep(rng)) s.set(i, gt.data()[i]);
    }
    DensifyConfig cfg;
    cfg.tol = 0.0;
    const auto aff = compute_affinities(b.frames[0].rgb, cfg);
    const Image l0 = *init_dense(s);
    const auto res = propagate(l0, aff, s, certainty_map(s), ones_on_known(s), cfg);
    EXPECT_GE(metrics::psnr(res.output, gt), metrics::psnr(l0, gt));
    for (std::size_t t = 3; t < res.steps.size(); ++t) EXPECT_LE(res.steps[t], 1.05 * res.steps[t - 1]);
}

TEST(MultiLevel, UniformConfidenceGivesIdenticalLevels) {
    const SparseMap s = random_sparse(20, 20, 0.2, 5);
    const ConfidenceMap c = ones_on_known(s);
    const auto res = densify_multilevel(test::random_image(20, 20, 3, 5), s, c, {});
    ASSERT_EQ(res.levels.size(), 3u);
    EXPECT_EQ(res.levels[0].dense, res.levels[1].dense);
    EXPECT_EQ(res.levels[1].dense, res.levels[2].dense);
}

TEST(MultiLevel, EmptyTopLevelIsOmitted) {
    SparseMap s = random_sparse(20, 20, 0.2, 6);
    ConfidenceMap c(20, 20);
    for (std::size_t i = 0; i < s.size(); ++i) c.conf[i] = s.known(i) ? 0.4 : 0.0;
    const auto res = densify_multilevel(test::random_image(20, 20, 3, 6), s, c, {});
    EXPECT_EQ(res.levels.size(), 2u);
    ASSERT_EQ(res.omitted.size(), 1u);
    EXPECT_EQ(res.omitted[0], 0.5);
}

TEST(MultiLevel, KnownSetsAreNested) {
    ConfidenceMap c;
    const SparseMap s = random_sparse(30, 30, 0.3, 7, &c);
    const auto res = densify_multilevel(test::random_image(30, 30, 3, 7), s, c, {});
    for (std::size_t k = 1; k < res.levels.size(); ++k) EXPECT_LE(res.levels[k].known, res.levels[k - 1].known);
}

TEST(MultiLevel, AllEmptyThrows) {
    SparseMap s = random_sparse(10, 10, 0.2, 8);
    ConfidenceMap c(10, 10);
    for (std::size_t i = 0; i < s.size(); ++i) c.conf[i] = s.known(i) ? 0.01 : 0.0;
    EXPECT_THROW(densify_multilevel(test::random_image(10, 10, 3, 8), s, c, {}), DensifyError);
}

TEST(MultiLevel, ConfidenceBlindModeAnchorsFully) {
    ConfidenceMap c;
    const SparseMap s = random_sparse(20, 20, 0.3, 9, &c);
    DensifyConfig cfg;
    cfg.thresholds = {0.0};
    cfg.confidence_aware = false;
    const auto res = densify_multilevel(test::random_image(20, 20, 3, 9), s, c, cfg);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.known(i)) EXPECT_EQ(res.levels[0].dense.data()[i], s.values[i]);
    }
}

TEST(DensifyConfig, Validation) {
    DensifyConfig cfg;
    cfg.thresholds = {0.3, 0.2};
    EXPECT_THROW(validate(cfg), std::invalid_argument);
    cfg = {};
    cfg.radii = {0};
    EXPECT_THROW(validate(cfg), std::invalid_argument);
    cfg = {};
    cfg.iterations = 0;
    EXPECT_THROW(validate(cfg), std::invalid_argument);
}
