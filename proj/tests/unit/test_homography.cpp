#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rgbx/homography.hpp"
#include "test_util.hpp"

using namespace rgbx;
using namespace rgbx::matching;

namespace {

Homography mild_homography(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return Homography({1.0 + 0.05 * u(rng), 0.05 * u(rng), 10.0 * u(rng),
                       0.05 * u(rng), 1.0 + 0.05 * u(rng), 10.0 * u(rng),
                       1e-4 * u(rng), 1e-4 * u(rng), 1.0});
}

MatchSet synthetic_matches(const Homography& h, std::mt19937_64& rng, int n, double outlier_share, double sigma) {
    std::uniform_real_distribution<double> u(0.0, 255.0);
    std::normal_distribution<double> g(0.0, sigma);
    std::bernoulli_distribution out(outlier_share);
    MatchSet ms;
    for (int i = 0; i < n; ++i) {
        const PixelCoord px{u(rng), u(rng)};
        PixelCoord pr = *h.map(px);
        if (out(rng)) {
            pr = {u(rng), u(rng)};
        } else {
            pr.row += g(rng);
            pr.col += g(rng);
        }
        ms.matches.push_back({pr, px, 1.0});
    }
    return ms;
}

double transfer_distance(const Homography& a, const Homography& b, const PixelCoord& p) {
    const auto pa = *a.map(p), pb = *b.map(p);
    return std::hypot(pa.row - pb.row, pa.col - pb.col);
}

}  // namespace

TEST(Homography, ComposeAndInvert) {
    std::mt19937_64 rng(1);
    const Homography a = mild_homography(rng), b = mild_homography(rng);
    const PixelCoord p{17.0, 42.0};
    const auto ab = (a * b).map(p);
    const auto a_b = a.map(*b.map(p));
    EXPECT_NEAR(ab->row, a_b->row, 1e-9);
    EXPECT_NEAR(ab->col, a_b->col, 1e-9);
    const auto back = a.inverse().map(*a.map(p));
    EXPECT_NEAR(back->row, p.row, 1e-9);
    EXPECT_NEAR(back->col, p.col, 1e-9);
}

TEST(Homography, RejectsSingular) {
    EXPECT_THROW(Homography({1, 2, 3, 2, 4, 6, 0, 0, 1}), std::invalid_argument);
    EXPECT_THROW(Homography({1, 0, 0, 0, 1, 0, 0, 0, 0}), std::invalid_argument);
}

TEST(Dlt, ExactMinimalTranslation) {
    const Homography t = Homography::translation(5.0, 0.0);
    std::vector<Match> ms;
    for (auto [r, c] : {std::pair{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}}) {
        ms.push_back({*t.map({r, c}), {r, c}, 1.0});
    }
    const auto h = fit_homography_dlt(ms);
    ASSERT_TRUE(h);
    for (const auto& m : ms) {
        const auto p = h->map(m.x);
        EXPECT_NEAR(p->col, m.x.col + 5.0, 1e-6);
        EXPECT_NEAR(p->row, m.x.row, 1e-6);
    }
}

TEST(Dlt, CollinearIsDegenerate) {
    std::vector<Match> ms;
    for (int i = 0; i < 6; ++i) ms.push_back({{double(i), 2.0 * i}, {double(i), 2.0 * i}, 1.0});
    EXPECT_FALSE(fit_homography_dlt(ms));
    MatchSet set{0, 0, ms, false};
    EXPECT_FALSE(estimate_homography(set));
}

TEST(Ransac, RecoversUnderOutliers) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const Homography gt = mild_homography(rng);
        const MatchSet ms = synthetic_matches(gt, rng, 200, 0.4, 0.5);
        const auto fit = estimate_homography(ms, {3.0, 2000, 0.999, static_cast<std::uint64_t>(trial)});
        ASSERT_TRUE(fit);
        double err = 0.0;
        for (int r = 0; r < 256; r += 32) {
            for (int c = 0; c < 256; c += 32) err = std::max(err, transfer_distance(fit->h, gt, {double(r), double(c)}));
        }
        EXPECT_LT(err, 1.0);
    }
}

TEST(Ransac, TooFewMatches) {
    MatchSet ms{0, 0, {{{0, 0}, {0, 0}, 1}, {{1, 0}, {1, 0}, 1}, {{0, 1}, {0, 1}, 1}}, false};
    EXPECT_FALSE(estimate_homography(ms));
}

TEST(Ransac, InvariantUnderUniformScaling) {
    std::mt19937_64 rng(23);
    const Homography gt = mild_homography(rng);
    const MatchSet ms = synthetic_matches(gt, rng, 150, 0.3, 0.5);
    const RansacOptions opts{3.0, 2000, 0.999, 5};
    const auto base = estimate_homography(ms, opts);
    ASSERT_TRUE(base);
    for (double s : {0.5, 2.0}) {
        MatchSet scaled = ms;
        for (auto& m : scaled.matches) {
            m.rgb = {m.rgb.row * s, m.rgb.col * s};
            m.x = {m.x.row * s, m.x.col * s};
        }
        RansacOptions so = opts;
        so.reproj_thresh *= s;
        const auto fit = estimate_homography(scaled, so);
        ASSERT_TRUE(fit);
        EXPECT_EQ(fit->inliers, base->inliers);
        // Conjugate back: S^-1 H_s S.
        const Homography sm({s, 0, 0, 0, s, 0, 0, 0, 1});
        const Homography back = sm.inverse() * fit->h * sm;
        for (int k = 0; k < 9; ++k) EXPECT_NEAR(back.matrix()[k], base->h.matrix()[k], 1e-9);
    }
}

TEST(Warp, IdentityIsExact) {
    const Image x = test::random_image(20, 15, 1, 4);
    const auto w = warp_image(x, Homography::identity(), 20, 15);
    EXPECT_EQ(w.image, x);
    EXPECT_EQ(w.validity.count(), x.pixel_count());
}

TEST(Warp, TranslationOnRamp) {
    Image ramp(40, 10, 1);
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 40; ++c) ramp.at(r, c) = 0.01 * c + 0.002 * r;
    }
    const auto w = warp_image(ramp, Homography::translation(5.0, 0.0), 40, 10);
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 40; ++c) {
            const bool inside = c >= 5;
            EXPECT_EQ(w.validity.bits[r * 40 + c] != 0, inside);
            if (inside) EXPECT_NEAR(w.image.at(r, c), ramp.at(r, c - 5), 1e-6);
        }
    }
}

TEST(Warp, ForwardThenInverseOnSmoothImage) {
    std::mt19937_64 rng(2);
    const Image x = test::smooth_texture(96, 96, 8);
    const Homography h({1.02, 0.03, 2.5, -0.02, 0.99, -1.5, 2e-5, -1e-5, 1.0});
    const auto fwd = warp_image(x, h, 96, 96);
    const auto back = warp_image(fwd.image, h.inverse(), 96, 96);
    for (int r = 12; r < 84; ++r) {
        for (int c = 12; c < 84; ++c) EXPECT_LE(std::abs(back.image.at(r, c) - x.at(r, c)), 0.02);
    }
}

TEST(SymmetricTransfer, ZeroForExactMatch) {
    const Homography h = Homography::translation(2.0, -1.0);
    const Match m{*h.map({3, 4}), {3, 4}, 1.0};
    EXPECT_NEAR(symmetric_transfer_error(h, h.inverse(), m), 0.0, 1e-12);
}
