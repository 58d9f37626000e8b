#include <cmath>

#include <gtest/gtest.h>

#include "rgbx/classical_matcher.hpp"
#include "test_util.hpp"

using namespace rgbx;
using namespace rgbx::matching;

namespace {

// Box-blurred white noise: texture at several scales.
Image noise_texture(int w, int h, std::uint64_t seed) {
    const Image raw = test::random_image(w, h, 1, seed);
    Image out(w, h, 1);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (!raw.contains(r + dr, c + dc)) continue;
                    s += raw.at(r + dr, c + dc);
                    ++n;
                }
            }
            out.at(r, c) = s / n;
        }
    }
    return out;
}

}  // namespace

TEST(ClassicalMatcher, SelfMatchOnRandomTextures) {
    const ClassicalMatcher m;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Image img = noise_texture(128, 128, 100 + seed);
        const MatchSet ms = match_pair(m, 0, img, 0, img);
        ASSERT_FALSE(ms.matches.empty());
        std::size_t close = 0;
        for (const auto& mt : ms.matches) {
            close += std::hypot(mt.rgb.row - mt.x.row, mt.rgb.col - mt.x.col) <= 1.0;
        }
        EXPECT_GE(static_cast<double>(close) / ms.matches.size(), 0.9) << "seed " << seed;
    }
}

TEST(ClassicalMatcher, ContrastInversionStillMatches) {
    const ClassicalMatcher m;
    const Image img = noise_texture(96, 96, 3);
    Image inv = img;
    for (double& v : inv.data()) v = 1.0 - v;
    const MatchSet ms = match_pair(m, 0, img, 0, inv);
    std::size_t close = 0;
    for (const auto& mt : ms.matches) close += std::hypot(mt.rgb.row - mt.x.row, mt.rgb.col - mt.x.col) <= 1.0;
    EXPECT_GE(static_cast<double>(close) / ms.matches.size(), 0.9);
}

TEST(ClassicalMatcher, BlankXGivesEmptyOrLowConfidence) {
    const ClassicalMatcher m;
    const Image rgb = noise_texture(96, 96, 4);
    const Image blank = Image::filled(96, 96, 0.4);
    const MatchSet ms = match_pair(m, 0, rgb, 0, blank);
    for (const auto& mt : ms.matches) EXPECT_LE(mt.conf, 0.1);
}

TEST(ClassicalMatcher, TinyInputWarns) {
    const ClassicalMatcher m;
    const Image img = Image::filled(8, 8, 0.5);
    const MatchSet ms = match_pair(m, 0, img, 0, img);
    EXPECT_TRUE(ms.matches.empty());
    EXPECT_TRUE(ms.warning);
}
