#pragma once

#include "rgbx/matching.hpp"

namespace rgbx::matching {

struct ClassicalMatcherOptions {
    int window = 16;          // descriptor patch side, px
    int stride = 16;          // keypoint grid cell, px
    int search_radius = 32;   // px around the same coordinates in X
    double min_energy_ratio = 0.5;  // keypoint energy relative to the image mean
    bool subpixel = true;
};

/// Modality-robust dense-search matcher. Both images are turned into a
/// doubled-angle gradient field (|g| cos 2θ, |g| sin 2θ), which is invariant
/// to contrast inversion. Keypoints are the gradient-energy maxima of each
/// stride cell in RGB; each is searched in X by zero-normalized
/// cross-correlation of window x window patches of that field.
/// Confidence is max(0, ZNCC).
class ClassicalMatcher final : public MatcherBackend {
public:
    explicit ClassicalMatcher(ClassicalMatcherOptions opts = {}) : opts_(opts) {}
    std::string_view name() const override { return "classical"; }
    MatchSet match_pair(int rgb_frame, const Image& rgb, int x_frame, const Image& x) const override;

    const ClassicalMatcherOptions& options() const noexcept { return opts_; }

private:
    ClassicalMatcherOptions opts_;
};

}  // namespace rgbx::matching
