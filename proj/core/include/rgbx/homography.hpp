#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "rgbx/image.hpp"
#include "rgbx/matching.hpp"

namespace rgbx::matching {

/// Planar projective map acting on (x = col, y = row) homogeneous
/// coordinates. Stored row-major and normalized so h[2][2] == 1.
class Homography {
public:
    Homography();
    /// Throws std::invalid_argument when h[2][2] is ~0, the matrix is
    /// non-finite, or |det| <= 1e-12 after normalization.
    explicit Homography(const std::array<double, 9>& row_major);

    static Homography identity() { return Homography(); }
    static Homography translation(double dx, double dy);

    const std::array<double, 9>& matrix() const noexcept { return h_; }
    double operator()(int r, int c) const noexcept { return h_[3 * r + c]; }
    double determinant() const noexcept;

    Homography inverse() const;
    /// (a * b)(p) == a(b(p)).
    Homography operator*(const Homography& rhs) const;

    /// nullopt when the point maps to infinity.
    std::optional<PixelCoord> map(const PixelCoord& p) const noexcept;

private:
    std::array<double, 9> h_;
};

struct RansacOptions {
    double reproj_thresh = 3.0;  // px, symmetric transfer error
    int max_iters = 2000;
    double confidence = 0.999;
    std::uint64_t seed = 0;
};

struct HomographyFit {
    Homography h;  // maps p_x to p_rgb
    std::vector<std::uint8_t> inliers;
    std::size_t inlier_count = 0;
};

/// Symmetric transfer error sqrt((|p_rgb - H p_x|^2 + |p_x - H^-1 p_rgb|^2) / 2).
double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Match& m);

/// Normalized DLT on all given matches (p_x -> p_rgb). nullopt when fewer
/// than 4 matches or the system is degenerate.
std::optional<Homography> fit_homography_dlt(std::span<const Match> matches);

/// RANSAC over 4-point samples drawn with probability proportional to match
/// confidence, MSAC scoring, and a final DLT refit on the inliers. nullopt
/// signals fewer than 4 matches or only degenerate samples; callers fall
/// back to the identity warp.
std::optional<HomographyFit> estimate_homography(const MatchSet& ms, const RansacOptions& opts = {});

struct WarpResult {
    Image image;
    Mask validity;
};

/// Inverse warp: output(p) = bilinear(x, H^-1 p) where H maps X coordinates
/// to output coordinates. Samples falling outside x are 0 and marked invalid.
WarpResult warp_image(const Image& x, const Homography& h, int out_width, int out_height);

}  // namespace rgbx::matching
