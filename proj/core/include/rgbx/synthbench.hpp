#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rgbx/fuse_filter.hpp"
#include "rgbx/homography.hpp"
#include "rgbx/image.hpp"
#include "rgbx/matching.hpp"

namespace rgbx::synth {

enum class Modality { thermal, nir, sar };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view text);

struct SceneConfig {
    std::uint64_t seed = 1;
    int width = 256;
    int height = 256;
    int frames = 10;
    Modality modality = Modality::thermal;
    // One entry per depth layer, background first; X-vs-RGB disparity in px.
    std::vector<double> layer_disparity{0.0, 8.0};
    double texture_density = 1.0;
    // Share of each frame covered by regions that are flat in X.
    double homogeneous_fraction = 0.25;
    // Per-frame RGB -> X sensor perturbation ranges.
    double max_rotation_deg = 3.0;
    double max_shift_px = 6.0;
    double max_perspective = 2e-5;
    // RGB camera translation per frame for the background layer, px.
    double camera_step_px = 3.0;
    int foreground_objects = 5;
};

void validate(const SceneConfig& cfg);

struct NoiseModel {
    double position_sigma = 0.0;     // px, Gaussian on p_x
    double outlier_fraction = 0.0;   // share of matches with uniform random p_x
    double confidence_fidelity = 1.0;  // rho: coupling between c and correctness
    double value_sigma = 0.0;        // additive sensor noise on X rasters
};

void validate(const NoiseModel& noise);

struct FrameData {
    Image rgb;       // 3-channel, 8-bit quantized
    Image x_gt;      // X aligned to this RGB frame, 16-bit quantized
    Image x_raw;     // X as seen by the (misaligned) X sensor, 16-bit quantized
    Mask area_mask;  // pixels of this RGB frame showing X-homogeneous surfaces
    std::vector<std::uint8_t> rgb_layer;  // visible depth layer per RGB pixel
    std::vector<std::uint8_t> x_layer;    // visible depth layer per X pixel
    std::vector<matching::Homography> world_to_rgb;  // per layer
    std::vector<matching::Homography> world_to_x;    // per layer
    std::vector<matching::Homography> rgb_to_x;      // per layer
};

struct GroundTruthBundle {
    SceneConfig cfg;
    std::vector<FrameData> frames;

    int layers() const noexcept { return static_cast<int>(cfg.layer_disparity.size()); }
    int width() const noexcept { return cfg.width; }
    int height() const noexcept { return cfg.height; }

    /// GT correspondence from RGB frame `n` pixel (r, c) into X frame `m`.
    /// nullopt when the surface is out of view or any bilinear support pixel
    /// in X shows a different depth layer.
    std::optional<matching::PixelCoord> rgb_to_x(int n, int r, int c, int m) const;

    /// Same between two RGB frames.
    std::optional<matching::PixelCoord> rgb_to_rgb(int i, int r, int c, int j) const;

    /// Dense field for one frame pair; index r * width + c.
    std::vector<std::optional<matching::PixelCoord>> correspondence_field(int n, int m) const;
};

/// Layered piecewise-planar scene rendered analytically per frame. Every
/// raster is a deterministic function of cfg.
GroundTruthBundle gen_sequence(const SceneConfig& cfg);

/// Mean absolute difference between x_gt and x_raw resampled through the
/// same-frame GT correspondences (the bundle's internal consistency).
double self_consistency_error(const GroundTruthBundle& bundle, int frame);

/// Returns a copy of `x` with additive Gaussian noise (clamped to [0,1]).
Image add_value_noise(const Image& x, double sigma, std::uint64_t seed);

/// Samples `count` GT correspondences RGB frame -> X frame and degrades
/// them by `noise`. Confidence is 1 for a noise-free request; otherwise
/// c = logistic(4 z) with z = rho * y + sqrt(1 - rho^2) * e, where y is +1
/// for inliers and -1 for outliers and e ~ N(0,1). With `avoid_area_mask`
/// no match is placed on the frame's area mask.
matching::MatchSet oracle_match(const GroundTruthBundle& bundle, int rgb_frame, int x_frame,
                                const NoiseModel& noise, int count, std::uint64_t seed,
                                bool avoid_area_mask = false);

/// Inlier flags for oracle matches: |p_x - GT| <= tol.
std::vector<std::uint8_t> oracle_inliers(const GroundTruthBundle& bundle, const matching::MatchSet& ms,
                                         double tol = 1.5);

class OracleMatcher final : public matching::MatcherBackend {
public:
    OracleMatcher(const GroundTruthBundle& bundle, NoiseModel noise, int count, std::uint64_t seed,
                  bool avoid_area_mask = false)
        : bundle_(bundle), noise_(noise), count_(count), seed_(seed), avoid_(avoid_area_mask) {}

    std::string_view name() const override { return "oracle"; }
    matching::MatchSet match_pair(int rgb_frame, const Image& rgb, int x_frame, const Image& x) const override;

private:
    const GroundTruthBundle& bundle_;
    NoiseModel noise_;
    int count_;
    std::uint64_t seed_;
    bool avoid_;
};

/// Multi-view consistency: for each adjacent pair (i, i+1), output i is
/// resampled into frame i+1 through the GT RGB correspondences and compared
/// with output i+1 by RMSE over corresponding pixels. Returns the mean over
/// pairs; nullopt for fewer than two frames.
std::optional<double> consistency_metric(std::span<const Image> outputs, const GroundTruthBundle& bundle);

struct Corruption {
    Image image;
    std::vector<std::uint8_t> corrupted;  // per patch
};

/// Misregistration-style corruption: round(fraction * P) randomly chosen
/// patches receive the transposed content of a random donor patch at
/// Chebyshev patch distance >= 2 whose gradient energy is at least the
/// median over patches.
Corruption corrupt_patches(const Image& x, const fuse::PatchGrid& grid, double fraction, std::uint64_t seed);

/// Directory layout: rgb/%04d.png, x_gt/%04d.png, x_raw/%04d.png,
/// masks/%04d.png, gt/homographies.txt, gt/meta.
void save_bundle(const GroundTruthBundle& bundle, const std::filesystem::path& dir);

/// Reads gt/meta and regenerates the bundle.
GroundTruthBundle load_bundle(const std::filesystem::path& dir);

std::string scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const std::string& text);

}  // namespace rgbx::synth
