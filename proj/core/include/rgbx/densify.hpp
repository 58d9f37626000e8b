#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "rgbx/image.hpp"

namespace rgbx::densify {

struct DensifyConfig {
    std::vector<double> thresholds{0.15, 0.3, 0.5};
    int iterations = 24;
    double sigma_color = 0.1;
    double sigma_spatial = 2.0;
    double tol = 1e-4;
    std::vector<int> radii{1, 2, 4};
    // When false, match confidence still drives thresholding but every known
    // pixel is anchored with C_m = 1 during propagation.
    bool confidence_aware = true;
};

void validate(const DensifyConfig& cfg);

struct Offset {
    int dr = 0;
    int dc = 0;
    int radius = 1;
};

/// Per-pixel neighbor weights over 8 offsets per radius. weights holds
/// offsets().size() entries per pixel, row-major by pixel; each pixel's
/// weights sum to 1.
struct AffinityField {
    int width = 0;
    int height = 0;
    std::vector<Offset> offsets;
    std::vector<double> weights;

    std::span<const double> at(std::size_t pixel) const noexcept {
        return {weights.data() + pixel * offsets.size(), offsets.size()};
    }
};

/// Joint-bilateral affinities from grayscale guidance g:
/// w = exp(-(g(p) - g(q))^2 / (2 sigma_color^2)) * exp(-r^2 / (2 sigma_spatial^2)),
/// zero for out-of-bounds neighbors, normalized per pixel.
AffinityField compute_affinities(const Image& rgb, const DensifyConfig& cfg);

struct CertaintyMap {
    int width = 0;
    int height = 0;
    std::vector<double> cs;
};

/// Hard anchoring: 1 at known pixels, 0 at void pixels.
CertaintyMap certainty_map(const SparseMap& sparse);

/// Initial estimate: known pixels keep their value, void pixels get the
/// inverse-square-distance average of their 4 nearest known pixels
/// (ties broken by row-major index). nullopt when nothing is known.
std::optional<Image> init_dense(const SparseMap& sparse);

class PropagationError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct PropagateResult {
    Image output;
    int iterations = 0;
    std::vector<double> steps;  // max-abs update per iteration
};

/// Synchronous confidence-blended propagation
///   L' = (1 - cs*cm) * sum_k w_k L(p + o_k) + cs*cm * X_m
/// run until cfg.iterations or max-abs step < cfg.tol. Throws
/// PropagationError on a non-finite value or a min-max bound violation.
PropagateResult propagate(const Image& l0, const AffinityField& aff, const SparseMap& sparse,
                          const CertaintyMap& cs, const ConfidenceMap& cm, const DensifyConfig& cfg);

struct Level {
    double threshold = 0.0;
    std::size_t known = 0;
    Image dense;
    int iterations = 0;
};

struct MultiLevelResult {
    std::vector<Level> levels;
    std::vector<double> omitted;  // thresholds with no surviving pixel
};

class DensifyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Keeps pixels with conf >= threshold for each level and densifies them.
/// Levels without survivors are listed in `omitted`; throws DensifyError
/// when every level is empty.
MultiLevelResult densify_multilevel(const Image& rgb, const SparseMap& sparse, const ConfidenceMap& conf,
                                    const DensifyConfig& cfg);

/// Overload reusing precomputed affinities.
MultiLevelResult densify_multilevel(const AffinityField& aff, const SparseMap& sparse,
                                    const ConfidenceMap& conf, const DensifyConfig& cfg);

/// Single-level init + propagate with the given confidence.
std::optional<PropagateResult> densify_single(const AffinityField& aff, const SparseMap& sparse,
                                              const ConfidenceMap& cm, const DensifyConfig& cfg);

}  // namespace rgbx::densify
