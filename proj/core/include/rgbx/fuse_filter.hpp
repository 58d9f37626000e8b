#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rgbx/densify.hpp"
#include "rgbx/image.hpp"

namespace rgbx::fuse {

struct EnhanceOptions {
    int radius = 4;
    double eps = 1e-3;
    double unsharp_amount = 0.5;
    double unsharp_sigma = 1.0;
};

/// Guided-filter smoothing of `xd` with `rgb` as guide (all three channels
/// for colour input, with a per-window 3x3 covariance), then unsharp
/// masking, clamped to xd's own [min, max].
Image enhance(const Image& xd, const Image& rgb, const EnhanceOptions& opts = {});

/// Per-pixel mean over the available levels.
Image fuse_levels(std::span<const Image> enhanced);

struct PatchRect {
    int row0, row1, col0, col1;  // half-open
};

/// Tiling into floor(H/patch) x floor(W/patch) patches; the remainder rows
/// and columns are absorbed by the last patch row/column.
struct PatchGrid {
    int patch = 32;
    int width = 0;
    int height = 0;
    int rows = 0;
    int cols = 0;

    static PatchGrid make(int width, int height, int patch = 32);

    int count() const noexcept { return rows * cols; }
    PatchRect rect(int index) const noexcept;
    /// Patch index containing pixel (r, c).
    int index_of(int r, int c) const noexcept;
};

struct DescriptorOptions {
    int cells = 4;
    int bins = 8;
    // Mass added to every histogram bin before normalization; weak-gradient
    // patches tend toward the uniform descriptor.
    double bin_floor = 0.02;
    // Each cell histogram is divided by max(|h_cell|, cell_norm_floor) so
    // cells compare by orientation distribution rather than gradient energy;
    // 0 disables.
    double cell_norm_floor = 3.0;
    // Gaussian pre-smoothing before gradients, px; 0 disables.
    double smooth_sigma = 2.0;
};

/// P x D row-major matrix with unit-norm rows.
struct FeatureMatrix {
    int rows = 0;
    int dims = 0;
    std::vector<double> data;

    std::span<const double> row(int i) const noexcept {
        return {data.data() + static_cast<std::size_t>(i) * dims, static_cast<std::size_t>(dims)};
    }
};

/// Per patch: cells x cells spatial grid of `bins`-bin histograms of
/// gradient orientation modulo pi, magnitude weighted and linearly
/// soft-binned, then L2-normalized. Gradients are taken on the grayscale
/// image after optional Gaussian pre-smoothing. Zero-gradient patches get 1/sqrt(D).
FeatureMatrix patch_descriptors(const Image& img, const PatchGrid& grid, const DescriptorOptions& opts = {});

struct SimilarityMatrix {
    int size = 0;
    double tau = 0.1;
    std::vector<double> a;  // row-major size x size

    double at(int i, int j) const noexcept { return a[static_cast<std::size_t>(i) * size + j]; }
    std::vector<double> diagonal() const;
};

/// A = F_rgb F_x^T / tau, each entry summed in fixed dimension order.
SimilarityMatrix similarity_matrix(const FeatureMatrix& f_rgb, const FeatureMatrix& f_x, double tau = 0.1);

/// -Tr(A)/|A|_F + lambda * sum_{i != j} |A_ij| / |A|_F. Lower means more
/// diagonal. nullopt for a zero matrix.
std::optional<double> self_match_score(const SimilarityMatrix& a, double lambda = 0.1);

struct FilterResult {
    SparseMap sparse;
    ConfidenceMap conf;
    Mask rejected;  // pixel level
    std::vector<std::uint8_t> rejected_patches;
    std::size_t rejected_count = 0;
    double q = 1.0;
    double theta = 0.0;
    bool degenerate = false;
};

/// Patch rejection from the diagonal d of A: q = Q50(d) / Q99(d) clamped to
/// [0,1], theta = Q_{1-q}(d); patches with d_i < theta are voided. Surviving
/// patches contribute every pixel of xd with confidence
/// (d_i - min d) / (max d - min d). When Q99(d) <= 0 nothing is rejected and
/// `degenerate` is set.
FilterResult concentration_and_filter(const Image& xd, const SimilarityMatrix& a, const PatchGrid& grid);

/// Same, from the diagonal alone (one entry per patch).
FilterResult concentration_and_filter(const Image& xd, std::span<const double> diag, const PatchGrid& grid);

/// Single-level re-densification of the filtered map. nullopt when the map
/// has no known pixel (callers fall back to the fused image).
std::optional<Image> fine_densify(const densify::AffinityField& aff, const SparseMap& filtered,
                                  const ConfidenceMap& cm, const densify::DensifyConfig& cfg);
std::optional<Image> fine_densify(const Image& rgb, const SparseMap& filtered, const ConfidenceMap& cm,
                                  const densify::DensifyConfig& cfg);

}  // namespace rgbx::fuse
