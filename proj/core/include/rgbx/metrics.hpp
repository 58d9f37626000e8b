#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgbx/fuse_filter.hpp"
#include "rgbx/image.hpp"

namespace rgbx::metrics {

/// Returned by psnr for identical inputs.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) over all channels.
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Same, restricted to pixels where `mask` is set (single-channel inputs).
double psnr_masked(const Image& a, const Image& b, const Mask& mask, double peak = 1.0);

struct SsimOptions {
    int window = 8;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

/// Mean local SSIM over every window x window block at stride 1, uniform
/// weights. Inputs are converted to grayscale.
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {});

struct ErrorStats {
    double mae = 0.0;
    double rmse = 0.0;
};

/// Errors in physical units: stored values are mapped through each side's
/// descriptor (value * scale + offset) before differencing. Units must agree.
ErrorStats mae_rmse(const Image& a, const UnitsDescriptor& ua, const Image& b, const UnitsDescriptor& ub);
ErrorStats mae_rmse(const Image& a, const Image& b);

/// Linear-interpolation percentiles (ps in [0,100]) of diag(A).
std::vector<double> diag_percentiles(const fuse::SimilarityMatrix& a, std::span<const double> ps);

struct FrameMetrics {
    int frame = 0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    std::vector<double> diag_pct;  // p30, p50, p70, p90
    std::optional<double> self_match_score;
};

struct MetricReport {
    std::vector<FrameMetrics> frames;
    std::optional<double> consistency;

    /// Arithmetic mean over frames; infinite PSNRs are excluded from the
    /// PSNR mean (reported as infinite only if every frame is).
    FrameMetrics aggregate() const;

    /// Columns: frame,psnr_db,ssim,mae,rmse,p30,p50,p70,p90,self_match_score,consistency.
    /// One row per frame followed by a row with frame = "mean".
    void write_csv(std::ostream& os) const;
    std::string to_json() const;
};

inline constexpr double kReportPercentiles[] = {30.0, 50.0, 70.0, 90.0};

/// Fills every per-frame field for one output/GT pair.
FrameMetrics evaluate_frame(int frame, const Image& output, const Image& gt, const Image& rgb,
                            double tau = 0.1, double lambda = 0.1);

}  // namespace rgbx::metrics
