#include "rgbx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rgbx/stats.hpp"

namespace rgbx::metrics {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

double psnr_from_mse(double mse, double peak) {
    if (mse == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak) {
    require_same_shape(a, b, "psnr");
    if (a.empty()) throw std::invalid_argument("psnr: empty image");
    const auto da = a.data(), db = b.data();
    double se = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        se += d * d;
    }
    return psnr_from_mse(se / static_cast<double>(da.size()), peak);
}

double psnr_masked(const Image& a, const Image& b, const Mask& mask, double peak) {
    require_same_shape(a, b, "psnr_masked");
    if (a.channels() != 1 || mask.width != a.width() || mask.height != a.height()) {
        throw std::invalid_argument("psnr_masked: mask does not match image");
    }
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        if (!mask[i]) continue;
        const double d = a.data()[i] - b.data()[i];
        se += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("psnr_masked: empty mask");
    return psnr_from_mse(se / static_cast<double>(n), peak);
}

double ssim(const Image& a_in, const Image& b_in, const SsimOptions& opts) {
    if (a_in.width() != b_in.width() || a_in.height() != b_in.height()) {
        throw std::invalid_argument("ssim: dimension mismatch");
    }
    const int w = a_in.width(), h = a_in.height(), win = opts.window;
    if (w < win || h < win) throw std::invalid_argument("ssim: image smaller than window");
    const Image a = to_grayscale(a_in), b = to_grayscale(b_in);
    const double c1 = (opts.k1 * opts.peak) * (opts.k1 * opts.peak);
    const double c2 = (opts.k2 * opts.peak) * (opts.k2 * opts.peak);

    // Summed-area tables of a, b, a^2, b^2, ab.
    const std::size_t sw = static_cast<std::size_t>(w) + 1;
    std::vector<double> s[5];
    for (auto& t : s) t.assign(sw * (h + 1), 0.0);
    for (int r = 0; r < h; ++r) {
        double row[5] = {0, 0, 0, 0, 0};
        for (int c = 0; c < w; ++c) {
            const double x = a.at(r, c), y = b.at(r, c);
            const double v[5] = {x, y, x * x, y * y, x * y};
            for (int k = 0; k < 5; ++k) {
                row[k] += v[k];
                s[k][(r + 1) * sw + c + 1] = s[k][r * sw + c + 1] + row[k];
            }
        }
    }
    auto box = [&](int k, int r, int c) {
        return s[k][(r + win) * sw + c + win] - s[k][r * sw + c + win] - s[k][(r + win) * sw + c] + s[k][r * sw + c];
    };
    const double n = static_cast<double>(win) * win;
    double total = 0.0;
    std::size_t count = 0;
    for (int r = 0; r + win <= h; ++r) {
        for (int c = 0; c + win <= w; ++c) {
            const double mx = box(0, r, c) / n, my = box(1, r, c) / n;
            // Unbiased (n - 1) covariance estimates.
            const double vx = (box(2, r, c) - n * mx * mx) / (n - 1);
            const double vy = (box(3, r, c) - n * my * my) / (n - 1);
            const double cxy = (box(4, r, c) - n * mx * my) / (n - 1);
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

ErrorStats mae_rmse(const Image& a, const UnitsDescriptor& ua, const Image& b, const UnitsDescriptor& ub) {
    require_same_shape(a, b, "mae_rmse");
    if (ua.units != ub.units) throw std::invalid_argument("mae_rmse: unit mismatch");
    if (a.empty()) throw std::invalid_argument("mae_rmse: empty image");
    double ae = 0.0, se = 0.0;
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = (da[i] * ua.scale + ua.offset) - (db[i] * ub.scale + ub.offset);
        ae += std::abs(d);
        se += d * d;
    }
    const double n = static_cast<double>(da.size());
    return {ae / n, std::sqrt(se / n)};
}

ErrorStats mae_rmse(const Image& a, const Image& b) {
    return mae_rmse(a, UnitsDescriptor{a.units()}, b, UnitsDescriptor{b.units()});
}

std::vector<double> diag_percentiles(const fuse::SimilarityMatrix& a, std::span<const double> ps) {
    if (a.size <= 0) throw std::invalid_argument("diag_percentiles: empty diagonal");
    std::vector<double> fractions;
    fractions.reserve(ps.size());
    for (double p : ps) fractions.push_back(p / 100.0);
    const std::vector<double> d = a.diagonal();
    return quantiles(d, fractions);
}

FrameMetrics MetricReport::aggregate() const {
    FrameMetrics m;
    m.frame = -1;
    if (frames.empty()) return m;
    const double n = static_cast<double>(frames.size());
    double psnr_sum = 0.0;
    std::size_t psnr_n = 0;
    double sms_sum = 0.0;
    std::size_t sms_n = 0;
    m.diag_pct.assign(std::size(kReportPercentiles), 0.0);
    for (const FrameMetrics& f : frames) {
        if (std::isfinite(f.psnr_db)) {
            psnr_sum += f.psnr_db;
            ++psnr_n;
        }
        m.ssim += f.ssim / n;
        m.mae += f.mae / n;
        m.rmse += f.rmse / n;
        for (std::size_t k = 0; k < m.diag_pct.size() && k < f.diag_pct.size(); ++k) m.diag_pct[k] += f.diag_pct[k] / n;
        if (f.self_match_score) {
            sms_sum += *f.self_match_score;
            ++sms_n;
        }
    }
    m.psnr_db = psnr_n ? psnr_sum / static_cast<double>(psnr_n) : kPsnrInfinite;
    if (sms_n) m.self_match_score = sms_sum / static_cast<double>(sms_n);
    return m;
}

namespace {

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

void write_row(std::ostream& os, const std::string& label, const FrameMetrics& f,
               const std::optional<double>& consistency) {
    os << label << ',' << fmt(f.psnr_db) << ',' << fmt(f.ssim) << ',' << fmt(f.mae) << ',' << fmt(f.rmse);
    for (std::size_t k = 0; k < std::size(kReportPercentiles); ++k) {
        os << ',' << (k < f.diag_pct.size() ? fmt(f.diag_pct[k]) : "");
    }
    os << ',' << (f.self_match_score ? fmt(*f.self_match_score) : "") << ','
       << (consistency ? fmt(*consistency) : "") << '\n';
}

nlohmann::json frame_json(const FrameMetrics& f) {
    nlohmann::json j;
    j["psnr_db"] = std::isfinite(f.psnr_db) ? nlohmann::json(f.psnr_db) : nlohmann::json("inf");
    j["ssim"] = f.ssim;
    j["mae"] = f.mae;
    j["rmse"] = f.rmse;
    const char* names[] = {"p30", "p50", "p70", "p90"};
    for (std::size_t k = 0; k < f.diag_pct.size() && k < 4; ++k) j[names[k]] = f.diag_pct[k];
    j["self_match_score"] = f.self_match_score ? nlohmann::json(*f.self_match_score) : nlohmann::json();
    return j;
}

}  // namespace

void MetricReport::write_csv(std::ostream& os) const {
    os << "frame,psnr_db,ssim,mae,rmse,p30,p50,p70,p90,self_match_score,consistency\n";
    for (const FrameMetrics& f : frames) write_row(os, std::to_string(f.frame), f, std::nullopt);
    write_row(os, "mean", aggregate(), consistency);
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["frames"] = nlohmann::json::array();
    for (const FrameMetrics& f : frames) {
        auto fj = frame_json(f);
        fj["frame"] = f.frame;
        j["frames"].push_back(fj);
    }
    j["mean"] = frame_json(aggregate());
    j["consistency"] = consistency ? nlohmann::json(*consistency) : nlohmann::json();
    j["omitted_metrics"] = {"lpips", "siglip_icos", "blip2_itm", "blip2_itcos", "met3r"};
    return j.dump(2);
}

FrameMetrics evaluate_frame(int frame, const Image& output, const Image& gt, const Image& rgb, double tau,
                            double lambda) {
    FrameMetrics m;
    m.frame = frame;
    m.psnr_db = psnr(output, gt);
    m.ssim = ssim(output, gt);
    const ErrorStats e = mae_rmse(output, gt);
    m.mae = e.mae;
    m.rmse = e.rmse;
    const auto grid = fuse::PatchGrid::make(rgb.width(), rgb.height());
    const auto a = fuse::similarity_matrix(fuse::patch_descriptors(rgb, grid), fuse::patch_descriptors(output, grid), tau);
    m.diag_pct = diag_percentiles(a, kReportPercentiles);
    m.self_match_score = fuse::self_match_score(a, lambda);
    return m;
}

}  // namespace rgbx::metrics
