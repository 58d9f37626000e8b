#include "rgbx/homography.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace rgbx::matching {

namespace {

using Mat3 = Eigen::Matrix3d;

Mat3 to_eigen(const std::array<double, 9>& h) {
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = h[3 * r + c];
    return m;
}

std::array<double, 9> from_eigen(const Mat3& m) {
    std::array<double, 9> h{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) h[3 * r + c] = m(r, c);
    return h;
}

/// Similarity transform moving the centroid to the origin with mean
/// distance sqrt(2).
struct Normalizer {
    Mat3 t = Mat3::Identity();

    Eigen::Vector2d apply(double x, double y) const {
        return {t(0, 0) * x + t(0, 2), t(1, 1) * y + t(1, 2)};
    }
};

template <typename GetPoint>
Normalizer make_normalizer(std::size_t n, GetPoint get) {
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d p = get(i);
        cx += p.x();
        cy += p.y();
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    double mean_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d p = get(i);
        mean_dist += std::hypot(p.x() - cx, p.y() - cy);
    }
    mean_dist /= static_cast<double>(n);
    Normalizer norm;
    const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
    norm.t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
    return norm;
}

bool collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d u = b - a;
    const Eigen::Vector2d v = c - a;
    return std::abs(u.x() * v.y() - u.y() * v.x()) < 1e-6;
}

bool any_three_collinear(const std::array<Eigen::Vector2d, 4>& p) {
    return collinear(p[0], p[1], p[2]) || collinear(p[0], p[1], p[3]) ||
           collinear(p[0], p[2], p[3]) || collinear(p[1], p[2], p[3]);
}

/// Point cloud with (numerically) zero spread across its principal axis.
bool all_collinear(std::span<const Eigen::Vector2d> p) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& v : p) mean += v;
    mean /= static_cast<double>(p.size());
    Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
    for (const auto& v : p) s += (v - mean) * (v - mean).transpose();
    const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s).eigenvalues();
    return ev(0) <= 1e-12 * std::max(ev(1), 1e-300);
}

/// DLT in normalized coordinates; src -> dst. Returns the denormalized H.
std::optional<Mat3> solve_dlt(std::span<const Eigen::Vector2d> src, std::span<const Eigen::Vector2d> dst,
                              const Normalizer& src_norm, const Normalizer& dst_norm) {
    const std::size_t n = src.size();
    Eigen::MatrixXd a(2 * n, 9);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = src[i].x(), y = src[i].y();
        const double u = dst[i].x(), v = dst[i].y();
        const auto r = static_cast<Eigen::Index>(2 * i);
        a.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        a.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::Matrix<double, 9, 1> h;
    if (n == 4) {
        // Pad to square so the full V is available from a fixed-size SVD.
        Eigen::Matrix<double, 9, 9> sq = Eigen::Matrix<double, 9, 9>::Zero();
        sq.topRows(8) = a;
        Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(sq, Eigen::ComputeFullV);
        h = svd.matrixV().col(8);
    } else {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
        h = svd.matrixV().col(8);
    }
    Mat3 hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Mat3 full = dst_norm.t.inverse() * hn * src_norm.t;
    if (!full.allFinite() || std::abs(full(2, 2)) < 1e-15) return std::nullopt;
    full /= full(2, 2);
    if (std::abs(full.determinant()) <= 1e-12) return std::nullopt;
    return full;
}

}  // namespace

Homography::Homography() : h_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography::Homography(const std::array<double, 9>& row_major) : h_(row_major) {
    for (double v : h_) {
        if (!std::isfinite(v)) throw std::invalid_argument("homography has non-finite entries");
    }
    if (std::abs(h_[8]) < 1e-15) throw std::invalid_argument("homography h[2][2] is zero");
    const double s = h_[8];
    for (double& v : h_) v /= s;
    if (std::abs(determinant()) <= 1e-12) throw std::invalid_argument("homography is singular");
}

Homography Homography::translation(double dx, double dy) {
    return Homography({1, 0, dx, 0, 1, dy, 0, 0, 1});
}

double Homography::determinant() const noexcept { return to_eigen(h_).determinant(); }

Homography Homography::inverse() const { return Homography(from_eigen(to_eigen(h_).inverse())); }

Homography Homography::operator*(const Homography& rhs) const {
    return Homography(from_eigen(to_eigen(h_) * to_eigen(rhs.h_)));
}

std::optional<PixelCoord> Homography::map(const PixelCoord& p) const noexcept {
    const double x = p.col, y = p.row;
    const double w = h_[6] * x + h_[7] * y + h_[8];
    if (std::abs(w) < 1e-12) return std::nullopt;
    const double u = (h_[0] * x + h_[1] * y + h_[2]) / w;
    const double v = (h_[3] * x + h_[4] * y + h_[5]) / w;
    return PixelCoord{v, u};
}

double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Match& m) {
    const auto fwd = h.map(m.x);
    const auto bwd = h_inv.map(m.rgb);
    if (!fwd || !bwd) return std::numeric_limits<double>::infinity();
    const double e1 = std::pow(fwd->row - m.rgb.row, 2) + std::pow(fwd->col - m.rgb.col, 2);
    const double e2 = std::pow(bwd->row - m.x.row, 2) + std::pow(bwd->col - m.x.col, 2);
    return std::sqrt(0.5 * (e1 + e2));
}

std::optional<Homography> fit_homography_dlt(std::span<const Match> matches) {
    if (matches.size() < 4) return std::nullopt;
    const auto src_norm = make_normalizer(matches.size(), [&](std::size_t i) {
        return Eigen::Vector2d(matches[i].x.col, matches[i].x.row);
    });
    const auto dst_norm = make_normalizer(matches.size(), [&](std::size_t i) {
        return Eigen::Vector2d(matches[i].rgb.col, matches[i].rgb.row);
    });
    std::vector<Eigen::Vector2d> src(matches.size()), dst(matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) {
        src[i] = src_norm.apply(matches[i].x.col, matches[i].x.row);
        dst[i] = dst_norm.apply(matches[i].rgb.col, matches[i].rgb.row);
    }
    if (matches.size() == 4 &&
        (any_three_collinear({src[0], src[1], src[2], src[3]}) ||
         any_three_collinear({dst[0], dst[1], dst[2], dst[3]}))) {
        return std::nullopt;
    }
    if (all_collinear(src) || all_collinear(dst)) return std::nullopt;
    const auto m = solve_dlt(src, dst, src_norm, dst_norm);
    if (!m) return std::nullopt;
    try {
        return Homography(from_eigen(*m));
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

std::optional<HomographyFit> estimate_homography(const MatchSet& ms, const RansacOptions& opts) {
    const auto& matches = ms.matches;
    const std::size_t n = matches.size();
    if (n < 4) return std::nullopt;

    // Global normalization shared by every minimal sample.
    const auto src_norm = make_normalizer(n, [&](std::size_t i) {
        return Eigen::Vector2d(matches[i].x.col, matches[i].x.row);
    });
    const auto dst_norm = make_normalizer(n, [&](std::size_t i) {
        return Eigen::Vector2d(matches[i].rgb.col, matches[i].rgb.row);
    });
    std::vector<Eigen::Vector2d> src(n), dst(n);
    std::vector<double> weights(n);
    double weight_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        src[i] = src_norm.apply(matches[i].x.col, matches[i].x.row);
        dst[i] = dst_norm.apply(matches[i].rgb.col, matches[i].rgb.row);
        weights[i] = matches[i].conf;
        weight_total += matches[i].conf;
    }
    if (weight_total <= 0.0) std::fill(weights.begin(), weights.end(), 1.0);

    std::mt19937_64 rng(opts.seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const double t2 = opts.reproj_thresh * opts.reproj_thresh;

    auto score = [&](const Homography& h, std::vector<std::uint8_t>& mask) {
        const Homography hi = h.inverse();
        double cost = 0.0;
        std::size_t count = 0;
        mask.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double e = symmetric_transfer_error(h, hi, matches[i]);
            if (e < opts.reproj_thresh) {
                mask[i] = 1;
                ++count;
                cost += e * e;
            } else {
                cost += t2;
            }
        }
        return std::pair{count, cost};
    };

    std::optional<Homography> best;
    std::vector<std::uint8_t> best_mask, mask;
    std::size_t best_count = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    long long needed = opts.max_iters;

    for (long long iter = 0; iter < needed && iter < opts.max_iters; ++iter) {
        std::array<std::size_t, 4> idx{};
        bool distinct = false;
        for (int attempt = 0; attempt < 64 && !distinct; ++attempt) {
            for (auto& k : idx) k = pick(rng);
            distinct = idx[0] != idx[1] && idx[0] != idx[2] && idx[0] != idx[3] &&
                       idx[1] != idx[2] && idx[1] != idx[3] && idx[2] != idx[3];
        }
        if (!distinct) continue;
        const std::array<Eigen::Vector2d, 4> s{src[idx[0]], src[idx[1]], src[idx[2]], src[idx[3]]};
        const std::array<Eigen::Vector2d, 4> d{dst[idx[0]], dst[idx[1]], dst[idx[2]], dst[idx[3]]};
        if (any_three_collinear(s) || any_three_collinear(d)) continue;

        const auto m = solve_dlt(s, d, src_norm, dst_norm);
        if (!m) continue;
        std::optional<Homography> h;
        try {
            h = Homography(from_eigen(*m));
        } catch (const std::invalid_argument&) {
            continue;
        }
        const auto [count, cost] = score(*h, mask);
        if (cost < best_cost) {
            best_cost = cost;
            best_count = count;
            best = h;
            best_mask = mask;
            const double w = static_cast<double>(count) / static_cast<double>(n);
            const double p_fail = 1.0 - std::pow(w, 4);
            if (p_fail <= 0.0) {
                needed = iter + 1;
            } else if (p_fail < 1.0) {
                const double k = std::log(1.0 - opts.confidence) / std::log(p_fail);
                needed = std::min<long long>(opts.max_iters, static_cast<long long>(std::ceil(k)));
            }
        }
    }
    if (!best || best_count < 4) return std::nullopt;

    // Refit on inliers until the inlier set stops growing.
    for (int round = 0; round < 5; ++round) {
        std::vector<Match> inl;
        inl.reserve(best_count);
        for (std::size_t i = 0; i < n; ++i) {
            if (best_mask[i]) inl.push_back(matches[i]);
        }
        const auto refit = fit_homography_dlt(inl);
        if (!refit) break;
        const auto [count, cost] = score(*refit, mask);
        if (count < best_count) break;
        const bool same = mask == best_mask;
        best = refit;
        best_count = count;
        best_cost = cost;
        best_mask = mask;
        if (same) break;
    }
    return HomographyFit{*best, std::move(best_mask), best_count};
}

WarpResult warp_image(const Image& x, const Homography& h, int out_width, int out_height) {
    const Homography inv = h.inverse();
    WarpResult out{Image(out_width, out_height, x.channels(), x.units()),
                   Mask(out_width, out_height)};
    for (int r = 0; r < out_height; ++r) {
        for (int c = 0; c < out_width; ++c) {
            const auto src = inv.map(PixelCoord{double(r), double(c)});
            if (!src) continue;
            bool valid = true;
            for (int ch = 0; ch < x.channels() && valid; ++ch) {
                const auto v = sample_bilinear(x, src->row, src->col, ch);
                if (!v) {
                    valid = false;
                    break;
                }
                out.image.at(r, c, ch) = *v;
            }
            if (valid) out.validity.bits[static_cast<std::size_t>(r) * out_width + c] = 1;
        }
    }
    return out;
}

}  // namespace rgbx::matching
