#include "rgbx/classical_matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace rgbx::matching {

namespace {

struct OrientationField {
    int width = 0;
    int height = 0;
    std::vector<double> f1;      // |g| cos 2θ
    std::vector<double> f2;      // |g| sin 2θ
    std::vector<double> energy;  // |g|^2

    std::size_t idx(int r, int c) const noexcept { return static_cast<std::size_t>(r) * width + c; }
};

OrientationField orientation_field(const Image& img) {
    const Image gray = to_grayscale(img);
    OrientationField f;
    f.width = gray.width();
    f.height = gray.height();
    const std::size_t n = gray.pixel_count();
    f.f1.assign(n, 0.0);
    f.f2.assign(n, 0.0);
    f.energy.assign(n, 0.0);
    auto px = [&](int r, int c) {
        r = std::clamp(r, 0, f.height - 1);
        c = std::clamp(c, 0, f.width - 1);
        return gray.at(r, c);
    };
    for (int r = 0; r < f.height; ++r) {
        for (int c = 0; c < f.width; ++c) {
            // Sobel
            const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
            const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
            const double e = gx * gx + gy * gy;
            const std::size_t i = f.idx(r, c);
            f.energy[i] = e;
            if (e > 0.0) {
                const double m = std::sqrt(e);
                f.f1[i] = (gx * gx - gy * gy) / m;
                f.f2[i] = 2.0 * gx * gy / m;
            }
        }
    }
    return f;
}

/// Summed-area table with a zero first row/column.
struct Integral {
    int width = 0;
    std::vector<double> s;

    Integral(const std::vector<double>& v, int w, int h) : width(w + 1), s((w + 1) * (h + 1), 0.0) {
        for (int r = 0; r < h; ++r) {
            double row = 0.0;
            for (int c = 0; c < w; ++c) {
                row += v[static_cast<std::size_t>(r) * w + c];
                s[(r + 1) * width + c + 1] = s[r * width + c + 1] + row;
            }
        }
    }
    // Sum over rows [r0, r0+n) and cols [c0, c0+n).
    double box(int r0, int c0, int n) const noexcept {
        const int r1 = r0 + n, c1 = c0 + n;
        return s[r1 * width + c1] - s[r0 * width + c1] - s[r1 * width + c0] + s[r0 * width + c0];
    }
};

double parabolic_offset(double left, double center, double right) {
    const double denom = left - 2.0 * center + right;
    if (denom >= 0.0) return 0.0;
    return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

MatchSet ClassicalMatcher::match_pair(int rgb_frame, const Image& rgb, int x_frame, const Image& x) const {
    MatchSet ms;
    ms.rgb_frame = rgb_frame;
    ms.x_frame = x_frame;
    const int win = opts_.window;
    const int half = win / 2;
    if (rgb.width() < win || rgb.height() < win || x.width() < win || x.height() < win) {
        ms.warning = true;
        return ms;
    }

    const OrientationField fi = orientation_field(rgb);
    const OrientationField fx = orientation_field(x);
    const double n = 2.0 * win * win;

    // Keypoints: arg-max of 5x5-smoothed energy in each stride cell.
    const Integral energy_sum(fi.energy, fi.width, fi.height);
    double mean_energy = 0.0;
    for (double e : fi.energy) mean_energy += e;
    mean_energy /= static_cast<double>(fi.energy.size());

    const Integral x1(fx.f1, fx.width, fx.height);
    const Integral x2(fx.f2, fx.width, fx.height);
    const Integral xe(fx.energy, fx.width, fx.height);  // f1^2 + f2^2 == energy

    std::vector<double> scores;
    for (int cr = 0; cr < fi.height; cr += opts_.stride) {
        for (int cc = 0; cc < fi.width; cc += opts_.stride) {
            int best_r = -1, best_c = -1;
            double best_e = 0.0;
            for (int r = std::max(cr, half); r < std::min(cr + opts_.stride, fi.height - half + 1); ++r) {
                for (int c = std::max(cc, half); c < std::min(cc + opts_.stride, fi.width - half + 1); ++c) {
                    if (r - 2 < 0 || c - 2 < 0 || r + 3 > fi.height || c + 3 > fi.width) continue;
                    const double e = energy_sum.box(r - 2, c - 2, 5);
                    if (e > best_e) {
                        best_e = e;
                        best_r = r;
                        best_c = c;
                    }
                }
            }
            if (best_r < 0 || best_e / 25.0 <= opts_.min_energy_ratio * mean_energy || best_e <= 1e-12) {
                continue;
            }

            // RGB patch rows [best_r - half, best_r + half).
            const int pr0 = best_r - half, pc0 = best_c - half;
            double sum_a = 0.0, sum_aa = 0.0;
            std::vector<double> a1(win * win), a2(win * win);
            for (int dr = 0; dr < win; ++dr) {
                for (int dc = 0; dc < win; ++dc) {
                    const std::size_t i = fi.idx(pr0 + dr, pc0 + dc);
                    a1[dr * win + dc] = fi.f1[i];
                    a2[dr * win + dc] = fi.f2[i];
                    sum_a += fi.f1[i] + fi.f2[i];
                    sum_aa += fi.energy[i];
                }
            }
            const double var_a = sum_aa - sum_a * sum_a / n;
            if (var_a <= 1e-12) continue;

            const int rlo = std::max(0, pr0 - opts_.search_radius);
            const int rhi = std::min(fx.height - win, pr0 + opts_.search_radius);
            const int clo = std::max(0, pc0 - opts_.search_radius);
            const int chi = std::min(fx.width - win, pc0 + opts_.search_radius);
            if (rlo > rhi || clo > chi) continue;
            const int sw = chi - clo + 1;
            scores.assign(static_cast<std::size_t>(rhi - rlo + 1) * sw,
                          -std::numeric_limits<double>::infinity());

            double best_s = -std::numeric_limits<double>::infinity();
            int br = -1, bc = -1;
            for (int qr = rlo; qr <= rhi; ++qr) {
                for (int qc = clo; qc <= chi; ++qc) {
                    const double sum_b = x1.box(qr, qc, win) + x2.box(qr, qc, win);
                    const double var_b = xe.box(qr, qc, win) - sum_b * sum_b / n;
                    if (var_b <= 1e-12) continue;
                    double dot = 0.0;
                    for (int dr = 0; dr < win; ++dr) {
                        const std::size_t row = fx.idx(qr + dr, qc);
                        const double* b1 = &fx.f1[row];
                        const double* b2 = &fx.f2[row];
                        const double* p1 = &a1[dr * win];
                        const double* p2 = &a2[dr * win];
                        for (int dc = 0; dc < win; ++dc) dot += p1[dc] * b1[dc] + p2[dc] * b2[dc];
                    }
                    const double s = (dot - sum_a * sum_b / n) / std::sqrt(var_a * var_b);
                    scores[static_cast<std::size_t>(qr - rlo) * sw + (qc - clo)] = s;
                    if (s > best_s) {
                        best_s = s;
                        br = qr;
                        bc = qc;
                    }
                }
            }
            if (br < 0) continue;

            double off_r = 0.0, off_c = 0.0;
            if (opts_.subpixel) {
                auto at = [&](int qr, int qc) {
                    return scores[static_cast<std::size_t>(qr - rlo) * sw + (qc - clo)];
                };
                if (br > rlo && br < rhi && std::isfinite(at(br - 1, bc)) && std::isfinite(at(br + 1, bc))) {
                    off_r = parabolic_offset(at(br - 1, bc), best_s, at(br + 1, bc));
                }
                if (bc > clo && bc < chi && std::isfinite(at(br, bc - 1)) && std::isfinite(at(br, bc + 1))) {
                    off_c = parabolic_offset(at(br, bc - 1), best_s, at(br, bc + 1));
                }
            }
            Match m;
            m.rgb = {double(best_r), double(best_c)};
            m.x = {std::clamp(br + half + off_r, 0.0, double(x.height() - 1)),
                   std::clamp(bc + half + off_c, 0.0, double(x.width() - 1))};
            m.conf = std::clamp(best_s, 0.0, 1.0);
            ms.matches.push_back(m);
        }
    }
    if (ms.matches.empty()) ms.warning = true;
    return ms;
}

}  // namespace rgbx::matching
