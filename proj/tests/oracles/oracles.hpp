#pragma once

// Independent reference implementations used by unit and acceptance tests.
// Deliberately naive: no shared helpers with the library beyond plain types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rgbx/densify.hpp"
#include "rgbx/fuse_filter.hpp"
#include "rgbx/image.hpp"
#include "rgbx/matching.hpp"

namespace rgbx::oracle {

inline int nearest_int(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline bool bilinear(const Image& img, double row, double col, double& out) {
    const int h = img.height(), w = img.width();
    if (!(row >= 0.0 && col >= 0.0 && row <= h - 1 && col <= w - 1)) return false;
    const int r0 = static_cast<int>(std::floor(row)), c0 = static_cast<int>(std::floor(col));
    const int r1 = r0 + 1 < h ? r0 + 1 : r0, c1 = c0 + 1 < w ? c0 + 1 : c0;
    const double a = row - r0, b = col - c0;
    const double top = (1.0 - b) * img.at(r0, c0) + b * img.at(r0, c1);
    const double bot = (1.0 - b) * img.at(r1, c0) + b * img.at(r1, c1);
    out = (1.0 - a) * top + a * bot;
    return true;
}

struct Accumulated {
    std::vector<double> value;
    std::vector<double> conf;
    std::vector<std::uint32_t> count;
};

/// Per target pixel, scans every match of every set and averages the
/// contributions whose rounded p_rgb hits that pixel.
inline Accumulated accumulate(std::span<const matching::MatchSet> sets, std::span<const Image> xs, int w, int h) {
    Accumulated a;
    a.value.assign(static_cast<std::size_t>(w) * h, 0.0);
    a.conf = a.value;
    a.count.assign(a.value.size(), 0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double vs = 0.0, cs = 0.0;
            std::uint32_t n = 0;
            for (std::size_t s = 0; s < sets.size(); ++s) {
                for (const auto& m : sets[s].matches) {
                    if (nearest_int(m.rgb.row) != r || nearest_int(m.rgb.col) != c) continue;
                    double v = 0.0;
                    if (!bilinear(xs[s], m.x.row, m.x.col, v)) continue;
                    vs += v;
                    cs += m.conf;
                    ++n;
                }
            }
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            a.count[i] = n;
            if (n > 0) {
                a.value[i] = vs / n;
                a.conf[i] = cs / n;
            }
        }
    }
    return a;
}

/// Propagation with the certainty map only:
///   L'(p) = (1 - cs(p)) * sum_k w_k(p) L(p + o_k) + cs(p) * X(p).
inline std::vector<double> propagate_certainty_only(const std::vector<double>& l0,
                                                    const densify::AffinityField& aff,
                                                    const SparseMap& sparse, int iterations, double tol) {
    const int w = aff.width, h = aff.height;
    std::vector<double> cur = l0, nxt(cur.size());
    const std::size_t k = aff.offsets.size();
    for (int t = 0; t < iterations; ++t) {
        double step = 0.0;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const std::size_t p = static_cast<std::size_t>(r) * w + c;
                double agg = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    const int rr = r + aff.offsets[j].dr, cc = c + aff.offsets[j].dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    agg += aff.weights[p * k + j] * cur[static_cast<std::size_t>(rr) * w + cc];
                }
                const double cs = sparse.counts[p] != 0 ? 1.0 : 0.0;
                const double xm = sparse.counts[p] != 0 ? sparse.values[p] : 0.0;
                nxt[p] = (1.0 - cs) * agg + cs * xm;
                step = std::max(step, std::fabs(nxt[p] - cur[p]));
            }
        }
        std::swap(cur, nxt);
        if (step < tol) break;
    }
    return cur;
}

/// Inverse-square-distance mean of the 4 nearest known pixels, by full scan.
inline std::vector<double> init_dense(const SparseMap& s) {
    struct Cand {
        double d2;
        std::size_t i;
    };
    std::vector<double> out(s.size());
    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.counts[i] != 0) known.push_back(i);
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.counts[i] != 0) {
            out[i] = s.values[i];
            continue;
        }
        std::vector<Cand> all;
        for (std::size_t j : known) {
            const double dr = double(j / s.width) - double(i / s.width);
            const double dc = double(j % s.width) - double(i % s.width);
            all.push_back({dr * dr + dc * dc, j});
        }
        std::sort(all.begin(), all.end(),
                  [](const Cand& a, const Cand& b) { return a.d2 < b.d2 || (a.d2 == b.d2 && a.i < b.i); });
        double num = 0.0, den = 0.0;
        for (std::size_t n = 0; n < std::min<std::size_t>(4, all.size()); ++n) {
            num += (1.0 / all[n].d2) * s.values[all[n].i];
            den += 1.0 / all[n].d2;
        }
        out[i] = num / den;
    }
    return out;
}

/// Linear-interpolation quantile over an insertion-sorted copy.
inline double quantile(std::vector<double> v, double p) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double x = v[i];
        std::size_t j = i;
        while (j > 0 && v[j - 1] > x) {
            v[j] = v[j - 1];
            --j;
        }
        v[j] = x;
    }
    p = std::min(1.0, std::max(0.0, p));
    const double pos = p * double(v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (pos - double(i)) * (v[i + 1] - v[i]);
}

struct FilterDecision {
    double q = 1.0;
    double theta = 0.0;
    std::vector<std::uint8_t> rejected;
};

inline FilterDecision filter(const std::vector<double>& d) {
    FilterDecision f;
    f.rejected.assign(d.size(), 0);
    const double q99 = quantile(d, 0.99);
    if (q99 <= 0.0) {
        f.theta = *std::min_element(d.begin(), d.end());
        return f;
    }
    f.q = std::min(1.0, std::max(0.0, quantile(d, 0.5) / q99));
    f.theta = quantile(d, 1.0 - f.q);
    for (std::size_t i = 0; i < d.size(); ++i) f.rejected[i] = d[i] < f.theta;
    return f;
}

/// A_ij = sum_k F_rgb[i][k] F_x[j][k] / tau by triple loop.
inline std::vector<double> similarity(const fuse::FeatureMatrix& a, const fuse::FeatureMatrix& b, double tau) {
    std::vector<double> out(static_cast<std::size_t>(a.rows) * b.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.dims; ++k) s += a.data[std::size_t(i) * a.dims + k] * b.data[std::size_t(j) * b.dims + k];
            out[std::size_t(i) * b.rows + j] = s / tau;
        }
    }
    return out;
}

}  // namespace rgbx::oracle
