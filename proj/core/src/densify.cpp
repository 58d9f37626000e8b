#include "rgbx/densify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace rgbx::densify {

void validate(const DensifyConfig& cfg) {
    if (cfg.thresholds.empty()) throw std::invalid_argument("densify: thresholds must be non-empty");
    for (std::size_t k = 0; k < cfg.thresholds.size(); ++k) {
        const double d = cfg.thresholds[k];
        if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("densify: threshold outside [0,1)");
        if (k > 0 && !(d > cfg.thresholds[k - 1])) {
            throw std::invalid_argument("densify: thresholds must be ascending");
        }
    }
    if (cfg.iterations < 1) throw std::invalid_argument("densify: iterations must be >= 1");
    if (!(cfg.sigma_color > 0.0) || !(cfg.sigma_spatial > 0.0)) {
        throw std::invalid_argument("densify: bandwidths must be positive");
    }
    if (cfg.radii.empty()) throw std::invalid_argument("densify: radii must be non-empty");
    for (int r : cfg.radii) {
        if (r < 1) throw std::invalid_argument("densify: radii must be >= 1");
    }
}

AffinityField compute_affinities(const Image& rgb, const DensifyConfig& cfg) {
    validate(cfg);
    const Image g = to_grayscale(rgb);
    const int w = g.width(), h = g.height();
    if (w < 2 || h < 2) throw std::invalid_argument("compute_affinities: image must be at least 2x2");

    AffinityField aff;
    aff.width = w;
    aff.height = h;
    static constexpr std::array<std::array<int, 2>, 8> kRing{
        {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};
    for (int r : cfg.radii) {
        for (const auto& [a, b] : kRing) aff.offsets.push_back({r * a, r * b, r});
    }
    const std::size_t k = aff.offsets.size();
    aff.weights.assign(g.pixel_count() * k, 0.0);

    const double inv_color = 1.0 / (2.0 * cfg.sigma_color * cfg.sigma_color);
    const double inv_spatial = 1.0 / (2.0 * cfg.sigma_spatial * cfg.sigma_spatial);
    std::vector<double> spatial(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double r = aff.offsets[j].radius;
        spatial[j] = std::exp(-r * r * inv_spatial);
    }

    for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
            const std::size_t p = static_cast<std::size_t>(row) * w + col;
            double* wp = aff.weights.data() + p * k;
            const double gp = g.at(row, col);
            double sum = 0.0;
            int in_bounds = 0;
            for (std::size_t j = 0; j < k; ++j) {
                const int rr = row + aff.offsets[j].dr, cc = col + aff.offsets[j].dc;
                if (!g.contains(rr, cc)) continue;
                ++in_bounds;
                const double d = gp - g.at(rr, cc);
                wp[j] = std::exp(-d * d * inv_color) * spatial[j];
                sum += wp[j];
            }
            if (sum > 0.0) {
                for (std::size_t j = 0; j < k; ++j) wp[j] /= sum;
            } else {
                // Every color term underflowed; fall back to uniform in-bounds weights.
                for (std::size_t j = 0; j < k; ++j) {
                    const int rr = row + aff.offsets[j].dr, cc = col + aff.offsets[j].dc;
                    wp[j] = g.contains(rr, cc) ? 1.0 / in_bounds : 0.0;
                }
            }
        }
    }
    return aff;
}

CertaintyMap certainty_map(const SparseMap& sparse) {
    CertaintyMap cs{sparse.width, sparse.height, std::vector<double>(sparse.size(), 0.0)};
    for (std::size_t i = 0; i < sparse.size(); ++i) cs.cs[i] = sparse.known(i) ? 1.0 : 0.0;
    return cs;
}

namespace {

/// Bucket grid over known pixels for k-nearest queries.
class KnownGrid {
public:
    explicit KnownGrid(const SparseMap& s) : width_(s.width), height_(s.height) {
        // About four known pixels per bucket.
        const double spacing = std::sqrt(static_cast<double>(s.size()) / std::max<std::size_t>(1, s.known_count()));
        cell_ = std::clamp(static_cast<int>(std::lround(2.0 * spacing)), 2, 64);
        gw_ = (width_ + cell_ - 1) / cell_;
        gh_ = (height_ + cell_ - 1) / cell_;
        cells_.resize(static_cast<std::size_t>(gw_) * gh_);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s.known(i)) continue;
            const int r = static_cast<int>(i / width_), c = static_cast<int>(i % width_);
            cells_[static_cast<std::size_t>(r / cell_) * gw_ + c / cell_].push_back(i);
        }
    }

    struct Neighbor {
        double dist2;
        std::size_t index;
        bool operator<(const Neighbor& o) const noexcept {
            return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
        }
    };

    /// Up to k nearest known pixels to (r, c), sorted by (distance, index).
    std::vector<Neighbor> nearest(int r, int c, std::size_t k, std::vector<Neighbor>& scratch) const {
        scratch.clear();
        const int br = r / cell_, bc = c / cell_;
        const int max_ring = std::max({br, bc, gh_ - 1 - br, gw_ - 1 - bc});
        for (int ring = 0; ring <= max_ring; ++ring) {
            if (scratch.size() >= k) {
                const double bound = std::max(0, ring - 1) * double(cell_);
                std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1),
                                 scratch.end());
                if (bound * bound > scratch[k - 1].dist2) break;
            }
            for (int gr = br - ring; gr <= br + ring; ++gr) {
                if (gr < 0 || gr >= gh_) continue;
                for (int gc = bc - ring; gc <= bc + ring; ++gc) {
                    if (gc < 0 || gc >= gw_) continue;
                    if (std::max(std::abs(gr - br), std::abs(gc - bc)) != ring) continue;
                    for (std::size_t idx : cells_[static_cast<std::size_t>(gr) * gw_ + gc]) {
                        const double dr = static_cast<double>(idx / width_) - r;
                        const double dc = static_cast<double>(idx % width_) - c;
                        scratch.push_back({dr * dr + dc * dc, idx});
                    }
                }
            }
        }
        if (scratch.size() > k) {
            std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1), scratch.end());
            scratch.resize(k);
        }
        std::sort(scratch.begin(), scratch.end());
        return scratch;
    }

private:
    int width_, height_, cell_ = 16, gw_ = 0, gh_ = 0;
    std::vector<std::vector<std::size_t>> cells_;
};

}  // namespace

std::optional<Image> init_dense(const SparseMap& sparse) {
    if (sparse.known_count() == 0) return std::nullopt;
    Image out(sparse.width, sparse.height, 1);
    auto data = out.data();
    const KnownGrid grid(sparse);
    std::vector<KnownGrid::Neighbor> scratch;
    for (std::size_t i = 0; i < sparse.size(); ++i) {
        if (sparse.known(i)) {
            data[i] = sparse.values[i];
            continue;
        }
        const int r = static_cast<int>(i / sparse.width), c = static_cast<int>(i % sparse.width);
        const auto nn = grid.nearest(r, c, 4, scratch);
        double num = 0.0, den = 0.0;
        for (const auto& n : nn) {
            const double wgt = 1.0 / n.dist2;
            num += wgt * sparse.values[n.index];
            den += wgt;
        }
        data[i] = num / den;
    }
    return out;
}

PropagateResult propagate(const Image& l0, const AffinityField& aff, const SparseMap& sparse,
                          const CertaintyMap& cs, const ConfidenceMap& cm, const DensifyConfig& cfg) {
    const int w = aff.width, h = aff.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (l0.width() != w || l0.height() != h || l0.channels() != 1 || sparse.width != w ||
        sparse.height != h || cs.width != w || cs.height != h || cm.width != w || cm.height != h) {
        throw std::invalid_argument("propagate: raster dimensions differ");
    }
    if (cfg.iterations < 1) throw std::invalid_argument("propagate: iterations must be >= 1");

    std::vector<double> anchor(n), target(n);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        if (!sparse.known(i) && cm.conf[i] != 0.0) {
            throw std::invalid_argument("propagate: confidence must be zero on void pixels");
        }
        anchor[i] = cs.cs[i] * cm.conf[i];
        target[i] = sparse.known(i) ? sparse.values[i] : 0.0;
        if (sparse.known(i)) {
            lo = std::min(lo, target[i]);
            hi = std::max(hi, target[i]);
        }
        lo = std::min(lo, l0.data()[i]);
        hi = std::max(hi, l0.data()[i]);
    }

    std::vector<double> cur(l0.data().begin(), l0.data().end());
    std::vector<double> next(n);
    const std::size_t k = aff.offsets.size();
    PropagateResult res;

    for (int t = 0; t < cfg.iterations; ++t) {
        double step = 0.0;
        for (int row = 0; row < h; ++row) {
            for (int col = 0; col < w; ++col) {
                const std::size_t p = static_cast<std::size_t>(row) * w + col;
                const double* wp = aff.weights.data() + p * k;
                double sum = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    const int rr = row + aff.offsets[j].dr, cc = col + aff.offsets[j].dc;
                    if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
                    sum += wp[j] * cur[static_cast<std::size_t>(rr) * w + cc];
                }
                const double v = (1.0 - anchor[p]) * sum + anchor[p] * target[p];
                if (!std::isfinite(v)) {
                    throw PropagationError("propagate: non-finite value at iteration " +
                                           std::to_string(t + 1));
                }
                next[p] = v;
                step = std::max(step, std::abs(v - cur[p]));
            }
        }
        cur.swap(next);
        res.steps.push_back(step);
        res.iterations = t + 1;
        if (step < cfg.tol) break;
    }

    const double slack = 1e-9 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    for (double v : cur) {
        if (v < lo - slack || v > hi + slack) {
            throw PropagationError("propagate: output escaped the [min, max] bound of its inputs");
        }
    }
    res.output = Image(w, h, 1, std::move(cur), l0.units());
    return res;
}

std::optional<PropagateResult> densify_single(const AffinityField& aff, const SparseMap& sparse,
                                              const ConfidenceMap& cm, const DensifyConfig& cfg) {
    auto l0 = init_dense(sparse);
    if (!l0) return std::nullopt;
    return propagate(*l0, aff, sparse, certainty_map(sparse), cm, cfg);
}

MultiLevelResult densify_multilevel(const AffinityField& aff, const SparseMap& sparse,
                                    const ConfidenceMap& conf, const DensifyConfig& cfg) {
    validate(cfg);
    require_consistent(sparse, conf);
    MultiLevelResult res;
    for (double delta : cfg.thresholds) {
        SparseMap level(sparse.width, sparse.height);
        ConfidenceMap cm(sparse.width, sparse.height);
        std::size_t known = 0;
        for (std::size_t i = 0; i < sparse.size(); ++i) {
            if (sparse.known(i) && conf.conf[i] >= delta) {
                level.set(i, sparse.values[i], sparse.counts[i]);
                cm.conf[i] = cfg.confidence_aware ? conf.conf[i] : 1.0;
                ++known;
            }
        }
        if (known == 0) {
            res.omitted.push_back(delta);
            continue;
        }
        auto out = densify_single(aff, level, cm, cfg);
        res.levels.push_back({delta, known, std::move(out->output), out->iterations});
    }
    if (res.levels.empty()) {
        throw DensifyError("densify_multilevel: no pixel survives any confidence threshold");
    }
    return res;
}

MultiLevelResult densify_multilevel(const Image& rgb, const SparseMap& sparse, const ConfidenceMap& conf,
                                    const DensifyConfig& cfg) {
    return densify_multilevel(compute_affinities(rgb, cfg), sparse, conf, cfg);
}

}  // namespace rgbx::densify
