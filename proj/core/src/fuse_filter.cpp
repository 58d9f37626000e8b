#include "rgbx/fuse_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rgbx/stats.hpp"

namespace rgbx::fuse {

namespace {

/// Mean over the clipped (2r+1)^2 window, via a summed-area table.
std::vector<double> box_mean(const std::vector<double>& v, int w, int h, int r) {
    std::vector<double> s(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += v[static_cast<std::size_t>(y) * w + x];
            s[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = s[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    std::vector<double> out(v.size());
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
            const double sum = s[static_cast<std::size_t>(y1) * (w + 1) + x1] - s[static_cast<std::size_t>(y0) * (w + 1) + x1] -
                               s[static_cast<std::size_t>(y1) * (w + 1) + x0] + s[static_cast<std::size_t>(y0) * (w + 1) + x0];
            out[static_cast<std::size_t>(y) * w + x] = sum / static_cast<double>((y1 - y0) * (x1 - x0));
        }
    }
    return out;
}

std::vector<double> gaussian_blur(const std::vector<double>& v, int w, int h, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    auto pass = [&](const std::vector<double>& src, bool horizontal) {
        std::vector<double> dst(src.size());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0, norm = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = horizontal ? x + i : x;
                    const int yy = horizontal ? y : y + i;
                    if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                    acc += kernel[i + radius] * src[static_cast<std::size_t>(yy) * w + xx];
                    norm += kernel[i + radius];
                }
                dst[static_cast<std::size_t>(y) * w + x] = acc / norm;
            }
        }
        return dst;
    };
    return pass(pass(v, true), false);
}

}  // namespace

Image enhance(const Image& xd, const Image& rgb, const EnhanceOptions& opts) {
    if (xd.channels() != 1) throw std::invalid_argument("enhance: X image must be 1-channel");
    if (xd.width() != rgb.width() || xd.height() != rgb.height()) {
        throw std::invalid_argument("enhance: dimension mismatch");
    }
    if (rgb.channels() != 3 && rgb.channels() != 1) throw std::invalid_argument("enhance: guide must have 1 or 3 channels");
    const int w = xd.width(), h = xd.height(), r = opts.radius;
    const int nc = rgb.channels();
    const std::size_t n = xd.pixel_count();
    const std::vector<double> p(xd.data().begin(), xd.data().end());

    std::vector<std::vector<double>> guide(nc, std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        for (int c = 0; c < nc; ++c) guide[c][k] = rgb.data()[k * nc + c];
    }
    std::vector<std::vector<double>> mean_i(nc), mean_ip(nc);
    for (int c = 0; c < nc; ++c) {
        mean_i[c] = box_mean(guide[c], w, h, r);
        std::vector<double> ip(n);
        for (std::size_t k = 0; k < n; ++k) ip[k] = guide[c][k] * p[k];
        mean_ip[c] = box_mean(ip, w, h, r);
    }
    const auto mean_p = box_mean(p, w, h, r);
    // Upper triangle of the guide covariance, (0,0) (0,1) (0,2) (1,1) (1,2) (2,2).
    std::vector<std::vector<double>> corr;
    for (int c0 = 0; c0 < nc; ++c0) {
        for (int c1 = c0; c1 < nc; ++c1) {
            std::vector<double> prod(n);
            for (std::size_t k = 0; k < n; ++k) prod[k] = guide[c0][k] * guide[c1][k];
            corr.push_back(box_mean(prod, w, h, r));
        }
    }

    std::vector<std::vector<double>> a(nc, std::vector<double>(n));
    std::vector<double> b(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (nc == 1) {
            const double var = corr[0][k] - mean_i[0][k] * mean_i[0][k];
            a[0][k] = (mean_ip[0][k] - mean_i[0][k] * mean_p[k]) / (var + opts.eps);
        } else {
            double s[3][3];
            int t = 0;
            for (int c0 = 0; c0 < 3; ++c0) {
                for (int c1 = c0; c1 < 3; ++c1, ++t) {
                    s[c0][c1] = s[c1][c0] = corr[t][k] - mean_i[c0][k] * mean_i[c1][k] + (c0 == c1 ? opts.eps : 0.0);
                }
            }
            double cov[3];
            for (int c = 0; c < 3; ++c) cov[c] = mean_ip[c][k] - mean_i[c][k] * mean_p[k];
            // Symmetric 3x3 solve by the adjugate.
            const double i00 = s[1][1] * s[2][2] - s[1][2] * s[2][1];
            const double i01 = s[0][2] * s[2][1] - s[0][1] * s[2][2];
            const double i02 = s[0][1] * s[1][2] - s[0][2] * s[1][1];
            const double i11 = s[0][0] * s[2][2] - s[0][2] * s[2][0];
            const double i12 = s[0][2] * s[1][0] - s[0][0] * s[1][2];
            const double i22 = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            const double det = s[0][0] * i00 + s[0][1] * i01 + s[0][2] * i02;
            a[0][k] = (i00 * cov[0] + i01 * cov[1] + i02 * cov[2]) / det;
            a[1][k] = (i01 * cov[0] + i11 * cov[1] + i12 * cov[2]) / det;
            a[2][k] = (i02 * cov[0] + i12 * cov[1] + i22 * cov[2]) / det;
        }
        b[k] = mean_p[k];
        for (int c = 0; c < nc; ++c) b[k] -= a[c][k] * mean_i[c][k];
    }
    std::vector<double> smooth = box_mean(b, w, h, r);
    for (int c = 0; c < nc; ++c) {
        const auto mean_a = box_mean(a[c], w, h, r);
        for (std::size_t k = 0; k < n; ++k) smooth[k] += mean_a[k] * guide[c][k];
    }

    const auto blurred = gaussian_blur(smooth, w, h, opts.unsharp_sigma);
    const auto [lo, hi] = value_range(xd.data());
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = std::clamp(smooth[k] + opts.unsharp_amount * (smooth[k] - blurred[k]), lo, hi);
    }
    return Image(w, h, 1, std::move(out), xd.units());
}

Image fuse_levels(std::span<const Image> enhanced) {
    if (enhanced.empty()) throw std::invalid_argument("fuse_levels: no level to fuse");
    const Image& first = enhanced.front();
    for (const Image& img : enhanced) {
        if (!img.same_shape(first)) throw std::invalid_argument("fuse_levels: dimension mismatch");
    }
    Image out(first.width(), first.height(), first.channels(), first.units());
    auto dst = out.data();
    const double k = static_cast<double>(enhanced.size());
    for (std::size_t i = 0; i < dst.size(); ++i) {
        double sum = 0.0;
        for (const Image& img : enhanced) sum += img.data()[i];
        dst[i] = sum / k;
    }
    return out;
}

PatchGrid PatchGrid::make(int width, int height, int patch) {
    if (patch < 1) throw std::invalid_argument("patch size must be positive");
    PatchGrid g;
    g.patch = patch;
    g.width = width;
    g.height = height;
    g.rows = height / patch;
    g.cols = width / patch;
    if (g.rows == 0 || g.cols == 0) throw std::invalid_argument("image smaller than one patch");
    return g;
}

PatchRect PatchGrid::rect(int index) const noexcept {
    const int pr = index / cols, pc = index % cols;
    PatchRect r{pr * patch, (pr + 1) * patch, pc * patch, (pc + 1) * patch};
    if (pr == rows - 1) r.row1 = height;
    if (pc == cols - 1) r.col1 = width;
    return r;
}

int PatchGrid::index_of(int r, int c) const noexcept {
    const int pr = std::min(r / patch, rows - 1);
    const int pc = std::min(c / patch, cols - 1);
    return pr * cols + pc;
}

FeatureMatrix patch_descriptors(const Image& img, const PatchGrid& grid, const DescriptorOptions& opts) {
    if (img.width() != grid.width || img.height() != grid.height) {
        throw std::invalid_argument("patch_descriptors: grid does not match image");
    }
    Image g = to_grayscale(img);
    const int w = g.width(), h = g.height();
    if (opts.smooth_sigma > 0.0) {
        std::vector<double> v(g.data().begin(), g.data().end());
        v = gaussian_blur(v, w, h, opts.smooth_sigma);
        std::copy(v.begin(), v.end(), g.data().begin());
    }
    const int cells = opts.cells, bins = opts.bins;
    FeatureMatrix f;
    f.rows = grid.count();
    f.dims = cells * cells * bins;
    f.data.assign(static_cast<std::size_t>(f.rows) * f.dims, 0.0);

    const double bin_width = std::numbers::pi / bins;
    for (int pi = 0; pi < f.rows; ++pi) {
        const PatchRect rc = grid.rect(pi);
        double* hist = f.data.data() + static_cast<std::size_t>(pi) * f.dims;
        const int ph = rc.row1 - rc.row0, pw = rc.col1 - rc.col0;
        for (int r = rc.row0; r < rc.row1; ++r) {
            for (int c = rc.col0; c < rc.col1; ++c) {
                const int cl = std::max(c - 1, 0), cr = std::min(c + 1, w - 1);
                const int ru = std::max(r - 1, 0), rd = std::min(r + 1, h - 1);
                const double gx = (g.at(r, cr) - g.at(r, cl)) / (cr - cl);
                const double gy = (g.at(rd, c) - g.at(ru, c)) / (rd - ru);
                const double mag = std::hypot(gx, gy);
                if (mag == 0.0) continue;
                double theta = std::atan2(gy, gx);
                if (theta < 0.0) theta += std::numbers::pi;
                if (theta >= std::numbers::pi) theta -= std::numbers::pi;
                const double pos = theta / bin_width - 0.5;
                const double fl = std::floor(pos);
                const double frac = pos - fl;
                const int b0 = ((static_cast<int>(fl) % bins) + bins) % bins;
                const int b1 = (b0 + 1) % bins;
                const int cy = std::min((r - rc.row0) * cells / ph, cells - 1);
                const int cx = std::min((c - rc.col0) * cells / pw, cells - 1);
                double* cell = hist + (cy * cells + cx) * bins;
                cell[b0] += mag * (1.0 - frac);
                cell[b1] += mag * frac;
            }
        }
        if (opts.cell_norm_floor > 0.0) {
            for (int cell = 0; cell < cells * cells; ++cell) {
                double* hc = hist + cell * bins;
                double cn = 0.0;
                for (int k = 0; k < bins; ++k) cn += hc[k] * hc[k];
                const double scale = 1.0 / std::max(std::sqrt(cn), opts.cell_norm_floor);
                for (int k = 0; k < bins; ++k) hc[k] *= scale;
            }
        }
        double norm = 0.0;
        for (int d = 0; d < f.dims; ++d) {
            hist[d] += opts.bin_floor;
            norm += hist[d] * hist[d];
        }
        if (norm > 0.0) {
            const double inv = 1.0 / std::sqrt(norm);
            for (int d = 0; d < f.dims; ++d) hist[d] *= inv;
        } else {
            const double u = 1.0 / std::sqrt(static_cast<double>(f.dims));
            for (int d = 0; d < f.dims; ++d) hist[d] = u;
        }
    }
    return f;
}

std::vector<double> SimilarityMatrix::diagonal() const {
    std::vector<double> d(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) d[i] = at(i, i);
    return d;
}

SimilarityMatrix similarity_matrix(const FeatureMatrix& f_rgb, const FeatureMatrix& f_x, double tau) {
    if (f_rgb.rows != f_x.rows || f_rgb.dims != f_x.dims) {
        throw std::invalid_argument("similarity_matrix: feature matrices differ in shape");
    }
    if (!(tau > 0.0)) throw std::invalid_argument("similarity_matrix: tau must be positive");
    SimilarityMatrix s;
    s.size = f_rgb.rows;
    s.tau = tau;
    s.a.resize(static_cast<std::size_t>(s.size) * s.size);
    for (int i = 0; i < s.size; ++i) {
        const auto ri = f_rgb.row(i);
        for (int j = 0; j < s.size; ++j) {
            const auto rj = f_x.row(j);
            double dot = 0.0;
            for (int d = 0; d < f_rgb.dims; ++d) dot += ri[d] * rj[d];
            s.a[static_cast<std::size_t>(i) * s.size + j] = dot / tau;
        }
    }
    return s;
}

std::optional<double> self_match_score(const SimilarityMatrix& a, double lambda) {
    double trace = 0.0, frob2 = 0.0, off = 0.0;
    for (int i = 0; i < a.size; ++i) {
        for (int j = 0; j < a.size; ++j) {
            const double v = a.at(i, j);
            frob2 += v * v;
            if (i == j) {
                trace += v;
            } else {
                off += std::abs(v);
            }
        }
    }
    if (!(frob2 > 0.0)) return std::nullopt;
    const double frob = std::sqrt(frob2);
    return -trace / frob + lambda * off / frob;
}

FilterResult concentration_and_filter(const Image& xd, const SimilarityMatrix& a, const PatchGrid& grid) {
    if (a.size != grid.count()) {
        throw std::invalid_argument("concentration_and_filter: similarity matrix does not match grid");
    }
    return concentration_and_filter(xd, std::span<const double>(a.diagonal()), grid);
}

FilterResult concentration_and_filter(const Image& xd, std::span<const double> d, const PatchGrid& grid) {
    if (xd.channels() != 1 || xd.width() != grid.width || xd.height() != grid.height) {
        throw std::invalid_argument("concentration_and_filter: image does not match grid");
    }
    if (d.size() != static_cast<std::size_t>(grid.count())) {
        throw std::invalid_argument("concentration_and_filter: diagonal does not match grid");
    }
    std::vector<double> sorted(d.begin(), d.end());
    std::sort(sorted.begin(), sorted.end());

    FilterResult res;
    res.rejected_patches.assign(d.size(), 0);
    const double q50 = quantile_sorted(sorted, 0.50);
    const double q99 = quantile_sorted(sorted, 0.99);
    if (q99 <= 0.0) {
        res.degenerate = true;
        res.q = 1.0;
        res.theta = sorted.front();
    } else {
        res.q = std::clamp(q50 / q99, 0.0, 1.0);
        res.theta = quantile_sorted(sorted, 1.0 - res.q);
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i] < res.theta) {
                res.rejected_patches[i] = 1;
                ++res.rejected_count;
            }
        }
    }

    const double dmin = sorted.front(), dmax = sorted.back();
    const int w = xd.width(), h = xd.height();
    res.sparse = SparseMap(w, h);
    res.conf = ConfidenceMap(w, h);
    res.rejected = Mask(w, h);
    for (int pi = 0; pi < grid.count(); ++pi) {
        const PatchRect rc = grid.rect(pi);
        const bool rejected = res.rejected_patches[pi] != 0;
        const double c = dmax > dmin ? (d[pi] - dmin) / (dmax - dmin) : 1.0;
        for (int r = rc.row0; r < rc.row1; ++r) {
            for (int col = rc.col0; col < rc.col1; ++col) {
                const std::size_t i = static_cast<std::size_t>(r) * w + col;
                if (rejected) {
                    res.rejected.bits[i] = 1;
                } else {
                    res.sparse.set(i, xd.at(r, col), 1);
                    res.conf.conf[i] = c;
                }
            }
        }
    }
    return res;
}

std::optional<Image> fine_densify(const densify::AffinityField& aff, const SparseMap& filtered,
                                  const ConfidenceMap& cm, const densify::DensifyConfig& cfg) {
    auto res = densify::densify_single(aff, filtered, cm, cfg);
    if (!res) return std::nullopt;
    return std::move(res->output);
}

std::optional<Image> fine_densify(const Image& rgb, const SparseMap& filtered, const ConfidenceMap& cm,
                                  const densify::DensifyConfig& cfg) {
    return fine_densify(densify::compute_affinities(rgb, cfg), filtered, cm, cfg);
}

}  // namespace rgbx::fuse
