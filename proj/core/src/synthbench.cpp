#include "rgbx/synthbench.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rgbx/image_io.hpp"

namespace rgbx::synth {

namespace fs = std::filesystem;
using matching::Homography;
using matching::PixelCoord;

std::string_view to_string(Modality m) {
    switch (m) {
    case Modality::thermal: return "thermal-like";
    case Modality::nir: return "nir-like";
    case Modality::sar: return "sar-like";
    }
    return "thermal-like";
}

Modality parse_modality(std::string_view text) {
    if (text == "thermal-like" || text == "thermal") return Modality::thermal;
    if (text == "nir-like" || text == "nir") return Modality::nir;
    if (text == "sar-like" || text == "sar") return Modality::sar;
    throw std::invalid_argument("unknown modality '" + std::string(text) + "'");
}

void validate(const SceneConfig& cfg) {
    if (cfg.width < 64 || cfg.height < 64) throw std::invalid_argument("scene size must be >= 64");
    if (cfg.frames < 1) throw std::invalid_argument("scene needs at least one frame");
    if (cfg.layer_disparity.empty() || cfg.layer_disparity.size() > 8) {
        throw std::invalid_argument("scene needs 1..8 depth layers");
    }
    for (std::size_t i = 0; i < cfg.layer_disparity.size(); ++i) {
        for (std::size_t j = i + 1; j < cfg.layer_disparity.size(); ++j) {
            if (cfg.layer_disparity[i] == cfg.layer_disparity[j]) {
                throw std::invalid_argument("layer disparities must be distinct");
            }
        }
    }
    if (!(cfg.homogeneous_fraction >= 0.0 && cfg.homogeneous_fraction < 0.9)) {
        throw std::invalid_argument("homogeneous fraction must be in [0, 0.9)");
    }
    if (!(cfg.texture_density > 0.0)) throw std::invalid_argument("texture density must be positive");
}

void validate(const NoiseModel& noise) {
    if (!(noise.position_sigma >= 0.0) || !(noise.value_sigma >= 0.0)) {
        throw std::invalid_argument("noise sigmas must be non-negative");
    }
    if (!(noise.outlier_fraction >= 0.0 && noise.outlier_fraction <= 1.0) ||
        !(noise.confidence_fidelity >= 0.0 && noise.confidence_fidelity <= 1.0)) {
        throw std::invalid_argument("noise fractions must be in [0,1]");
    }
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

double lattice(std::uint64_t seed, long long ix, long long iy) {
    const std::uint64_t h = mix(mix(seed, static_cast<std::uint64_t>(ix)), static_cast<std::uint64_t>(iy));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double quintic(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

double value_noise(std::uint64_t seed, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<long long>(fx), iy = static_cast<long long>(fy);
    const double tx = quintic(x - fx), ty = quintic(y - fy);
    const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
    const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
    return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

/// Fractal noise in [0,1].
double fbm(std::uint64_t seed, double x, double y, double base_period, int octaves = 4) {
    double sum = 0.0, amp = 0.5, norm = 0.0, freq = 1.0 / base_period;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * value_noise(seed + static_cast<std::uint64_t>(o) * 7919, x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    return sum / norm;
}

double smoothstep(double e0, double e1, double v) {
    const double t = std::clamp((v - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

double quantize(double v, double levels) { return std::round(std::clamp(v, 0.0, 1.0) * levels) / levels; }

enum class ShapeKind { rect, ellipse };

/// Surface properties driving the X rendering.
struct Material {
    double temperature = 0.5;  // thermal: level of the surface
    double slope = 0.2;        // thermal: flattened, possibly inverted, luma remap
    double nir_gain = 0.0;     // nir: vegetation brightening
    double reflectivity = 0.5; // sar
};

struct Shape {
    ShapeKind kind = ShapeKind::rect;
    double cx = 0, cy = 0, a = 1, b = 1, angle = 0;
    std::array<double, 3> color{};
    Material mat;
    std::uint64_t salt = 0;
    bool homogeneous = false;

    /// Approximate signed distance in px (negative inside).
    double signed_distance(double x, double y) const {
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double u = ca * (x - cx) + sa * (y - cy);
        const double v = -sa * (x - cx) + ca * (y - cy);
        if (kind == ShapeKind::rect) return std::max(std::abs(u) - a, std::abs(v) - b);
        const double k = std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
        return (k - 1.0) * std::min(a, b);
    }
};

double luma(const std::array<double, 3>& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

struct Sample {
    std::array<double, 3> rgb{};
    double x = 0.0;
    double reflectivity = 0.0;
    double homogeneous = 0.0;
};

/// Procedural scene: world coordinates are layer-plane pixels.
class Scene {
public:
    explicit Scene(const SceneConfig& cfg) : cfg_(cfg) {
        std::mt19937_64 rng(mix(cfg.seed, 0x5ce9e));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
        auto slope = [&] { return (u01(rng) < 0.5 ? -1.0 : 1.0) * uni(0.15, 0.35); };

        const double w = cfg.width, h = cfg.height;
        const double travel = cfg.camera_step_px * std::max(0, cfg.frames - 1);
        const double max_k = depth_factor(static_cast<int>(cfg.layer_disparity.size()) - 1);
        x_lo_ = -0.1 * w;
        x_hi_ = w * 1.1 + travel * std::max(1.0, max_k);
        tex_seed_ = mix(cfg.seed, 0x7e7);

        ground_.color = {uni(0.35, 0.5), uni(0.3, 0.45), uni(0.2, 0.3)};
        ground_.mat = {uni(0.4, 0.55), slope(), 0.0, 0.45};
        ground_.salt = rng();

        // Sky band plus walls make up the X-homogeneous share of the frame.
        sky_height_ = 0.6 * cfg.homogeneous_fraction * h;
        const double wall_share = cfg.homogeneous_fraction - sky_height_ / h;
        const int n_walls = wall_share > 0.0 ? 3 : 0;

        const int n_shapes = static_cast<int>(std::round(14 * cfg.texture_density * (x_hi_ - x_lo_) / (1.2 * w)));
        for (int i = 0; i < n_shapes; ++i) {
            Shape s;
            s.kind = u01(rng) < 0.5 ? ShapeKind::rect : ShapeKind::ellipse;
            s.cx = uni(x_lo_, x_hi_);
            s.cy = uni(sky_height_, h);
            s.a = uni(10, 34);
            s.b = uni(8, 28);
            s.angle = uni(0, std::numbers::pi);
            s.color = {uni(0.15, 0.7), uni(0.15, 0.7), uni(0.15, 0.7)};
            s.mat = {uni(0.25, 0.85), slope(), 0.0, uni(0.2, 0.9)};
            if (u01(rng) < 0.35) {
                s.mat.nir_gain = uni(0.25, 0.45);
                s.color = {uni(0.1, 0.3), uni(0.45, 0.8), uni(0.1, 0.3)};
            }
            s.salt = rng();
            shapes_.push_back(s);
        }
        if (n_walls > 0) {
            const double wall_area = wall_share * w * h / n_walls;
            for (int i = 0; i < n_walls; ++i) {
                Shape s;
                s.kind = ShapeKind::rect;
                s.a = uni(0.18, 0.26) * w;
                s.b = std::min(0.5 * (h - sky_height_) - 2.0, wall_area / (2.0 * s.a));
                s.cx = x_lo_ + (i + 0.5) * (x_hi_ - x_lo_) / n_walls;
                s.cy = uni(sky_height_ + s.b, h - s.b);
                s.color = {uni(0.5, 0.8), uni(0.5, 0.8), uni(0.5, 0.8)};
                s.mat = {uni(0.6, 0.9), 0.0, 0.0, uni(0.05, 0.15)};
                s.homogeneous = true;
                s.salt = rng();
                walls_.push_back(s);
            }
        }
        sky_color_ = {uni(0.45, 0.6), uni(0.6, 0.75), uni(0.85, 0.95)};
        sky_mat_ = {uni(0.05, 0.15), 0.0, 0.0, 0.02};

        for (int l = 1; l < static_cast<int>(cfg.layer_disparity.size()); ++l) {
            std::vector<Shape> objs;
            const double k = depth_factor(l);
            for (int i = 0; i < cfg.foreground_objects; ++i) {
                Shape s;
                s.kind = u01(rng) < 0.5 ? ShapeKind::rect : ShapeKind::ellipse;
                // Spread objects over the band seen during the sequence.
                s.cx = (i + uni(0.2, 0.8)) * (w + travel * k) / cfg.foreground_objects;
                s.cy = uni(0.35 * h, 0.85 * h);
                s.a = uni(14, 30);
                s.b = uni(14, 36);
                s.angle = uni(-0.4, 0.4);
                s.color = {uni(0.1, 0.7), uni(0.1, 0.7), uni(0.1, 0.7)};
                const double temp = u01(rng) < 0.5 ? uni(0.75, 0.95) : uni(0.2, 0.35);
                s.mat = {temp, slope(), 0.0, uni(0.5, 1.0)};
                s.salt = rng();
                objs.push_back(s);
            }
            objects_.push_back(std::move(objs));
        }
    }

    double depth_factor(int layer) const { return 1.0 + cfg_.layer_disparity[layer] / 8.0; }

    /// True if world point lies on an object of foreground layer `layer`.
    bool covers(int layer, double x, double y) const {
        if (layer == 0) return true;
        for (const Shape& s : objects_[layer - 1]) {
            if (s.signed_distance(x, y) <= 0.0) return true;
        }
        return false;
    }

    Sample sample(int layer, double x, double y) const {
        Sample s = layer == 0 ? sample_background(x, y) : sample_object(layer, x, y);
        if (cfg_.modality == Modality::sar) {
            // Gradient-magnitude base under 4-look speckle.
            auto lum = [&](double xx, double yy) {
                if (layer != 0 && !covers(layer, xx, yy)) return luma(s.rgb);
                return luma((layer == 0 ? sample_background(xx, yy) : sample_object(layer, xx, yy)).rgb);
            };
            const double gx = 0.5 * (lum(x + 1, y) - lum(x - 1, y));
            const double gy = 0.5 * (lum(x, y + 1) - lum(x, y - 1));
            const double base = s.reflectivity * (0.35 + 4.0 * std::hypot(gx, gy));
            s.x = std::clamp(0.6 * base * speckle(x, y), 0.0, 1.0);
        }
        return s;
    }

private:
    double texture(std::uint64_t salt, double x, double y) const {
        return fbm(tex_seed_ ^ salt, x, y, 9.0 / cfg_.texture_density);
    }

    double speckle(double x, double y) const {
        const double cell = 2.0;
        const std::uint64_t seed = mix(cfg_.seed, 0x5a7);
        auto gamma4 = [&](long long ix, long long iy) {
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) sum += -std::log(std::max(lattice(seed + static_cast<std::uint64_t>(k), ix, iy), 1e-12));
            return sum / 4.0;
        };
        const double gx = x / cell, gy = y / cell;
        const double fx = std::floor(gx), fy = std::floor(gy);
        const auto ix = static_cast<long long>(fx), iy = static_cast<long long>(fy);
        const double tx = quintic(gx - fx), ty = quintic(gy - fy);
        const double a = gamma4(ix, iy), b = gamma4(ix + 1, iy);
        const double c = gamma4(ix, iy + 1), d = gamma4(ix + 1, iy + 1);
        return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
    }

    /// X of a surface with base colour `color` modulated by `shade`.
    double x_value(const Material& m, const std::array<double, 3>& color, double shade) const {
        std::array<double, 3> rgb{};
        for (int c = 0; c < 3; ++c) rgb[c] = color[c] * shade;
        switch (cfg_.modality) {
        case Modality::thermal: return std::clamp(m.temperature + m.slope * (luma(rgb) - luma(color)), 0.0, 1.0);
        case Modality::nir:
            return std::clamp(0.15 * rgb[0] + 0.35 * rgb[1] + 0.2 * rgb[2] + m.nir_gain + 0.1, 0.0, 1.0);
        case Modality::sar: return 0.0;  // filled in sample()
        }
        return 0.0;
    }

    Sample sample_background(double x, double y) const {
        Sample out;
        const double gshade = 1.0 + 0.3 * (texture(ground_.salt, x, y) - 0.5);
        for (int c = 0; c < 3; ++c) out.rgb[c] = ground_.color[c] * gshade;
        out.x = x_value(ground_.mat, ground_.color, gshade);
        out.reflectivity = ground_.mat.reflectivity;

        // RGB edges are near-hard; X edges are softer (mild sensor blur).
        const double rgb_soft = 0.75, x_soft = 1.5;
        auto blend = [&](const Shape& s, double sd) {
            if (sd > x_soft) return;
            const double alpha_rgb = 1.0 - smoothstep(-rgb_soft, rgb_soft, sd);
            const double alpha_x = 1.0 - smoothstep(-x_soft, x_soft, sd);
            const double amp = s.homogeneous ? 0.01 : 0.5;
            const double shade = 1.0 + amp * (texture(s.salt, x, y) - 0.5);
            std::array<double, 3> col{};
            for (int c = 0; c < 3; ++c) col[c] = s.color[c] * shade;
            const double xv = s.homogeneous && cfg_.modality == Modality::nir ? 0.2 + 0.5 * s.mat.temperature
                                                                               : x_value(s.mat, s.color, shade);
            for (int c = 0; c < 3; ++c) out.rgb[c] = out.rgb[c] * (1 - alpha_rgb) + alpha_rgb * col[c];
            out.x = out.x * (1 - alpha_x) + alpha_x * xv;
            out.reflectivity = out.reflectivity * (1 - alpha_x) + alpha_x * s.mat.reflectivity;
            out.homogeneous = out.homogeneous * (1 - alpha_rgb) + alpha_rgb * (s.homogeneous ? 1.0 : 0.0);
        };
        for (const Shape& s : shapes_) blend(s, s.signed_distance(x, y));
        for (const Shape& s : walls_) blend(s, s.signed_distance(x, y));
        if (sky_height_ > 0.0) {
            Shape sky;
            sky.color = sky_color_;
            sky.mat = sky_mat_;
            sky.homogeneous = true;
            blend(sky, y - sky_height_);
        }
        return out;
    }

    Sample sample_object(int layer, double x, double y) const {
        Sample out;
        bool any = false;
        for (const Shape& s : objects_[layer - 1]) {
            if (s.signed_distance(x, y) > 0.0) continue;
            const double shade = 1.0 + 0.5 * (texture(s.salt, x, y) - 0.5);
            for (int c = 0; c < 3; ++c) out.rgb[c] = s.color[c] * shade;
            out.x = x_value(s.mat, s.color, shade);
            out.reflectivity = s.mat.reflectivity;
            any = true;
        }
        if (!any) throw std::logic_error("sample_object called outside any object");
        return out;
    }

    const SceneConfig& cfg_;
    std::uint64_t tex_seed_ = 0;
    double x_lo_ = 0, x_hi_ = 0;
    double sky_height_ = 0;
    std::array<double, 3> sky_color_{};
    Material sky_mat_;
    Shape ground_;
    std::vector<Shape> shapes_;
    std::vector<Shape> walls_;
    std::vector<std::vector<Shape>> objects_;
};

Homography sensor_perturbation(const SceneConfig& cfg, int frame) {
    std::mt19937_64 rng(mix(cfg.seed, 0x5e5 + static_cast<std::uint64_t>(frame)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double theta = u(rng) * cfg.max_rotation_deg * std::numbers::pi / 180.0;
    const double tx = u(rng) * cfg.max_shift_px, ty = u(rng) * cfg.max_shift_px;
    const double g = u(rng) * cfg.max_perspective, h = u(rng) * cfg.max_perspective;
    const double cx = 0.5 * (cfg.width - 1), cy = 0.5 * (cfg.height - 1);
    const double c = std::cos(theta), s = std::sin(theta);
    const Homography centered({c, -s, 0, s, c, 0, g, h, 1});
    return Homography::translation(cx + tx, cy + ty) * centered * Homography::translation(-cx, -cy);
}

struct Renderer {
    const SceneConfig& cfg;
    const Scene& scene;

    int visible_layer(const std::vector<Homography>& image_to_world, double x, double y) const {
        for (int l = static_cast<int>(image_to_world.size()) - 1; l >= 1; --l) {
            const auto w = image_to_world[l].map(PixelCoord{y, x});
            if (w && scene.covers(l, w->col, w->row)) return l;
        }
        return 0;
    }
};

}  // namespace

GroundTruthBundle gen_sequence(const SceneConfig& cfg) {
    validate(cfg);
    GroundTruthBundle bundle;
    bundle.cfg = cfg;
    const Scene scene(bundle.cfg);
    const Renderer render{bundle.cfg, scene};
    const int w = cfg.width, h = cfg.height;
    const int layers = static_cast<int>(cfg.layer_disparity.size());

    for (int f = 0; f < cfg.frames; ++f) {
        FrameData fd;
        const Homography perturb = sensor_perturbation(cfg, f);
        std::vector<Homography> rgb_to_world, x_to_world;
        for (int l = 0; l < layers; ++l) {
            const double k = scene.depth_factor(l);
            const Homography w2r = Homography::translation(-k * cfg.camera_step_px * f, 0.0);
            const Homography r2x = perturb * Homography::translation(cfg.layer_disparity[l], 0.0);
            fd.world_to_rgb.push_back(w2r);
            fd.rgb_to_x.push_back(r2x);
            fd.world_to_x.push_back(r2x * w2r);
            rgb_to_world.push_back(w2r.inverse());
            x_to_world.push_back((r2x * w2r).inverse());
        }

        fd.rgb = Image(w, h, 3);
        fd.x_gt = Image(w, h, 1);
        fd.x_raw = Image(w, h, 1);
        fd.area_mask = Mask(w, h);
        fd.rgb_layer.assign(static_cast<std::size_t>(w) * h, 0);
        fd.x_layer.assign(static_cast<std::size_t>(w) * h, 0);

        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * w + c;
                const int l = render.visible_layer(rgb_to_world, c, r);
                const auto wp = rgb_to_world[l].map(PixelCoord{double(r), double(c)});
                const Sample s = scene.sample(l, wp->col, wp->row);
                for (int ch = 0; ch < 3; ++ch) fd.rgb.at(r, c, ch) = quantize(s.rgb[ch], 255.0);
                fd.x_gt.at(r, c) = quantize(s.x, 65535.0);
                fd.area_mask.bits[i] = s.homogeneous > 0.5 ? 1 : 0;
                fd.rgb_layer[i] = static_cast<std::uint8_t>(l);

                const int lx = render.visible_layer(x_to_world, c, r);
                const auto wx = x_to_world[lx].map(PixelCoord{double(r), double(c)});
                fd.x_raw.at(r, c) = quantize(scene.sample(lx, wx->col, wx->row).x, 65535.0);
                fd.x_layer[i] = static_cast<std::uint8_t>(lx);
            }
        }
        bundle.frames.push_back(std::move(fd));
    }
    return bundle;
}

namespace {

std::optional<PixelCoord> transfer(const FrameData& src, const FrameData& dst,
                                   const std::vector<Homography>& dst_from_world,
                                   const std::vector<std::uint8_t>& dst_layers, int width, int height, int r,
                                   int c) {
    const std::size_t i = static_cast<std::size_t>(r) * width + c;
    const int l = src.rgb_layer[i];
    const auto world = src.world_to_rgb[l].inverse().map(PixelCoord{double(r), double(c)});
    if (!world) return std::nullopt;
    (void)dst;
    const auto q = dst_from_world[l].map(*world);
    if (!q || q->row < 0.0 || q->col < 0.0 || q->row > height - 1 || q->col > width - 1) return std::nullopt;
    const int r0 = static_cast<int>(std::floor(q->row)), c0 = static_cast<int>(std::floor(q->col));
    const int r1 = std::min(r0 + 1, height - 1), c1 = std::min(c0 + 1, width - 1);
    for (int rr : {r0, r1}) {
        for (int cc : {c0, c1}) {
            if (dst_layers[static_cast<std::size_t>(rr) * width + cc] != l) return std::nullopt;
        }
    }
    return q;
}

}  // namespace

std::optional<PixelCoord> GroundTruthBundle::rgb_to_x(int n, int r, int c, int m) const {
    const FrameData& a = frames.at(static_cast<std::size_t>(n));
    const FrameData& b = frames.at(static_cast<std::size_t>(m));
    return transfer(a, b, b.world_to_x, b.x_layer, cfg.width, cfg.height, r, c);
}

std::optional<PixelCoord> GroundTruthBundle::rgb_to_rgb(int i, int r, int c, int j) const {
    const FrameData& a = frames.at(static_cast<std::size_t>(i));
    const FrameData& b = frames.at(static_cast<std::size_t>(j));
    return transfer(a, b, b.world_to_rgb, b.rgb_layer, cfg.width, cfg.height, r, c);
}

std::vector<std::optional<PixelCoord>> GroundTruthBundle::correspondence_field(int n, int m) const {
    std::vector<std::optional<PixelCoord>> field(static_cast<std::size_t>(cfg.width) * cfg.height);
    for (int r = 0; r < cfg.height; ++r) {
        for (int c = 0; c < cfg.width; ++c) field[static_cast<std::size_t>(r) * cfg.width + c] = rgb_to_x(n, r, c, m);
    }
    return field;
}

double self_consistency_error(const GroundTruthBundle& bundle, int frame) {
    const FrameData& fd = bundle.frames.at(static_cast<std::size_t>(frame));
    double sum = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < bundle.height(); ++r) {
        for (int c = 0; c < bundle.width(); ++c) {
            const auto q = bundle.rgb_to_x(frame, r, c, frame);
            if (!q) continue;
            const auto v = sample_bilinear(fd.x_raw, q->row, q->col);
            sum += std::abs(*v - fd.x_gt.at(r, c));
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

Image add_value_noise(const Image& x, double sigma, std::uint64_t seed) {
    Image out = x;
    if (sigma <= 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out.data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
    return out;
}

matching::MatchSet oracle_match(const GroundTruthBundle& bundle, int rgb_frame, int x_frame,
                                const NoiseModel& noise, int count, std::uint64_t seed, bool avoid_area_mask) {
    validate(noise);
    if (rgb_frame < 0 || x_frame < 0 || rgb_frame >= static_cast<int>(bundle.frames.size()) ||
        x_frame >= static_cast<int>(bundle.frames.size())) {
        throw std::out_of_range("oracle_match: frame index out of range");
    }
    const int w = bundle.width(), h = bundle.height();
    const FrameData& fd = bundle.frames[static_cast<std::size_t>(rgb_frame)];

    std::vector<std::pair<std::size_t, PixelCoord>> candidates;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            if (avoid_area_mask && fd.area_mask[i]) continue;
            if (auto q = bundle.rgb_to_x(rgb_frame, r, c, x_frame)) candidates.emplace_back(i, *q);
        }
    }

    matching::MatchSet ms;
    ms.rgb_frame = rgb_frame;
    ms.x_frame = x_frame;
    std::mt19937_64 rng(mix(mix(seed, static_cast<std::uint64_t>(rgb_frame)), static_cast<std::uint64_t>(x_frame)));
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(count, 0)), candidates.size());
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const bool perfect = noise.position_sigma == 0.0 && noise.outlier_fraction == 0.0;
    const double rho = noise.confidence_fidelity;

    for (std::size_t j = 0; j < k; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, candidates.size() - 1);
        std::swap(candidates[j], candidates[pick(rng)]);
        const auto [idx, gt] = candidates[j];
        matching::Match m;
        m.rgb = {double(idx / static_cast<std::size_t>(w)), double(idx % static_cast<std::size_t>(w))};
        const bool outlier = u01(rng) < noise.outlier_fraction;
        if (outlier) {
            m.x = {u01(rng) * (h - 1), u01(rng) * (w - 1)};
        } else {
            m.x = gt;
            if (noise.position_sigma > 0.0) {
                m.x.row = std::clamp(gt.row + noise.position_sigma * gauss(rng), 0.0, double(h - 1));
                m.x.col = std::clamp(gt.col + noise.position_sigma * gauss(rng), 0.0, double(w - 1));
            }
        }
        const double e = gauss(rng);
        if (perfect) {
            m.conf = 1.0;
        } else {
            const double z = rho * (outlier ? -1.0 : 1.0) + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * e;
            m.conf = 1.0 / (1.0 + std::exp(-4.0 * z));
        }
        ms.matches.push_back(m);
    }
    return ms;
}

std::vector<std::uint8_t> oracle_inliers(const GroundTruthBundle& bundle, const matching::MatchSet& ms,
                                         double tol) {
    std::vector<std::uint8_t> out;
    out.reserve(ms.matches.size());
    for (const auto& m : ms.matches) {
        const auto gt = bundle.rgb_to_x(ms.rgb_frame, matching::round_coord(m.rgb.row),
                                        matching::round_coord(m.rgb.col), ms.x_frame);
        out.push_back(gt && std::hypot(gt->row - m.x.row, gt->col - m.x.col) <= tol ? 1 : 0);
    }
    return out;
}

matching::MatchSet OracleMatcher::match_pair(int rgb_frame, const Image&, int x_frame, const Image&) const {
    return oracle_match(bundle_, rgb_frame, x_frame, noise_, count_, seed_, avoid_);
}

std::optional<double> consistency_metric(std::span<const Image> outputs, const GroundTruthBundle& bundle) {
    if (outputs.size() < 2) return std::nullopt;
    if (outputs.size() > bundle.frames.size()) {
        throw std::invalid_argument("consistency_metric: more outputs than bundle frames");
    }
    double total = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i + 1 < outputs.size(); ++i) {
        const Image& a = outputs[i];
        const Image& b = outputs[i + 1];
        double se = 0.0;
        std::size_t n = 0;
        for (int r = 0; r < bundle.height(); ++r) {
            for (int c = 0; c < bundle.width(); ++c) {
                const auto q = bundle.rgb_to_rgb(static_cast<int>(i + 1), r, c, static_cast<int>(i));
                if (!q) continue;
                const auto v = sample_bilinear(a, q->row, q->col);
                const double d = *v - b.at(r, c);
                se += d * d;
                ++n;
            }
        }
        if (n == 0) continue;
        total += std::sqrt(se / static_cast<double>(n));
        ++pairs;
    }
    if (pairs == 0) return std::nullopt;
    return total / pairs;
}

Corruption corrupt_patches(const Image& x, const fuse::PatchGrid& grid, double fraction, std::uint64_t seed) {
    if (x.channels() != 1) throw std::invalid_argument("corrupt_patches expects a 1-channel image");
    if (x.width() != grid.width || x.height() != grid.height) {
        throw std::invalid_argument("corrupt_patches: grid does not match image");
    }
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("corrupt_patches: fraction outside [0,1]");
    const int p = grid.count();
    Corruption out{x, std::vector<std::uint8_t>(static_cast<std::size_t>(p), 0)};
    const int k = static_cast<int>(std::round(fraction * p));

    // Donor pool: patches with at least median gradient energy.
    std::vector<double> energy(static_cast<std::size_t>(p), 0.0);
    for (int i = 0; i < p; ++i) {
        const fuse::PatchRect rc = grid.rect(i);
        for (int r = rc.row0; r + 1 < rc.row1; ++r) {
            for (int c = rc.col0; c + 1 < rc.col1; ++c) {
                energy[i] += std::abs(x.at(r, c + 1) - x.at(r, c)) + std::abs(x.at(r + 1, c) - x.at(r, c));
            }
        }
    }
    std::vector<double> sorted_energy = energy;
    std::sort(sorted_energy.begin(), sorted_energy.end());
    const double median = sorted_energy[sorted_energy.size() / 2];

    std::mt19937_64 rng(seed);
    std::vector<int> order(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (int j = 0; j < k; ++j) {
        const int dst = order[j];
        out.corrupted[dst] = 1;
        const int dr = dst / grid.cols, dc = dst % grid.cols;
        std::vector<int> donors;
        for (int s = 0; s < p; ++s) {
            const bool far = std::max(std::abs(s / grid.cols - dr), std::abs(s % grid.cols - dc)) >= 2;
            if (far && energy[s] >= median) donors.push_back(s);
        }
        if (donors.empty()) donors.push_back((dst + p / 2) % p);
        const int src = donors[std::uniform_int_distribution<std::size_t>(0, donors.size() - 1)(rng)];
        const fuse::PatchRect rd = grid.rect(dst), rs = grid.rect(src);
        // Transposed copy of the donor's top-left square.
        const int side = std::min(rs.row1 - rs.row0, rs.col1 - rs.col0);
        for (int r = rd.row0; r < rd.row1; ++r) {
            for (int c = rd.col0; c < rd.col1; ++c) {
                const int u = std::min(c - rd.col0, side - 1), v = std::min(r - rd.row0, side - 1);
                out.image.at(r, c) = x.at(rs.row0 + u, rs.col0 + v);
            }
        }
    }
    return out;
}

std::string scene_config_to_json(const SceneConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["width"] = cfg.width;
    j["height"] = cfg.height;
    j["frames"] = cfg.frames;
    j["modality"] = std::string(to_string(cfg.modality));
    j["layer_disparity"] = cfg.layer_disparity;
    j["texture_density"] = cfg.texture_density;
    j["homogeneous_fraction"] = cfg.homogeneous_fraction;
    j["max_rotation_deg"] = cfg.max_rotation_deg;
    j["max_shift_px"] = cfg.max_shift_px;
    j["max_perspective"] = cfg.max_perspective;
    j["camera_step_px"] = cfg.camera_step_px;
    j["foreground_objects"] = cfg.foreground_objects;
    return j.dump(2);
}

SceneConfig scene_config_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SceneConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.width = j.value("width", cfg.width);
    cfg.height = j.value("height", cfg.height);
    cfg.frames = j.value("frames", cfg.frames);
    if (j.contains("modality")) cfg.modality = parse_modality(j["modality"].get<std::string>());
    cfg.layer_disparity = j.value("layer_disparity", cfg.layer_disparity);
    cfg.texture_density = j.value("texture_density", cfg.texture_density);
    cfg.homogeneous_fraction = j.value("homogeneous_fraction", cfg.homogeneous_fraction);
    cfg.max_rotation_deg = j.value("max_rotation_deg", cfg.max_rotation_deg);
    cfg.max_shift_px = j.value("max_shift_px", cfg.max_shift_px);
    cfg.max_perspective = j.value("max_perspective", cfg.max_perspective);
    cfg.camera_step_px = j.value("camera_step_px", cfg.camera_step_px);
    cfg.foreground_objects = j.value("foreground_objects", cfg.foreground_objects);
    validate(cfg);
    return cfg;
}

void save_bundle(const GroundTruthBundle& bundle, const fs::path& dir) {
    for (const char* sub : {"rgb", "x_gt", "x_raw", "masks", "gt"}) fs::create_directories(dir / sub);
    char name[32];
    for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
        std::snprintf(name, sizeof(name), "%04zu.png", f);
        const FrameData& fd = bundle.frames[f];
        save_image(fd.rgb, dir / "rgb" / name, {BitDepth::eight, std::nullopt});
        save_image(fd.x_gt, dir / "x_gt" / name, {BitDepth::sixteen, std::nullopt});
        save_image(fd.x_raw, dir / "x_raw" / name, {BitDepth::sixteen, std::nullopt});
        save_mask(fd.area_mask, dir / "masks" / name);
    }
    std::ofstream hom(dir / "gt" / "homographies.txt");
    hom << "# frame layer h00 h01 h02 h10 h11 h12 h20 h21 h22 (RGB -> X, x=col y=row)\n";
    hom.precision(17);
    for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
        for (std::size_t l = 0; l < bundle.frames[f].rgb_to_x.size(); ++l) {
            hom << f << ' ' << l;
            for (double v : bundle.frames[f].rgb_to_x[l].matrix()) hom << ' ' << v;
            hom << '\n';
        }
    }
    std::ofstream meta(dir / "gt" / "meta");
    meta << scene_config_to_json(bundle.cfg) << '\n';
    if (!hom || !meta) throw std::runtime_error("failed writing bundle metadata under '" + dir.string() + "'");
}

GroundTruthBundle load_bundle(const fs::path& dir) {
    std::ifstream meta(dir / "gt" / "meta");
    if (!meta) throw std::runtime_error("bundle '" + dir.string() + "' has no gt/meta");
    std::stringstream ss;
    ss << meta.rdbuf();
    return gen_sequence(scene_config_from_json(ss.str()));
}

}  // namespace rgbx::synth
