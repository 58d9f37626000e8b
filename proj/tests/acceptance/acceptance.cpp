// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 1 if any
// criterion fails, except those listed with --known-gaps (comma separated ids),
// which still print FAIL but do not affect the status.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rgbx/densify.hpp"
#include "rgbx/fuse_filter.hpp"
#include "rgbx/hash.hpp"
#include "rgbx/homography.hpp"
#include "rgbx/matching.hpp"
#include "rgbx/metrics.hpp"
#include "rgbx/pipeline.hpp"
#include "rgbx/synthbench.hpp"
#include "test_util.hpp"

using namespace rgbx;
namespace fs = std::filesystem;

namespace {

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int g_failed = 0;
int g_known = 0;
std::set<int> g_known_gaps;

void report(int id, const char* name, const Outcome& o) {
    const bool known = g_known_gaps.count(id) != 0;
    std::printf("%s [%02d] %s: %s%s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                known ? (o.pass ? " [listed as known gap, now passing]" : " [known gap]") : "");
    std::fflush(stdout);
    if (!o.pass) ++(known ? g_known : g_failed);
}

void run_criterion(int id, const char* name, const std::function<Outcome()>& fn) {
    try {
        report(id, name, fn());
    } catch (const std::exception& e) {
        report(id, name, {false, std::string("exception: ") + e.what()});
    }
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

synth::NoiseModel standard_noise() {
    synth::NoiseModel nm;
    nm.confidence_fidelity = 0.8;
    nm.outlier_fraction = 0.3;
    return nm;
}

synth::SceneConfig standard_scene(std::uint64_t seed) {
    synth::SceneConfig sc;
    sc.seed = seed;
    sc.width = sc.height = 256;
    sc.frames = 10;
    return sc;
}

PipelineConfig standard_config() {
    PipelineConfig cfg;
    cfg.backend = Backend::oracle;
    cfg.oracle_noise = standard_noise();
    return cfg;
}

std::vector<pipeline::FrameResult> run_oracle(const PipelineConfig& cfg, const synth::GroundTruthBundle& b,
                                              std::uint64_t match_seed) {
    const auto seq = pipeline::sequence_from_bundle(b);
    synth::OracleMatcher om(b, cfg.oracle_noise, cfg.oracle_matches, match_seed, cfg.oracle_avoid_area);
    return pipeline::run_frames(cfg, seq, om);
}

double mean_psnr(const std::vector<pipeline::FrameResult>& rs, const synth::GroundTruthBundle& b) {
    double s = 0.0;
    for (const auto& r : rs) s += metrics::psnr(r.output, b.frames[static_cast<std::size_t>(r.frame)].x_gt);
    return s / static_cast<double>(rs.size());
}

// Shared per-seed runs of the standard noisy setting.
struct SeedRuns {
    synth::GroundTruthBundle bundle;
    std::vector<pipeline::FrameResult> full;
};

std::vector<SeedRuns>& standard_runs() {
    static std::vector<SeedRuns> runs = [] {
        std::vector<SeedRuns> out;
        for (std::uint64_t seed : kSeeds) {
            SeedRuns s{synth::gen_sequence(standard_scene(seed)), {}};
            s.full = run_oracle(standard_config(), s.bundle, seed);
            out.push_back(std::move(s));
        }
        return out;
    }();
    return runs;
}

matching::MatchSet random_set(std::mt19937_64& rng, int target, int frame, int w, int h, int count) {
    std::uniform_real_distribution<double> ur(0.0, h - 1.0), uc(0.0, w - 1.0), u(0.0, 1.0);
    matching::MatchSet ms;
    ms.rgb_frame = target;
    ms.x_frame = frame;
    for (int i = 0; i < count; ++i) ms.matches.push_back({{ur(rng), uc(rng)}, {ur(rng), uc(rng)}, u(rng)});
    return ms;
}

SparseMap random_sparse(int w, int h, double density, std::uint64_t seed, ConfidenceMap& conf) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SparseMap s(w, h);
    conf = ConfidenceMap(w, h);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (u(rng) < density) {
            s.set(i, u(rng), 1);
            conf.conf[i] = 0.05 + 0.95 * u(rng);
        }
    }
    if (s.known_count() == 0) {
        s.set(0, 0.5, 1);
        conf.conf[0] = 1.0;
    }
    return s;
}

// 1. Accumulation vs brute force.
Outcome accumulation_oracle() {
    const auto t0 = clk::now();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(8, 96), nsets(1, 7);
    std::size_t mismatches = 0, total_matches = 0, max_matches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int w = dim(rng), h = dim(rng), k = nsets(rng);
        const int per_set = std::uniform_int_distribution<int>(0, 10000 / k)(rng);
        std::vector<matching::MatchSet> sets;
        std::vector<Image> xs;
        for (int f = 0; f < k; ++f) {
            sets.push_back(random_set(rng, 0, f, w, h, per_set));
            xs.push_back(test::random_image(w, h, 1, 1000 + trial * 10 + f));
        }
        total_matches += static_cast<std::size_t>(per_set) * k;
        max_matches = std::max(max_matches, static_cast<std::size_t>(per_set) * k);
        const auto got = matching::accumulate_matches(sets, xs, 0, w, h);
        const auto ref = oracle::accumulate(sets, xs, w, h);
        for (std::size_t i = 0; i < ref.value.size(); ++i) {
            mismatches += got.sparse.values[i] != ref.value[i] || got.sparse.counts[i] != ref.count[i] ||
                          got.conf.conf[i] != ref.conf[i];
        }
    }
    const double t = seconds_since(t0);
    return {mismatches == 0 && t < 5.0,
            fmt("50 collections, %zu matches (max %zu), %zu mismatching pixels (need 0), %.2f s (need < 5)",
                total_matches, max_matches, mismatches, t)};
}

// 2. Anchoring and degeneration to the certainty-only update.
Outcome anchoring() {
    std::size_t anchor_bad = 0, ref_bad = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ConfidenceMap conf;
        const SparseMap s = random_sparse(16, 16, 0.2, 500 + seed, conf);
        densify::DensifyConfig cfg;
        cfg.iterations = 40;
        const auto aff = densify::compute_affinities(test::random_image(16, 16, 3, 600 + seed), cfg);
        const Image l0 = *densify::init_dense(s);
        ConfidenceMap ones(16, 16);
        for (std::size_t i = 0; i < s.size(); ++i) ones.conf[i] = s.known(i) ? 1.0 : 0.0;

        const auto got = densify::propagate(l0, aff, s, densify::certainty_map(s), ones, cfg);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s.known(i)) anchor_bad += got.output.data()[i] != s.values[i];
        }
        const auto ref = oracle::propagate_certainty_only(std::vector<double>(l0.data().begin(), l0.data().end()), aff,
                                                          s, cfg.iterations, cfg.tol);
        for (std::size_t i = 0; i < ref.size(); ++i) ref_bad += got.output.data()[i] != ref[i];
    }
    return {anchor_bad == 0 && ref_bad == 0,
            fmt("20 random 16x16 cases: %zu known pixels off their anchor, %zu pixels differing from the "
                "certainty-only reference (need 0 and 0, bitwise)",
                anchor_bad, ref_bad)};
}

// 3. Confidence-aware vs C_m = 1.
Outcome confidence_benefit() {
    const auto t0 = clk::now();
    double full = 0.0, flat = 0.0;
    PipelineConfig off = standard_config();
    off.densify.confidence_aware = false;
    for (auto& s : standard_runs()) {
        full += mean_psnr(s.full, s.bundle);
        flat += mean_psnr(run_oracle(off, s.bundle, s.bundle.cfg.seed), s.bundle);
    }
    full /= std::size(kSeeds);
    flat /= std::size(kSeeds);
    const double t = seconds_since(t0);
    return {full >= flat + 0.3 && t < 300.0,
            fmt("PSNR full %.2f dB vs C_m=1 %.2f dB, gain %+.2f dB (need >= +0.30), %.0f s (need < 300)", full, flat,
                full - flat, t)};
}

// 4. Multi-level fusion vs single levels.
Outcome multilevel_benefit() {
    const PipelineConfig cfg = standard_config();
    const std::size_t k = cfg.densify.thresholds.size();
    std::vector<double> single(k, 0.0);
    double fused = 0.0;
    std::size_t n = 0;
    for (auto& s : standard_runs()) {
        for (const auto& r : s.full) {
            if (!r.fused || r.levels.size() != k) throw std::runtime_error("frame without every level");
            const Image& gt = s.bundle.frames[static_cast<std::size_t>(r.frame)].x_gt;
            const Image& rgb = s.bundle.frames[static_cast<std::size_t>(r.frame)].rgb;
            fused += metrics::psnr(*r.fused, gt);
            for (std::size_t l = 0; l < k; ++l) single[l] += metrics::psnr(fuse::enhance(r.levels[l], rgb, cfg.enhance), gt);
            ++n;
        }
    }
    fused /= double(n);
    for (double& v : single) v /= double(n);
    const double best = *std::max_element(single.begin(), single.end());
    std::string levels;
    for (std::size_t l = 0; l < k; ++l) levels += fmt(" d=%.2f:%.2f", cfg.densify.thresholds[l], single[l]);
    return {fused >= best - 0.2 && fused >= single[0] + 0.2,
            fmt("fused %.2f dB; single%s; vs best %+.2f (need >= -0.20), vs lowest threshold %+.2f (need >= +0.20)",
                fused, levels.c_str(), fused - best, fused - single[0])};
}

// 5. Self-matching filter on corruption-injected fused outputs.
Outcome filter_benefit() {
    const PipelineConfig cfg = standard_config();
    double gain = 0.0;
    std::size_t tp = 0, corrupted = 0, fp = 0, clean = 0, n = 0;
    for (auto& s : standard_runs()) {
        for (const auto& r : s.full) {
            const auto& fr = s.bundle.frames[static_cast<std::size_t>(r.frame)];
            const auto grid = fuse::PatchGrid::make(fr.rgb.width(), fr.rgb.height(), cfg.patch);
            const auto cor = synth::corrupt_patches(*r.fused, grid, 0.1, s.bundle.cfg.seed * 100 + r.frame);
            const auto aff = densify::compute_affinities(fr.rgb, cfg.densify);
            const auto ref = pipeline::self_match_refine(cfg, aff, fr.rgb, cor.image);
            if (!ref.fine) throw std::runtime_error("filter rejected everything");
            gain += metrics::psnr(*ref.fine, fr.x_gt) - metrics::psnr(cor.image, fr.x_gt);
            for (int p = 0; p < grid.count(); ++p) {
                if (cor.corrupted[p]) {
                    ++corrupted;
                    tp += ref.filter.rejected_patches[p];
                } else {
                    ++clean;
                    fp += ref.filter.rejected_patches[p];
                }
            }
            ++n;
        }
    }
    gain /= double(n);
    const double recall = double(tp) / double(corrupted), fr = double(fp) / double(clean);
    return {gain >= 0.5 && recall >= 0.70 && fr <= 0.10,
            fmt("PSNR gain %+.2f dB (need >= +0.50), recall %.3f = %zu/%zu (need >= 0.700), false rejection %.3f = "
                "%zu/%zu (need <= 0.100)",
                gain, recall, tp, corrupted, fr, fp, clean)};
}

// 6. Area sampling on a scene with large X-flat regions and no matches there.
Outcome area_sampling_benefit() {
    double on = 0.0, off = 0.0, coverage = 1.0;
    for (std::uint64_t seed : kSeeds) {
        synth::SceneConfig sc = standard_scene(seed);
        sc.homogeneous_fraction = 0.45;
        const auto b = synth::gen_sequence(sc);
        for (const auto& f : b.frames) {
            coverage = std::min(coverage, double(f.area_mask.count()) / double(f.area_mask.bits.size()));
        }
        PipelineConfig cfg = standard_config();
        cfg.oracle_avoid_area = true;
        on += mean_psnr(run_oracle(cfg, b, seed), b);
        cfg.area_sampling = false;
        off += mean_psnr(run_oracle(cfg, b, seed), b);
    }
    on /= std::size(kSeeds);
    off /= std::size(kSeeds);
    return {coverage >= 0.4 && on >= off + 1.0,
            fmt("min homogeneous coverage %.2f (need >= 0.40); PSNR with %.2f dB vs without %.2f dB, gain %+.2f dB "
                "(need >= +1.00)",
                coverage, on, off, on - off)};
}

// 7. Foreground error of the single-homography warp vs the pipeline.
Outcome homography_failure_mode() {
    constexpr int kBorder = 16;
    double warp_se = 0.0, pipe_se = 0.0, fused_se = 0.0;
    std::size_t n = 0;
    for (auto& s : standard_runs()) {
        for (const auto& r : s.full) {
            const auto& fr = s.bundle.frames[static_cast<std::size_t>(r.frame)];
            if (!r.warped) throw std::runtime_error("no warped baseline");
            const int w = fr.rgb.width(), h = fr.rgb.height();
            for (std::size_t i = 0; i < fr.rgb_layer.size(); ++i) {
                const int row = static_cast<int>(i) / w, col = static_cast<int>(i) % w;
                // Border band excluded: the warp leaves out-of-view pixels empty.
                if (fr.rgb_layer[i] == 0 || row < kBorder || col < kBorder || row >= h - kBorder ||
                    col >= w - kBorder) {
                    continue;
                }
                const double g = fr.x_gt.data()[i];
                warp_se += (r.warped->data()[i] - g) * (r.warped->data()[i] - g);
                pipe_se += (r.output.data()[i] - g) * (r.output.data()[i] - g);
                fused_se += (r.fused->data()[i] - g) * (r.fused->data()[i] - g);
                ++n;
            }
        }
    }
    const double warp = std::sqrt(warp_se / double(n)), pipe = std::sqrt(pipe_se / double(n));
    const double fused = std::sqrt(fused_se / double(n));
    return {warp >= 3.0 * pipe,
            fmt("foreground RMSE warp %.4f vs pipeline %.4f, ratio %.2f (need >= 3.00); fused stage %.4f, ratio %.2f",
                warp, pipe, warp / pipe, fused, warp / fused)};
}

// 8. RANSAC under heavy contamination.
Outcome ransac_robustness() {
    double worst = 0.0, sum = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        synth::SceneConfig sc = standard_scene(100 + trial);
        sc.frames = 1;
        sc.layer_disparity = {0.0};
        const auto b = synth::gen_sequence(sc);
        synth::NoiseModel nm;
        nm.outlier_fraction = 0.4;
        nm.position_sigma = 0.5;
        nm.confidence_fidelity = 0.0;
        const auto ms = synth::oracle_match(b, 0, 0, nm, 200, 7 + trial);
        matching::RansacOptions ro;
        ro.seed = static_cast<std::uint64_t>(trial);
        const auto fit = matching::estimate_homography(ms, ro);
        if (!fit) return {false, fmt("trial %d: no homography", trial)};
        const auto inl = synth::oracle_inliers(b, ms);
        double e = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < ms.matches.size(); ++i) {
            if (!inl[i]) continue;
            const auto& m = ms.matches[i];
            const auto gt = b.rgb_to_x(0, int(m.rgb.row), int(m.rgb.col), 0);
            const auto p = fit->h.map(*gt);
            e += std::hypot(p->row - m.rgb.row, p->col - m.rgb.col);
            ++n;
        }
        e /= double(n);
        worst = std::max(worst, e);
        sum += e;
    }
    return {sum / 20.0 <= 1.0 && worst <= 1.0,
            fmt("20 trials, 200 matches, 40%% outliers, sigma 0.5 px: mean inlier reprojection error %.3f px, worst "
                "trial %.3f px (need <= 1.000)",
                sum / 20.0, worst)};
}

// 9. Similarity and self-match score.
Outcome similarity_exactness() {
    const auto b = synth::gen_sequence(standard_scene(9));
    double worst = 0.0;
    for (int f = 0; f < 3; ++f) {
        const auto& fr = b.frames[static_cast<std::size_t>(f)];
        const auto grid = fuse::PatchGrid::make(256, 256, 32 >> f);
        const auto a = fuse::patch_descriptors(fr.rgb, grid), x = fuse::patch_descriptors(fr.x_gt, grid);
        const auto got = fuse::similarity_matrix(a, x, 0.1);
        const auto ref = oracle::similarity(a, x, 0.1);
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got.a[i] - ref[i]));
    }
    fuse::SimilarityMatrix eye{4, 0.1, std::vector<double>(16, 0.0)};
    for (int i = 0; i < 4; ++i) eye.a[static_cast<std::size_t>(i) * 5] = 1.0;
    const fuse::SimilarityMatrix ones{2, 0.1, std::vector<double>(4, 1.0)};
    const double s_eye = *fuse::self_match_score(eye, 0.1), s_ones = *fuse::self_match_score(ones, 0.1);
    return {worst <= 1e-9 && s_eye == -2.0 && s_ones == -0.9,
            fmt("max |A - triple loop| %.2e (need <= 1e-9); score(I_4) = %.17g (need -2), score(ones 2x2) = %.17g "
                "(need -0.9)",
                worst, s_eye, s_ones)};
}

// 10. Quantile filter vs a sort-based brute force.
Outcome filter_oracle() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> side(1, 100);
    std::size_t bad = 0, max_p = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int rows = side(rng), cols = side(rng);
        if (trial == 0) rows = cols = 100;
        const int patch = 4;
        const auto grid = fuse::PatchGrid::make(cols * patch, rows * patch, patch);
        const std::size_t p = static_cast<std::size_t>(grid.count());
        max_p = std::max(max_p, p);
        std::vector<double> d(p);
        std::normal_distribution<double> g(trial % 7 == 3 ? -5.0 : 5.0, 2.0);
        for (double& v : d) v = g(rng);
        if (trial % 5 == 1) {
            for (double& v : d) v = std::round(v);  // ties
        }
        const Image xd = test::random_image(cols * patch, rows * patch, 1, 900 + trial);
        const auto got = fuse::concentration_and_filter(xd, d, grid);
        const auto ref = oracle::filter(d);
        bad += got.q != ref.q || got.theta != ref.theta || got.rejected_patches != ref.rejected;
    }
    return {bad == 0 && max_p == 10000,
            fmt("100 diagonals, P up to %zu: %zu disagreements in q, theta or rejection set (need 0)", max_p, bad)};
}

// 11. Determinism of `run`.
Outcome determinism() {
    test::TempDir dir("acceptance_run");
    synth::SceneConfig sc = standard_scene(11);
    sc.width = sc.height = 128;
    sc.frames = 6;
    std::string detail;
    bool ok = true;
#ifdef RGBX_CLI_PATH
    const std::string cli = RGBX_CLI_PATH;
    auto sh = [](const std::string& cmd) {
        if (std::system((cmd + " > /dev/null 2>&1").c_str()) != 0) throw std::runtime_error("command failed: " + cmd);
    };
    sh(cli + " synth --out " + (dir / "in").string() + " --seed 11 --frames 6 --width 128 --height 128");
    for (const char* backend : {"oracle", "classical"}) {
        const std::string base = cli + " run --input " + (dir / "in").string() + " --backend " + backend + " --seed 3";
        sh(base + " --output " + (dir / (std::string(backend) + "_a")).string());
        sh(base + " --workers 3 --output " + (dir / (std::string(backend) + "_b")).string());
        const auto a = pipeline::load_manifest(dir / (std::string(backend) + "_a") / "manifest.json");
        const auto b = pipeline::load_manifest(dir / (std::string(backend) + "_b") / "manifest.json");
#else
    synth::save_bundle(synth::gen_sequence(sc), dir / "in");
    for (const char* backend : {"oracle", "classical"}) {
        PipelineConfig cfg;
        cfg.input_dir = dir / "in";
        cfg.backend = parse_backend(backend);
        cfg.seed = 3;
        cfg.output_dir = dir / (std::string(backend) + "_a");
        const auto a = pipeline::run_pipeline(cfg);
        cfg.workers = 3;
        cfg.output_dir = dir / (std::string(backend) + "_b");
        const auto b = pipeline::run_pipeline(cfg);
#endif
        bool same = a.combined_sha256 == b.combined_sha256 && !a.combined_sha256.empty() &&
                    a.frames.size() == b.frames.size();
        for (std::size_t i = 0; same && i < a.frames.size(); ++i) {
            same = a.frames[i].sha256 == b.frames[i].sha256 && a.frames[i].sha256.size() == 64;
            const fs::path out = dir / (std::string(backend) + "_a") / a.frames[i].output;
            same = same && sha256_file(out) == a.frames[i].sha256;
        }
        ok = ok && same;
        detail += fmt("%s: %s %.12s... ", backend, same ? "identical" : "DIFFERENT", a.combined_sha256.c_str());
    }
    return {ok, detail + "(two runs each, 1 vs 3 workers; manifest hashes match files)"};
}

// 12. Multi-view consistency vs per-frame homography warps.
Outcome consistency_direction() {
    std::string per_seed;
    bool ok = true;
    for (auto& s : standard_runs()) {
        std::vector<Image> outs, warps;
        for (const auto& r : s.full) {
            outs.push_back(r.output);
            warps.push_back(*r.warped);
        }
        const double c_pipe = *synth::consistency_metric(outs, s.bundle);
        const double c_warp = *synth::consistency_metric(warps, s.bundle);
        ok = ok && c_pipe <= c_warp;
        per_seed += fmt(" %.4f/%.4f", c_pipe, c_warp);
    }
    return {ok, "pipeline/warp per seed:" + per_seed + " (need pipeline <= warp for every seed)"};
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--known-gaps" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string tok;
            while (std::getline(ss, tok, ',')) g_known_gaps.insert(std::stoi(tok));
        } else {
            std::fprintf(stderr, "usage: %s [--known-gaps ID[,ID...]]\n", argv[0]);
            return 2;
        }
    }
    const auto t0 = clk::now();
    run_criterion(1, "accumulation matches brute force", accumulation_oracle);
    run_criterion(2, "anchoring and certainty-only degeneration", anchoring);
    run_criterion(9, "similarity and self-match score exactness", similarity_exactness);
    run_criterion(10, "quantile filter matches brute force", filter_oracle);
    run_criterion(8, "RANSAC robustness", ransac_robustness);
    run_criterion(3, "confidence-aware densification benefit", confidence_benefit);
    run_criterion(4, "multi-level fusion benefit", multilevel_benefit);
    run_criterion(5, "self-matching filter benefit", filter_benefit);
    run_criterion(6, "area sampling necessity", area_sampling_benefit);
    run_criterion(7, "single-homography foreground failure", homography_failure_mode);
    run_criterion(12, "multi-view consistency direction", consistency_direction);
    run_criterion(11, "run determinism", determinism);
    std::printf("%d of 12 criteria failed (%d of them known gaps), %.0f s\n", g_failed + g_known, g_known,
                seconds_since(t0));
    return g_failed == 0 ? 0 : 1;
}
