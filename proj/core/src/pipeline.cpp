#include "rgbx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "rgbx/classical_matcher.hpp"
#include "rgbx/hash.hpp"
#include "rgbx/image_io.hpp"
#include "rgbx/metrics.hpp"
#include "rgbx/sampling.hpp"

namespace rgbx::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_raster(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".png" || ext == ".pgm";
}

std::vector<std::string> list_rasters(const fs::path& dir) {
    std::vector<std::string> names;
    if (!fs::is_directory(dir)) return names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_raster(e.path())) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

std::string png_name(const std::string& name) { return fs::path(name).replace_extension(".png").string(); }

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

Sequence load_sequence(const fs::path& dir) {
    Sequence seq;
    const fs::path x_dir = fs::is_directory(dir / "x_raw") ? dir / "x_raw" : dir / "x";
    for (const std::string& name : list_rasters(dir / "rgb")) {
        seq.names.push_back(name);
        seq.rgb.push_back(load_image(dir / "rgb" / name));
        const fs::path xp = x_dir / name;
        seq.x.push_back(fs::exists(xp) ? std::optional<Image>(load_image(xp)) : std::nullopt);
        const fs::path mp = dir / "masks" / name;
        seq.masks.push_back(fs::exists(mp) ? std::optional<Mask>(load_mask(mp)) : std::nullopt);
    }
    return seq;
}

Sequence sequence_from_bundle(const synth::GroundTruthBundle& bundle, bool with_masks) {
    Sequence seq;
    char name[32];
    for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
        std::snprintf(name, sizeof(name), "%04zu.png", f);
        seq.names.emplace_back(name);
        seq.rgb.push_back(bundle.frames[f].rgb);
        seq.x.emplace_back(bundle.frames[f].x_raw);
        seq.masks.push_back(with_masks ? std::optional<Mask>(bundle.frames[f].area_mask) : std::nullopt);
    }
    return seq;
}

std::vector<int> frame_window(int n, int total, int window) {
    std::vector<int> out;
    const int half = window / 2;
    for (int m = std::max(0, n - half); m <= std::min(total - 1, n + half); ++m) out.push_back(m);
    return out;
}

std::uint64_t frame_seed(std::uint64_t seed, int frame, std::uint64_t stage) {
    auto mixer = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    return mixer(mixer(seed ^ mixer(stage)) + static_cast<std::uint64_t>(frame));
}

FrontEnd front_end(const PipelineConfig& cfg, const Sequence& seq, const matching::MatcherBackend& backend,
                   int n) {
    FrontEnd fe;
    const Image& rgb = seq.rgb.at(static_cast<std::size_t>(n));
    const int w = rgb.width(), h = rgb.height();
    const auto window = frame_window(n, seq.size(), cfg.window);
    if (static_cast<int>(window.size()) < cfg.window) {
        fe.warnings.push_back("window shrunk to " + std::to_string(window.size()) + " frames at sequence boundary");
    }

    std::vector<Image> xs;
    for (int m : window) {
        const auto& x = seq.x[static_cast<std::size_t>(m)];
        if (!x) {
            fe.warnings.push_back("X frame " + seq.names[static_cast<std::size_t>(m)] + " missing; window shrunk");
            continue;
        }
        auto ms = matching::match_pair(backend, n, rgb, m, *x);
        if (ms.warning) fe.warnings.push_back("matcher warning for X frame " + std::to_string(m));
        fe.match_count += ms.matches.size();
        fe.sets.push_back(std::move(ms));
        xs.push_back(*x);
    }
    auto acc = matching::accumulate_matches(fe.sets, xs, n, w, h);
    fe.accumulated = acc.sparse.known_count();
    fe.sparse = std::move(acc.sparse);
    fe.conf = std::move(acc.conf);

    const auto& xn = seq.x[static_cast<std::size_t>(n)];
    if (xn) {
        matching::Homography hmg;
        for (const auto& ms : fe.sets) {
            if (ms.x_frame != n) continue;
            matching::RansacOptions ro = cfg.ransac;
            ro.seed = frame_seed(cfg.seed, n, 1);
            fe.homography = matching::estimate_homography(ms, ro);
        }
        if (fe.homography) {
            hmg = fe.homography->h;
        } else {
            fe.warnings.push_back("homography estimation failed; identity warp");
        }
        fe.warped = matching::warp_image(*xn, hmg, w, h);
    }

    if (cfg.area_sampling) {
        const auto& mask = seq.masks[static_cast<std::size_t>(n)];
        if (!mask) {
            fe.warnings.push_back("no area mask; area sampling skipped");
        } else if (!fe.warped) {
            fe.warnings.push_back("no warped X; area sampling skipped");
        } else {
            sampling::AreaSampleConfig ac = cfg.area;
            ac.seed = frame_seed(cfg.seed, n, 2);
            auto res = sampling::area_sample(fe.sparse, fe.conf, fe.warped->image, fe.warped->validity, *mask, ac);
            fe.area_sampled = res.sampled;
            fe.sparse = std::move(res.sparse);
            fe.conf = std::move(res.conf);
        }
    }
    return fe;
}

Fusion densify_and_fuse(const PipelineConfig& cfg, const densify::AffinityField& aff, const Image& rgb,
                        const SparseMap& sparse, const ConfidenceMap& conf) {
    Fusion f;
    f.levels = densify::densify_multilevel(aff, sparse, conf, cfg.densify);
    std::vector<Image> enhanced;
    for (const auto& level : f.levels.levels) enhanced.push_back(fuse::enhance(level.dense, rgb, cfg.enhance));
    f.fused = fuse::fuse_levels(enhanced);
    return f;
}

Refinement self_match_refine(const PipelineConfig& cfg, const densify::AffinityField& aff, const Image& rgb,
                             const Image& xd) {
    Refinement r;
    const auto grid = fuse::PatchGrid::make(rgb.width(), rgb.height(), cfg.patch);
    const auto a = fuse::similarity_matrix(fuse::patch_descriptors(rgb, grid, cfg.descriptors),
                                           fuse::patch_descriptors(xd, grid, cfg.descriptors), cfg.tau);
    r.score_before = fuse::self_match_score(a, cfg.lambda);
    r.filter = fuse::concentration_and_filter(xd, a, grid);
    densify::DensifyConfig dc = cfg.densify;
    dc.thresholds = {0.0};
    r.fine = fuse::fine_densify(aff, r.filter.sparse, r.filter.conf, dc);
    return r;
}

std::string_view to_string(FrameStatus s) {
    switch (s) {
    case FrameStatus::ok: return "ok";
    case FrameStatus::fallback: return "fallback";
    case FrameStatus::failed: return "failed";
    }
    return "failed";
}

std::string_view to_string(OutputStage s) {
    switch (s) {
    case OutputStage::fine: return "fine";
    case OutputStage::fused: return "fused";
    case OutputStage::warped: return "warped";
    case OutputStage::none: return "none";
    }
    return "none";
}

namespace {

FrameStatus parse_status(const std::string& s) {
    if (s == "ok") return FrameStatus::ok;
    if (s == "fallback") return FrameStatus::fallback;
    if (s == "failed") return FrameStatus::failed;
    throw std::invalid_argument("unknown frame status '" + s + "'");
}

OutputStage parse_stage(const std::string& s) {
    if (s == "fine") return OutputStage::fine;
    if (s == "fused") return OutputStage::fused;
    if (s == "warped") return OutputStage::warped;
    if (s == "none") return OutputStage::none;
    throw std::invalid_argument("unknown output stage '" + s + "'");
}

std::optional<double> output_score(const PipelineConfig& cfg, const Image& rgb, const Image& out) {
    const auto grid = fuse::PatchGrid::make(rgb.width(), rgb.height(), cfg.patch);
    const auto a = fuse::similarity_matrix(fuse::patch_descriptors(rgb, grid, cfg.descriptors),
                                           fuse::patch_descriptors(out, grid, cfg.descriptors), cfg.tau);
    return fuse::self_match_score(a, cfg.lambda);
}

}  // namespace

FrameResult process_frame(const PipelineConfig& cfg, const Sequence& seq, const matching::MatcherBackend& backend,
                          int n) {
    FrameResult fr;
    fr.frame = n;
    fr.name = seq.names.at(static_cast<std::size_t>(n));
    const Image& rgb = seq.rgb[static_cast<std::size_t>(n)];
    try {
        FrontEnd fe = front_end(cfg, seq, backend, n);
        fr.warnings = std::move(fe.warnings);
        fr.matches = fe.match_count;
        fr.accumulated = fe.accumulated;
        fr.area_sampled = fe.area_sampled;
        fr.homography_ok = fe.homography.has_value();
        fr.homography_inliers = fe.homography ? fe.homography->inlier_count : 0;
        if (fe.warped) fr.warped = fe.warped->image;

        const auto aff = densify::compute_affinities(rgb, cfg.densify);
        std::optional<Fusion> fusion;
        try {
            fusion = densify_and_fuse(cfg, aff, rgb, fe.sparse, fe.conf);
        } catch (const densify::DensifyError& e) {
            fr.warnings.push_back(e.what());
        }

        if (!fusion) {
            if (fr.warped) {
                fr.warnings.push_back("falling back to homography-warped X");
                fr.output = *fr.warped;
                fr.status = FrameStatus::fallback;
                fr.stage = OutputStage::warped;
            } else {
                fr.warnings.push_back("no usable output");
                fr.status = FrameStatus::failed;
            }
            return fr;
        }

        fr.omitted_levels = fusion->levels.omitted;
        for (double d : fr.omitted_levels) fr.warnings.push_back("level " + format_double(d) + " omitted (no points)");
        for (auto& level : fusion->levels.levels) {
            fr.level_thresholds.push_back(level.threshold);
            fr.levels.push_back(std::move(level.dense));
        }
        fr.fused = fusion->fused;

        if (!cfg.self_match_filter) {
            fr.output = fusion->fused;
            fr.status = FrameStatus::ok;
            fr.stage = OutputStage::fused;
        } else {
            Refinement ref = self_match_refine(cfg, aff, rgb, fusion->fused);
            fr.q = ref.filter.q;
            fr.theta = ref.filter.theta;
            fr.rejected_patches = ref.filter.rejected_count;
            fr.self_match_degenerate = ref.filter.degenerate;
            if (ref.filter.degenerate) fr.warnings.push_back("self-match degenerate (Q99 <= 0)");
            fr.score_before = ref.score_before;
            fr.rejected = std::move(ref.filter.rejected);
            if (ref.fine) {
                fr.output = std::move(*ref.fine);
                fr.status = FrameStatus::ok;
                fr.stage = OutputStage::fine;
            } else {
                fr.warnings.push_back("filter rejected every patch; falling back to fused X");
                fr.output = fusion->fused;
                fr.status = FrameStatus::fallback;
                fr.stage = OutputStage::fused;
            }
        }
        fr.score_after = output_score(cfg, rgb, fr.output);
    } catch (const std::exception& e) {
        fr.warnings.push_back(std::string("frame failed: ") + e.what());
        if (fr.warped) {
            fr.output = *fr.warped;
            fr.status = FrameStatus::fallback;
            fr.stage = OutputStage::warped;
        } else {
            fr.status = FrameStatus::failed;
            fr.stage = OutputStage::none;
        }
    }
    return fr;
}

std::vector<FrameResult> run_frames(const PipelineConfig& cfg, const Sequence& seq,
                                    const matching::MatcherBackend& backend) {
    std::vector<FrameResult> results(static_cast<std::size_t>(seq.size()));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int n = next++; n < seq.size(); n = next++) {
            results[static_cast<std::size_t>(n)] = process_frame(cfg, seq, backend, n);
        }
    };
    const int threads = std::min(cfg.workers, std::max(1, seq.size()));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return results;
}

BackendHandle make_backend(const PipelineConfig& cfg) {
    BackendHandle h;
    switch (cfg.backend) {
    case Backend::oracle:
        h.bundle = std::make_unique<synth::GroundTruthBundle>(synth::load_bundle(cfg.input_dir));
        h.backend = std::make_unique<synth::OracleMatcher>(*h.bundle, cfg.oracle_noise, cfg.oracle_matches,
                                                           cfg.seed, cfg.oracle_avoid_area);
        break;
    case Backend::classical:
        h.backend = std::make_unique<matching::ClassicalMatcher>(cfg.classical);
        break;
    case Backend::file:
        h.backend = std::make_unique<matching::FileMatcher>(cfg.match_dir.empty() ? cfg.input_dir / "matches"
                                                                                    : cfg.match_dir);
        break;
    }
    return h;
}

std::size_t RunManifest::failed_count() const {
    return static_cast<std::size_t>(
        std::count_if(frames.begin(), frames.end(), [](const ManifestFrame& f) { return f.status == FrameStatus::failed; }));
}

std::string RunManifest::to_json() const {
    json j;
    j["config"] = json::parse(config_json);
    j["frames"] = json::array();
    for (const auto& f : frames) {
        j["frames"].push_back({{"name", f.name},
                               {"status", std::string(pipeline::to_string(f.status))},
                               {"stage", std::string(pipeline::to_string(f.stage))},
                               {"output", f.output},
                               {"sha256", f.sha256},
                               {"warnings", f.warnings}});
    }
    j["warnings"] = warnings;
    j["report"] = report_csv;
    j["metrics"] = metrics_csv;
    j["combined_sha256"] = combined_sha256;
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    const json j = json::parse(text);
    RunManifest m;
    m.config_json = j.at("config").dump(2);
    for (const auto& f : j.at("frames")) {
        ManifestFrame mf;
        mf.name = f.at("name").get<std::string>();
        mf.status = parse_status(f.at("status").get<std::string>());
        mf.stage = parse_stage(f.at("stage").get<std::string>());
        mf.output = f.at("output").get<std::string>();
        mf.sha256 = f.at("sha256").get<std::string>();
        mf.warnings = f.at("warnings").get<std::vector<std::string>>();
        m.frames.push_back(std::move(mf));
    }
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    m.report_csv = j.at("report").get<std::string>();
    m.metrics_csv = j.at("metrics").get<std::string>();
    m.combined_sha256 = j.at("combined_sha256").get<std::string>();
    return m;
}

RunManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return RunManifest::from_json(ss.str());
}

metrics::MetricReport evaluate_run(const RunManifest& run, const fs::path& run_dir, const fs::path& input_dir,
                                   double tau, double lambda) {
    metrics::MetricReport rep;
    std::vector<Image> outputs;
    bool complete = true;
    for (std::size_t i = 0; i < run.frames.size(); ++i) {
        const ManifestFrame& f = run.frames[i];
        const fs::path gp = input_dir / "x_gt" / f.name;
        if (f.output.empty() || !fs::exists(gp)) {
            complete = false;
            continue;
        }
        Image out = load_image(run_dir / f.output);
        rep.frames.push_back(metrics::evaluate_frame(static_cast<int>(i), out, load_image(gp),
                                                     load_image(input_dir / "rgb" / f.name), tau, lambda));
        outputs.push_back(std::move(out));
    }
    if (complete && !outputs.empty() && fs::exists(input_dir / "gt" / "meta")) {
        rep.consistency = synth::consistency_metric(outputs, synth::load_bundle(input_dir));
    }
    return rep;
}

void write_stage_report(const std::vector<FrameResult>& results, std::ostream& os) {
    os << "frame,name,status,stage,matches,accumulated,area_sampled,homography_inliers,levels,omitted_levels,"
          "q,theta,rejected_patches,self_match_before,self_match_after\n";
    for (const FrameResult& r : results) {
        auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
        os << r.frame << ',' << r.name << ',' << to_string(r.status) << ',' << to_string(r.stage) << ','
           << r.matches << ',' << r.accumulated << ',' << r.area_sampled << ',' << r.homography_inliers << ','
           << r.levels.size() << ',' << r.omitted_levels.size() << ',' << format_double(r.q) << ','
           << format_double(r.theta) << ',' << r.rejected_patches << ',' << opt(r.score_before) << ','
           << opt(r.score_after) << '\n';
    }
}

namespace {

void save_x(const Image& img, const fs::path& path) {
    fs::create_directories(path.parent_path());
    if (img.units() == Units::normalized) {
        save_image(img, path, {BitDepth::sixteen, UnitsDescriptor{Units::normalized, 1.0 / 65535.0, 0.0}});
    } else {
        save_image(img, path, {BitDepth::sixteen, std::nullopt});
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& cfg) {
    validate(cfg);
    const Sequence seq = load_sequence(cfg.input_dir);
    if (seq.size() == 0) throw std::runtime_error("no RGB frames under '" + (cfg.input_dir / "rgb").string() + "'");
    const BackendHandle handle = make_backend(cfg);
    const auto results = run_frames(cfg, seq, *handle.backend);

    fs::create_directories(cfg.output_dir);
    RunManifest man;
    man.config_json = config_to_json(cfg);
    std::string combined;
    for (const FrameResult& r : results) {
        ManifestFrame mf;
        mf.name = r.name;
        mf.status = r.status;
        mf.stage = r.stage;
        mf.warnings = r.warnings;
        if (r.status != FrameStatus::failed) {
            mf.output = (fs::path("x_final") / png_name(r.name)).string();
            save_x(r.output, cfg.output_dir / mf.output);
            mf.sha256 = sha256_file(cfg.output_dir / mf.output);
        }
        if (r.rejected) {
            fs::create_directories(cfg.output_dir / "rejected");
            save_mask(*r.rejected, cfg.output_dir / "rejected" / png_name(r.name));
        }
        if (cfg.dump_levels) {
            const std::string stem = fs::path(r.name).stem().string();
            for (std::size_t k = 0; k < r.levels.size(); ++k) {
                save_x(r.levels[k], cfg.output_dir / "levels" / (stem + "_d" + format_double(r.level_thresholds[k]) + ".png"));
            }
            if (r.fused) save_x(*r.fused, cfg.output_dir / "levels" / (stem + "_fused.png"));
        }
        combined += mf.name + ':' + mf.sha256 + '\n';
        for (const auto& w : r.warnings) man.warnings.push_back(r.name + ": " + w);
        man.frames.push_back(std::move(mf));
    }
    man.combined_sha256 = sha256_hex(combined);

    std::ostringstream report;
    write_stage_report(results, report);
    man.report_csv = "report.csv";
    write_text(cfg.output_dir / man.report_csv, report.str());

    // Fidelity metrics when ground truth ships with the input.
    const fs::path gt_dir = cfg.input_dir / "x_gt";
    if (fs::is_directory(gt_dir)) {
        metrics::MetricReport rep;
        std::vector<Image> outputs;
        bool complete = true;
        for (const FrameResult& r : results) {
            const fs::path gp = gt_dir / r.name;
            if (r.status == FrameStatus::failed || !fs::exists(gp)) {
                complete = false;
                continue;
            }
            rep.frames.push_back(metrics::evaluate_frame(r.frame, r.output, load_image(gp),
                                                         seq.rgb[static_cast<std::size_t>(r.frame)], cfg.tau,
                                                         cfg.lambda));
            outputs.push_back(r.output);
        }
        if (complete && fs::exists(cfg.input_dir / "gt" / "meta")) {
            const auto bundle = handle.bundle ? *handle.bundle : synth::load_bundle(cfg.input_dir);
            rep.consistency = synth::consistency_metric(outputs, bundle);
        }
        std::ostringstream csv;
        rep.write_csv(csv);
        man.metrics_csv = "metrics.csv";
        write_text(cfg.output_dir / man.metrics_csv, csv.str());
        write_text(cfg.output_dir / "metrics.json", rep.to_json());
    }

    write_text(cfg.output_dir / "manifest.json", man.to_json());
    return man;
}

ExportResult export_dataset(const RunManifest& run, const colmap::Model& model, const ExportOptions& opts) {
    ExportResult res;
    fs::path rgb_dir = opts.rgb_dir;
    if (rgb_dir.empty()) {
        const json cfg = json::parse(run.config_json);
        rgb_dir = fs::path(cfg.at("input").get<std::string>()) / "rgb";
    }
    struct Item {
        const ManifestFrame* frame;
        const colmap::ImagePose* pose;
    };
    std::vector<Item> items;
    for (const ManifestFrame& f : run.frames) {
        if (f.status == FrameStatus::failed || f.output.empty()) {
            res.warnings.push_back(f.name + ": no output; excluded");
            continue;
        }
        const auto it = opts.name_map.find(f.name);
        const std::string image_name = it == opts.name_map.end() ? f.name : it->second;
        const colmap::ImagePose* pose = model.find_image(image_name);
        if (!pose) {
            res.warnings.push_back(f.name + ": no pose for image '" + image_name + "'; excluded");
            continue;
        }
        items.push_back({&f, pose});
    }
    if (items.empty()) throw std::runtime_error("export: no run frame overlaps the COLMAP model");

    fs::create_directories(opts.out_dir / "images");
    fs::create_directories(opts.out_dir / "x");
    fs::create_directories(opts.out_dir / "sparse" / "0");
    for (const char* f : {"cameras.txt", "images.txt", "points3D.txt"}) {
        if (fs::exists(opts.model_dir / f)) {
            fs::copy_file(opts.model_dir / f, opts.out_dir / "sparse" / "0" / f, fs::copy_options::overwrite_existing);
        }
    }

    json mapping = json::array();
    for (const Item& item : items) {
        const fs::path rgb_out = opts.out_dir / "images" / item.pose->name;
        fs::create_directories(rgb_out.parent_path());
        fs::copy_file(rgb_dir / item.frame->name, rgb_out, fs::copy_options::overwrite_existing);
        const std::string x_name = fs::path(item.pose->name).replace_extension(".png").string();
        save_x(load_image(opts.run_dir / item.frame->output), opts.out_dir / "x" / x_name);
        mapping.push_back({{"image_id", item.pose->id},
                           {"image", "images/" + item.pose->name},
                           {"x", "x/" + x_name},
                           {"frame", item.frame->name}});
        ++res.exported;
    }
    json man;
    man["pairs"] = mapping;
    man["warnings"] = res.warnings;
    write_text(opts.out_dir / "manifest.json", man.dump(2));
    return res;
}

}  // namespace rgbx::pipeline
