#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rgbx/colmap.hpp"
#include "rgbx/config.hpp"
#include "rgbx/densify.hpp"
#include "rgbx/fuse_filter.hpp"
#include "rgbx/image_io.hpp"
#include "rgbx/metrics.hpp"
#include "rgbx/pipeline.hpp"
#include "rgbx/synthbench.hpp"

namespace fs = std::filesystem;
using namespace rgbx;

namespace {

// Options shared by the pipeline-driven subcommands; flags override the file.
struct Common {
    std::string config;
    std::string input;
    std::string output;
    std::string match_dir;
    std::string backend;
    std::uint64_t seed = 0;
    int window = 0;
    int workers = 0;
    bool dump_levels = false;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, bool with_output = true) {
    sub->add_option("-c,--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("-i,--input", c.input, "Input directory (rgb/, x_raw/ or x/, masks/)");
    if (with_output) sub->add_option("-o,--output", c.output, "Output directory");
    sub->add_option("--match-dir", c.match_dir, "Directory of precomputed matches for --backend file");
    sub->add_option("--backend", c.backend, "Matcher backend")
        ->check(CLI::IsMember({"oracle", "classical", "file"}));
    c.seed_opt = sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--window", c.window, "Accumulation window (odd)");
    sub->add_option("--workers", c.workers, "Worker threads");
    sub->add_flag("--dump-levels", c.dump_levels, "Write per-threshold densified levels");
}

PipelineConfig resolve(const Common& c) {
    PipelineConfig cfg;
    if (!c.config.empty()) cfg = load_config(c.config);
    if (!c.input.empty()) cfg.input_dir = c.input;
    if (!c.output.empty()) cfg.output_dir = c.output;
    if (!c.match_dir.empty()) cfg.match_dir = c.match_dir;
    if (!c.backend.empty()) cfg.backend = parse_backend(c.backend);
    if (c.seed_opt && c.seed_opt->count() > 0) cfg.seed = c.seed;
    if (c.window > 0) cfg.window = c.window;
    if (c.workers > 0) cfg.workers = c.workers;
    if (c.dump_levels) cfg.dump_levels = true;
    if (cfg.input_dir.empty()) throw CLI::ValidationError("--input", "an input directory is required");
    validate(cfg);
    return cfg;
}

void save_x(const Image& img, const fs::path& path) {
    fs::create_directories(path.parent_path());
    save_image(img, path, {BitDepth::sixteen, UnitsDescriptor{Units::normalized, 1.0 / 65535.0, 0.0}});
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << text;
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

int check_frame(int frame, const pipeline::Sequence& seq) {
    if (frame < 0 || frame >= seq.size()) {
        throw std::runtime_error("frame " + std::to_string(frame) + " out of range [0, " +
                                 std::to_string(seq.size()) + ")");
    }
    return frame;
}

std::string stem_of(const pipeline::Sequence& seq, int n) {
    return fs::path(seq.names[static_cast<std::size_t>(n)]).stem().string();
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// ---- synth ----

struct SynthArgs {
    std::string out;
    std::string scene;
    std::uint64_t seed = 1;
    int frames = 0;
    int width = 0;
    int height = 0;
    std::string modality;
    double homogeneous = -1.0;
    std::vector<double> disparity;
    CLI::Option* seed_opt = nullptr;
};

int cmd_synth(const SynthArgs& a) {
    synth::SceneConfig sc;
    if (!a.scene.empty()) {
        std::ifstream in(a.scene);
        std::stringstream ss;
        ss << in.rdbuf();
        sc = synth::scene_config_from_json(ss.str());
    }
    if (a.seed_opt->count() > 0) sc.seed = a.seed;
    if (a.frames > 0) sc.frames = a.frames;
    if (a.width > 0) sc.width = a.width;
    if (a.height > 0) sc.height = a.height;
    if (!a.modality.empty()) sc.modality = synth::parse_modality(a.modality);
    if (a.homogeneous >= 0.0) sc.homogeneous_fraction = a.homogeneous;
    if (!a.disparity.empty()) sc.layer_disparity = a.disparity;
    synth::validate(sc);

    const auto bundle = synth::gen_sequence(sc);
    synth::save_bundle(bundle, a.out);
    std::printf("wrote %d frames (%dx%d, %s) to %s\n", sc.frames, sc.width, sc.height,
                std::string(synth::to_string(sc.modality)).c_str(), a.out.c_str());
    return 0;
}

// ---- run ----

int cmd_run(const Common& c) {
    PipelineConfig cfg = resolve(c);
    if (cfg.output_dir.empty()) throw CLI::ValidationError("--output", "an output directory is required");
    const auto man = pipeline::run_pipeline(cfg);
    print_warnings(man.warnings);
    std::size_t ok = 0, fallback = 0;
    for (const auto& f : man.frames) {
        ok += f.status == pipeline::FrameStatus::ok;
        fallback += f.status == pipeline::FrameStatus::fallback;
    }
    std::printf("%zu frames: %zu ok, %zu fallback, %zu failed\n", man.frames.size(), ok, fallback,
                man.failed_count());
    std::printf("combined sha256 %s\n", man.combined_sha256.c_str());
    return man.failed_count() == 0 ? 0 : 1;
}

// ---- eval ----

struct EvalArgs {
    std::string run;
    std::string input;
    std::string out;
    double tau = 0.1;
    double lambda = 0.1;
};

int cmd_eval(const EvalArgs& a) {
    const auto man = pipeline::load_manifest(fs::path(a.run) / "manifest.json");
    fs::path input = a.input;
    if (input.empty()) input = nlohmann::json::parse(man.config_json).at("input").get<std::string>();
    const auto rep = pipeline::evaluate_run(man, a.run, input, a.tau, a.lambda);
    if (rep.frames.empty()) {
        std::cerr << "error: no frame has both an output and ground truth under " << (input / "x_gt") << '\n';
        return 1;
    }
    const fs::path out = a.out.empty() ? fs::path(a.run) : fs::path(a.out);
    std::ostringstream csv;
    rep.write_csv(csv);
    write_text(out / "metrics.csv", csv.str());
    write_text(out / "metrics.json", rep.to_json());
    const auto m = rep.aggregate();
    std::printf("frames %zu  psnr %.3f dB  ssim %.4f  mae %.5f  rmse %.5f\n", rep.frames.size(), m.psnr_db, m.ssim,
                m.mae, m.rmse);
    if (rep.consistency) std::printf("consistency %.5f\n", *rep.consistency);
    return 0;
}

// ---- export ----

struct ExportArgs {
    std::string run;
    std::string model;
    std::string out;
    std::string rgb;
    std::string name_map;
};

int cmd_export(const ExportArgs& a) {
    const auto man = pipeline::load_manifest(fs::path(a.run) / "manifest.json");
    const auto model = colmap::parse_model(a.model);
    pipeline::ExportOptions opts;
    opts.run_dir = a.run;
    opts.model_dir = a.model;
    opts.out_dir = a.out;
    opts.rgb_dir = a.rgb;
    if (!a.name_map.empty()) {
        std::ifstream in(a.name_map);
        if (!in) throw std::runtime_error("cannot open name map '" + a.name_map + "'");
        opts.name_map = nlohmann::json::parse(in).get<std::map<std::string, std::string>>();
    }
    const auto res = pipeline::export_dataset(man, model, opts);
    print_warnings(res.warnings);
    std::printf("exported %zu pairs to %s\n", res.exported, a.out.c_str());
    return 0;
}

// ---- match ----

struct StageArgs {
    int frame = -1;
    std::string x_path;
};

int cmd_match(const Common& c, const StageArgs& s) {
    const PipelineConfig cfg = resolve(c);
    const fs::path out = c.output.empty() ? cfg.input_dir / "matches" : fs::path(c.output);
    const auto seq = pipeline::load_sequence(cfg.input_dir);
    const auto handle = pipeline::make_backend(cfg);
    std::vector<int> targets;
    if (s.frame >= 0) {
        targets.push_back(check_frame(s.frame, seq));
    } else {
        for (int n = 0; n < seq.size(); ++n) targets.push_back(n);
    }
    fs::create_directories(out);
    std::size_t files = 0, total = 0;
    for (int n : targets) {
        for (int m : pipeline::frame_window(n, seq.size(), cfg.window)) {
            const auto& x = seq.x[static_cast<std::size_t>(m)];
            if (!x) {
                std::cerr << "warning: frame " << m << " has no X raster; pair " << n << '/' << m << " skipped\n";
                continue;
            }
            const auto ms = matching::match_pair(*handle.backend, n, seq.rgb[static_cast<std::size_t>(n)], m, *x);
            if (ms.warning) std::cerr << "warning: pair " << n << '/' << m << " had too little texture\n";
            matching::write_match_set(ms, out / matching::match_file_name(n, m));
            ++files;
            total += ms.matches.size();
        }
    }
    std::printf("wrote %zu match files (%zu matches) to %s\n", files, total, out.string().c_str());
    return 0;
}

// ---- densify ----

int cmd_densify(const Common& c, const StageArgs& s) {
    const PipelineConfig cfg = resolve(c);
    if (c.output.empty()) throw CLI::ValidationError("--output", "an output directory is required");
    const auto seq = pipeline::load_sequence(cfg.input_dir);
    const int n = check_frame(s.frame, seq);
    const auto handle = pipeline::make_backend(cfg);
    const Image& rgb = seq.rgb[static_cast<std::size_t>(n)];

    const auto fe = pipeline::front_end(cfg, seq, *handle.backend, n);
    print_warnings(fe.warnings);
    const auto aff = densify::compute_affinities(rgb, cfg.densify);
    const auto fu = pipeline::densify_and_fuse(cfg, aff, rgb, fe.sparse, fe.conf);

    const fs::path out = c.output;
    const std::string stem = stem_of(seq, n);
    Image sparse(rgb.width(), rgb.height(), 1), conf(rgb.width(), rgb.height(), 1);
    for (std::size_t i = 0; i < fe.sparse.size(); ++i) {
        sparse.data()[i] = fe.sparse.known(i) ? fe.sparse.values[i] : 0.0;
        conf.data()[i] = fe.conf.conf[i];
    }
    save_x(sparse, out / (stem + "_sparse.png"));
    save_x(conf, out / (stem + "_conf.png"));
    for (const auto& level : fu.levels.levels) {
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "_d%.2f.png", level.threshold);
        save_x(level.dense, out / (stem + suffix));
        std::printf("level %.2f: %zu known, %d iterations\n", level.threshold, level.known, level.iterations);
    }
    for (double t : fu.levels.omitted) std::cerr << "warning: level " << t << " omitted (no surviving pixel)\n";
    save_x(fu.fused, out / (stem + "_fused.png"));
    std::printf("frame %d: %zu matches, %zu accumulated, %zu area-sampled\n", n, fe.match_count, fe.accumulated,
                fe.area_sampled);
    return 0;
}

// ---- filter ----

int cmd_filter(const Common& c, const StageArgs& s) {
    const PipelineConfig cfg = resolve(c);
    if (c.output.empty()) throw CLI::ValidationError("--output", "an output directory is required");
    const auto seq = pipeline::load_sequence(cfg.input_dir);
    const int n = check_frame(s.frame, seq);
    const Image& rgb = seq.rgb[static_cast<std::size_t>(n)];
    const auto aff = densify::compute_affinities(rgb, cfg.densify);

    Image xd;
    if (!s.x_path.empty()) {
        xd = to_grayscale(load_image(s.x_path));
    } else {
        const auto handle = pipeline::make_backend(cfg);
        const auto fe = pipeline::front_end(cfg, seq, *handle.backend, n);
        print_warnings(fe.warnings);
        xd = pipeline::densify_and_fuse(cfg, aff, rgb, fe.sparse, fe.conf).fused;
    }
    if (xd.width() != rgb.width() || xd.height() != rgb.height()) {
        throw std::runtime_error("X estimate and RGB frame differ in size");
    }
    const auto ref = pipeline::self_match_refine(cfg, aff, rgb, xd);

    const fs::path out = c.output;
    const std::string stem = stem_of(seq, n);
    fs::create_directories(out);
    save_mask(ref.filter.rejected, out / (stem + "_rejected.png"));
    if (ref.fine) {
        save_x(*ref.fine, out / (stem + "_fine.png"));
    } else {
        std::cerr << "warning: no patch survived the filter; no fine output written\n";
    }
    const auto grid = fuse::PatchGrid::make(rgb.width(), rgb.height(), cfg.patch);
    std::printf("q %.4f  theta %.4f  rejected %zu/%d patches%s\n", ref.filter.q, ref.filter.theta,
                ref.filter.rejected_count, grid.count(), ref.filter.degenerate ? "  (degenerate)" : "");
    if (ref.score_before) std::printf("self-match score %.5f\n", *ref.score_before);
    return ref.fine ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-modal X densification for RGB-X sequences"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark sequence");
    synth->add_option("-o,--out", synth_args.out, "Output directory")->required();
    synth->add_option("--scene", synth_args.scene, "Scene JSON")->check(CLI::ExistingFile);
    synth_args.seed_opt = synth->add_option("--seed", synth_args.seed, "Scene seed");
    synth->add_option("--frames", synth_args.frames, "Frame count");
    synth->add_option("--width", synth_args.width, "Frame width");
    synth->add_option("--height", synth_args.height, "Frame height");
    synth->add_option("--modality", synth_args.modality, "thermal, nir or sar");
    synth->add_option("--homogeneous", synth_args.homogeneous, "Target X-flat coverage in [0,1]");
    synth->add_option("--disparity", synth_args.disparity, "Per-layer RGB/X disparity, background first");

    Common run_c;
    auto* run = app.add_subcommand("run", "Run the full pipeline");
    add_common(run, run_c);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Score a finished run against ground truth");
    eval->add_option("-r,--run", eval_args.run, "Run directory holding manifest.json")->required();
    eval->add_option("-i,--input", eval_args.input, "Input directory (defaults to the run's)");
    eval->add_option("-o,--out", eval_args.out, "Where to write metrics.csv/json (defaults to the run)");
    eval->add_option("--tau", eval_args.tau, "Similarity temperature");
    eval->add_option("--lambda", eval_args.lambda, "Off-diagonal weight of the self-match score");

    ExportArgs export_args;
    auto* exp = app.add_subcommand("export", "Write an aligned RGB-X dataset with a COLMAP model");
    exp->add_option("-r,--run", export_args.run, "Run directory")->required();
    exp->add_option("-m,--model", export_args.model, "COLMAP text model directory")->required();
    exp->add_option("-o,--out", export_args.out, "Dataset directory")->required();
    exp->add_option("--rgb", export_args.rgb, "RGB directory (defaults to <run input>/rgb)");
    exp->add_option("--name-map", export_args.name_map, "JSON object mapping frame names to COLMAP names");

    Common match_c, densify_c, filter_c;
    StageArgs match_s, densify_s, filter_s;
    auto* match = app.add_subcommand("match", "Compute and cache the windowed match sets");
    add_common(match, match_c);
    match->add_option("-f,--frame", match_s.frame, "Target RGB frame (default: all)");
    auto* dens = app.add_subcommand("densify", "Accumulate, densify and fuse one frame");
    add_common(dens, densify_c);
    dens->add_option("-f,--frame", densify_s.frame, "Target RGB frame")->required();
    auto* filt = app.add_subcommand("filter", "Self-match filter and fine densification for one frame");
    add_common(filt, filter_c);
    filt->add_option("-f,--frame", filter_s.frame, "Target RGB frame")->required();
    filt->add_option("-x,--x", filter_s.x_path, "X estimate to filter (default: computed fused output)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_args);
        if (run->parsed()) return cmd_run(run_c);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (exp->parsed()) return cmd_export(export_args);
        if (match->parsed()) return cmd_match(match_c, match_s);
        if (dens->parsed()) return cmd_densify(densify_c, densify_s);
        if (filt->parsed()) return cmd_filter(filter_c, filter_s);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
