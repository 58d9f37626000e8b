#include "rgbx/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rgbx {

using nlohmann::json;

std::string_view to_string(Backend b) {
    switch (b) {
    case Backend::oracle: return "oracle";
    case Backend::classical: return "classical";
    case Backend::file: return "file";
    }
    return "classical";
}

Backend parse_backend(std::string_view text) {
    if (text == "oracle") return Backend::oracle;
    if (text == "classical") return Backend::classical;
    if (text == "file") return Backend::file;
    throw std::invalid_argument("unknown backend '" + std::string(text) + "'");
}

void validate(const PipelineConfig& cfg) {
    if (cfg.window < 1 || cfg.window % 2 == 0) throw std::invalid_argument("window must be odd and >= 1");
    if (cfg.workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
    if (cfg.patch < 4) throw std::invalid_argument("patch must be >= 4");
    if (cfg.oracle_matches < 0) throw std::invalid_argument("oracle_matches must be non-negative");
    const auto& d = cfg.descriptors;
    if (d.cells < 1 || d.bins < 2) throw std::invalid_argument("descriptors need cells >= 1 and bins >= 2");
    if (!(d.bin_floor >= 0.0) || !(d.cell_norm_floor >= 0.0) || !(d.smooth_sigma >= 0.0)) {
        throw std::invalid_argument("descriptor floors and smoothing must be non-negative");
    }
    densify::validate(cfg.densify);
    sampling::validate(cfg.area);
    synth::validate(cfg.oracle_noise);
}

namespace {

/// Reads `key` into `out` when present and records it as consumed.
template <typename T>
void take(const json& j, const char* key, T& out, std::set<std::string>& seen) {
    seen.insert(key);
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        if (!seen.count(k)) throw std::invalid_argument("unknown config key '" + where + k + "'");
    }
}

template <typename Fn>
void section(const json& j, const char* key, std::set<std::string>& seen, Fn&& fn) {
    seen.insert(key);
    if (!j.contains(key)) return;
    const json& s = j.at(key);
    if (!s.is_object()) throw std::invalid_argument(std::string("config section '") + key + "' must be an object");
    std::set<std::string> inner;
    fn(s, inner);
    reject_unknown(s, inner, std::string(key) + ".");
}

}  // namespace

PipelineConfig config_from_json(const std::string& text, PipelineConfig cfg) {
    const json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    std::set<std::string> seen;
    std::string s;

    seen.insert("input");
    if (j.contains("input")) cfg.input_dir = j["input"].get<std::string>();
    seen.insert("output");
    if (j.contains("output")) cfg.output_dir = j["output"].get<std::string>();
    seen.insert("match_dir");
    if (j.contains("match_dir")) cfg.match_dir = j["match_dir"].get<std::string>();
    take(j, "window", cfg.window, seen);
    seen.insert("backend");
    if (j.contains("backend")) cfg.backend = parse_backend(j["backend"].get<std::string>());
    take(j, "seed", cfg.seed, seen);
    take(j, "workers", cfg.workers, seen);
    take(j, "dump_levels", cfg.dump_levels, seen);
    take(j, "area_sampling", cfg.area_sampling, seen);
    take(j, "self_match_filter", cfg.self_match_filter, seen);
    take(j, "tau", cfg.tau, seen);
    take(j, "lambda", cfg.lambda, seen);
    take(j, "patch", cfg.patch, seen);

    section(j, "densify", seen, [&](const json& d, std::set<std::string>& in) {
        take(d, "thresholds", cfg.densify.thresholds, in);
        take(d, "iterations", cfg.densify.iterations, in);
        take(d, "sigma_color", cfg.densify.sigma_color, in);
        take(d, "sigma_spatial", cfg.densify.sigma_spatial, in);
        take(d, "tol", cfg.densify.tol, in);
        take(d, "radii", cfg.densify.radii, in);
        take(d, "confidence_aware", cfg.densify.confidence_aware, in);
    });
    section(j, "area_sample", seen, [&](const json& d, std::set<std::string>& in) {
        take(d, "rate", cfg.area.rate, in);
        take(d, "conf", cfg.area.fixed_conf, in);
    });
    section(j, "ransac", seen, [&](const json& d, std::set<std::string>& in) {
        take(d, "reproj_thresh", cfg.ransac.reproj_thresh, in);
        take(d, "max_iters", cfg.ransac.max_iters, in);
        take(d, "confidence", cfg.ransac.confidence, in);
    });
    section(j, "enhance", seen, [&](const json& d, std::set<std::string>& in) {
        take(d, "radius", cfg.enhance.radius, in);
        take(d, "eps", cfg.enhance.eps, in);
        take(d, "unsharp_amount", cfg.enhance.unsharp_amount, in);
        take(d, "unsharp_sigma", cfg.enhance.unsharp_sigma, in);
    });
    section(j, "descriptors", seen, [&](const json& d, std::set<std::string>& in) {
        take(d, "cells", cfg.descriptors.cells, in);
        take(d, "bins", cfg.descriptors.bins, in);
        take(d, "bin_floor", cfg.descriptors.bin_floor, in);
        take(d, "cell_norm_floor", cfg.descriptors.cell_norm_floor, in);
        take(d, "smooth_sigma", cfg.descriptors.smooth_sigma, in);
    });
    section(j, "classical", seen, [&](const json& d, std::set<std::string>& in) {
        take(d, "window", cfg.classical.window, in);
        take(d, "stride", cfg.classical.stride, in);
        take(d, "search_radius", cfg.classical.search_radius, in);
        take(d, "min_energy_ratio", cfg.classical.min_energy_ratio, in);
        take(d, "subpixel", cfg.classical.subpixel, in);
    });
    section(j, "oracle", seen, [&](const json& d, std::set<std::string>& in) {
        take(d, "position_sigma", cfg.oracle_noise.position_sigma, in);
        take(d, "outlier_fraction", cfg.oracle_noise.outlier_fraction, in);
        take(d, "confidence_fidelity", cfg.oracle_noise.confidence_fidelity, in);
        take(d, "value_sigma", cfg.oracle_noise.value_sigma, in);
        take(d, "matches", cfg.oracle_matches, in);
        take(d, "avoid_area", cfg.oracle_avoid_area, in);
    });
    reject_unknown(j, seen, "");
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str(), std::move(base));
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j;
    j["input"] = cfg.input_dir.string();
    j["output"] = cfg.output_dir.string();
    j["match_dir"] = cfg.match_dir.string();
    j["window"] = cfg.window;
    j["backend"] = std::string(to_string(cfg.backend));
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["dump_levels"] = cfg.dump_levels;
    j["area_sampling"] = cfg.area_sampling;
    j["self_match_filter"] = cfg.self_match_filter;
    j["tau"] = cfg.tau;
    j["lambda"] = cfg.lambda;
    j["patch"] = cfg.patch;
    j["densify"] = {{"thresholds", cfg.densify.thresholds},
                    {"iterations", cfg.densify.iterations},
                    {"sigma_color", cfg.densify.sigma_color},
                    {"sigma_spatial", cfg.densify.sigma_spatial},
                    {"tol", cfg.densify.tol},
                    {"radii", cfg.densify.radii},
                    {"confidence_aware", cfg.densify.confidence_aware}};
    j["area_sample"] = {{"rate", cfg.area.rate}, {"conf", cfg.area.fixed_conf}};
    j["ransac"] = {{"reproj_thresh", cfg.ransac.reproj_thresh},
                   {"max_iters", cfg.ransac.max_iters},
                   {"confidence", cfg.ransac.confidence}};
    j["enhance"] = {{"radius", cfg.enhance.radius},
                    {"eps", cfg.enhance.eps},
                    {"unsharp_amount", cfg.enhance.unsharp_amount},
                    {"unsharp_sigma", cfg.enhance.unsharp_sigma}};
    j["descriptors"] = {{"cells", cfg.descriptors.cells},
                        {"bins", cfg.descriptors.bins},
                        {"bin_floor", cfg.descriptors.bin_floor},
                        {"cell_norm_floor", cfg.descriptors.cell_norm_floor},
                        {"smooth_sigma", cfg.descriptors.smooth_sigma}};
    j["classical"] = {{"window", cfg.classical.window},
                      {"stride", cfg.classical.stride},
                      {"search_radius", cfg.classical.search_radius},
                      {"min_energy_ratio", cfg.classical.min_energy_ratio},
                      {"subpixel", cfg.classical.subpixel}};
    j["oracle"] = {{"position_sigma", cfg.oracle_noise.position_sigma},
                   {"outlier_fraction", cfg.oracle_noise.outlier_fraction},
                   {"confidence_fidelity", cfg.oracle_noise.confidence_fidelity},
                   {"value_sigma", cfg.oracle_noise.value_sigma},
                   {"matches", cfg.oracle_matches},
                   {"avoid_area", cfg.oracle_avoid_area}};
    return j.dump(2);
}

}  // namespace rgbx
