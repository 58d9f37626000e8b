#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rgbx/classical_matcher.hpp"
#include "rgbx/densify.hpp"
#include "rgbx/fuse_filter.hpp"
#include "rgbx/homography.hpp"
#include "rgbx/sampling.hpp"
#include "rgbx/synthbench.hpp"

namespace rgbx {

enum class Backend { oracle, classical, file };

std::string_view to_string(Backend b);
Backend parse_backend(std::string_view text);

struct PipelineConfig {
    std::filesystem::path input_dir;
    std::filesystem::path output_dir;
    std::filesystem::path match_dir;  // file backend; defaults to <input>/matches

    int window = 7;  // odd; frames n - window/2 .. n + window/2
    Backend backend = Backend::classical;
    std::uint64_t seed = 0;
    int workers = 1;
    bool dump_levels = false;

    bool area_sampling = true;
    bool self_match_filter = true;
    double tau = 0.1;
    double lambda = 0.1;
    int patch = 32;

    densify::DensifyConfig densify;
    sampling::AreaSampleConfig area;
    matching::RansacOptions ransac;
    fuse::EnhanceOptions enhance;
    fuse::DescriptorOptions descriptors;
    matching::ClassicalMatcherOptions classical;

    // Oracle backend only.
    synth::NoiseModel oracle_noise;
    int oracle_matches = 3000;
    bool oracle_avoid_area = false;
};

/// Throws std::invalid_argument on any violated invariant.
void validate(const PipelineConfig& cfg);

/// Nested JSON; keys absent from the text keep their defaults, unknown keys
/// are rejected.
PipelineConfig config_from_json(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
std::string config_to_json(const PipelineConfig& cfg);

}  // namespace rgbx
