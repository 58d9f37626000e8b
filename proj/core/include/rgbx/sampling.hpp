#pragma once

#include <cstdint>

#include "rgbx/image.hpp"

namespace rgbx::sampling {

struct AreaSampleConfig {
    double rate = 0.05;
    double fixed_conf = 0.3;
    std::uint64_t seed = 0;
};

void validate(const AreaSampleConfig& cfg);

struct AreaSampleResult {
    SparseMap sparse;
    ConfidenceMap conf;
    std::size_t eligible = 0;
    std::size_t sampled = 0;
};

/// Seeds still-void pixels inside `area_mask` with warped X values.
/// Eligible pixels are those that are in the mask, void in `sparse` and
/// valid in `validity`; ceil(rate * |eligible|) of them are drawn uniformly
/// without replacement and get value warped_x(p), count 1, confidence
/// fixed_conf. Known pixels are never modified.
AreaSampleResult area_sample(const SparseMap& sparse, const ConfidenceMap& conf, const Image& warped_x,
                             const Mask& validity, const Mask& area_mask, const AreaSampleConfig& cfg);

}  // namespace rgbx::sampling
