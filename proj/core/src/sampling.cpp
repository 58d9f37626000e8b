#include "rgbx/sampling.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace rgbx::sampling {

void validate(const AreaSampleConfig& cfg) {
    if (!(cfg.rate > 0.0 && cfg.rate <= 1.0)) {
        throw std::invalid_argument("area sample rate must be in (0, 1]");
    }
    if (!(cfg.fixed_conf >= 0.0 && cfg.fixed_conf <= 1.0)) {
        throw std::invalid_argument("area sample confidence must be in [0, 1]");
    }
}

AreaSampleResult area_sample(const SparseMap& sparse, const ConfidenceMap& conf, const Image& warped_x,
                             const Mask& validity, const Mask& area_mask, const AreaSampleConfig& cfg) {
    validate(cfg);
    const int w = sparse.width, h = sparse.height;
    auto same = [&](int ow, int oh) { return ow == w && oh == h; };
    if (!same(conf.width, conf.height) || !same(warped_x.width(), warped_x.height()) ||
        !same(validity.width, validity.height) || !same(area_mask.width, area_mask.height)) {
        throw std::invalid_argument("area_sample: raster dimensions differ");
    }
    if (warped_x.channels() != 1) throw std::invalid_argument("area_sample: warped X must be 1-channel");

    AreaSampleResult out{sparse, conf, 0, 0};
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < sparse.size(); ++i) {
        if (area_mask[i] && !sparse.known(i) && validity[i]) eligible.push_back(i);
    }
    out.eligible = eligible.size();
    if (eligible.empty()) return out;

    // The epsilon absorbs representation error in products like 0.07 * 100.
    const auto k = static_cast<std::size_t>(
        std::ceil(cfg.rate * static_cast<double>(eligible.size()) - 1e-9));
    // Partial Fisher-Yates: the first k slots become a uniform sample.
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t j = 0; j < k; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, eligible.size() - 1);
        std::swap(eligible[j], eligible[pick(rng)]);
        const std::size_t p = eligible[j];
        out.sparse.set(p, warped_x.data()[p], 1);
        out.conf.conf[p] = cfg.fixed_conf;
    }
    out.sampled = k;
    return out;
}

}  // namespace rgbx::sampling
