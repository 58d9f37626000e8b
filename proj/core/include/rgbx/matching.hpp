#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rgbx/image.hpp"

namespace rgbx::matching {

/// Subpixel location in (row, col) order.
struct PixelCoord {
    double row = 0.0;
    double col = 0.0;

    bool operator==(const PixelCoord&) const = default;
};

/// Nearest integer pixel (half rounds up).
inline int round_coord(double v) noexcept { return static_cast<int>(std::floor(v + 0.5)); }

/// One cross-modal correspondence: p_rgb in the RGB frame, p_x in the X frame.
struct Match {
    PixelCoord rgb;
    PixelCoord x;
    double conf = 0.0;

    bool operator==(const Match&) const = default;
};

struct MatchSet {
    int rgb_frame = 0;
    int x_frame = 0;
    std::vector<Match> matches;
    // Set when an input was too small or had no usable texture.
    bool warning = false;

    bool operator==(const MatchSet&) const = default;
};

/// Keeps the highest-confidence match per integer-rounded p_rgb (earliest
/// wins ties). Relative order of the survivors is preserved.
void deduplicate(MatchSet& ms);

/// Throws std::invalid_argument when a match lies outside its frame or has
/// confidence outside [0,1].
void validate(const MatchSet& ms, int rgb_width, int rgb_height, int x_width, int x_height);

class MatcherBackend {
public:
    virtual ~MatcherBackend() = default;
    virtual std::string_view name() const = 0;
    virtual MatchSet match_pair(int rgb_frame, const Image& rgb, int x_frame, const Image& x) const = 0;
};

/// Runs the backend, drops negative-confidence matches, validates and
/// deduplicates the result.
MatchSet match_pair(const MatcherBackend& backend, int rgb_frame, const Image& rgb, int x_frame,
                    const Image& x);

struct Accumulation {
    SparseMap sparse;
    ConfidenceMap conf;
};

/// Projects X values of every match onto the target RGB frame. Each integer
/// pixel receives the mean of the X values (bilinear at p_x, channel 0)
/// of all matches whose rounded p_rgb lands on it, and the mean of their
/// confidences. `x_frames[i]` supplies the X raster for `sets[i]`.
Accumulation accumulate_matches(std::span<const MatchSet> sets, std::span<const Image> x_frames,
                                int target_frame, int width, int height);

/// Text format: line 1 "rgb_frame x_frame", line 2 "count", then one
/// "r_rgb c_rgb r_x c_x conf" line per match.
void write_match_set(const MatchSet& ms, const std::filesystem::path& path);
MatchSet read_match_set(const std::filesystem::path& path);

/// Conventional cache file name: `<rgb>_<x>.txt`, zero-padded to 4 digits.
std::string match_file_name(int rgb_frame, int x_frame);

/// Reads precomputed matches from `dir/match_file_name(rgb, x)`.
class FileMatcher final : public MatcherBackend {
public:
    explicit FileMatcher(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::string_view name() const override { return "file"; }
    MatchSet match_pair(int rgb_frame, const Image& rgb, int x_frame, const Image& x) const override;

private:
    std::filesystem::path dir_;
};

}  // namespace rgbx::matching
