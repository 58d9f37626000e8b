#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rgbx {

enum class Units { normalized, celsius };

std::string_view to_string(Units units);
Units parse_units(std::string_view text);

/// Linear map from stored integer codes to physical values:
/// value = code * scale + offset.
struct UnitsDescriptor {
    Units units = Units::normalized;
    double scale = 1.0;
    double offset = 0.0;

    bool operator==(const UnitsDescriptor&) const = default;
};

/// Dense row-major raster. Pixel (row, col) channel ch lives at
/// ((row * width) + col) * channels + ch.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, Units units = Units::normalized);
    Image(int width, int height, int channels, std::vector<double> data,
          Units units = Units::normalized);

    static Image filled(int width, int height, double value, Units units = Units::normalized);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    Units units() const noexcept { return units_; }
    void set_units(Units units) noexcept { units_ = units; }

    bool empty() const noexcept { return data_.empty(); }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    bool same_shape(const Image& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }
    bool contains(int row, int col) const noexcept {
        return row >= 0 && col >= 0 && row < height_ && col < width_;
    }

    double& at(int row, int col, int ch = 0) noexcept {
        return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
    }
    double at(int row, int col, int ch = 0) const noexcept {
        return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    /// Throws std::invalid_argument if any value is NaN/Inf.
    void require_finite() const;

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    Units units_ = Units::normalized;
    std::vector<double> data_;
};

/// Partially observed single-channel raster. A pixel is void iff its count is 0.
struct SparseMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    std::vector<std::uint32_t> counts;

    SparseMap() = default;
    SparseMap(int width, int height);

    std::size_t size() const noexcept { return values.size(); }
    bool known(std::size_t i) const noexcept { return counts[i] != 0; }
    std::size_t known_count() const noexcept;

    void set(std::size_t i, double value, std::uint32_t count = 1) {
        values[i] = value;
        counts[i] = count;
    }
    void clear(std::size_t i) {
        values[i] = 0.0;
        counts[i] = 0;
    }

    /// Float rendering with void pixels written as -1.
    Image to_image_with_void_marker() const;

    bool operator==(const SparseMap&) const = default;
};

struct ConfidenceMap {
    int width = 0;
    int height = 0;
    std::vector<double> conf;

    ConfidenceMap() = default;
    ConfidenceMap(int width, int height, double value = 0.0);

    std::size_t size() const noexcept { return conf.size(); }

    bool operator==(const ConfidenceMap&) const = default;
};

struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(int width, int height, bool value = false);

    bool operator[](std::size_t i) const noexcept { return bits[i] != 0; }
    std::size_t count() const noexcept;

    bool operator==(const Mask&) const = default;
};

/// Checks the sparse/confidence pairing invariants: matching dimensions,
/// conf in [0,1], conf == 0 on void pixels, finite known values.
void require_consistent(const SparseMap& sparse, const ConfidenceMap& conf);

/// BT.601 luma for 3-channel input, identity for 1-channel.
Image to_grayscale(const Image& img);

/// Bilinear sample at subpixel (row, col). Returns nullopt outside
/// [0, height-1] x [0, width-1].
std::optional<double> sample_bilinear(const Image& img, double row, double col, int ch = 0);

/// Wraps a single-channel image as a fully observed SparseMap.
SparseMap dense_to_sparse(const Image& img);

/// Returns (min, max) over all values. Empty image throws.
std::pair<double, double> value_range(std::span<const double> values);

}  // namespace rgbx
