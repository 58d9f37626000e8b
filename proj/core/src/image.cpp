#include "rgbx/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rgbx {

std::string_view to_string(Units units) {
    switch (units) {
    case Units::normalized: return "normalized";
    case Units::celsius: return "celsius";
    }
    return "normalized";
}

Units parse_units(std::string_view text) {
    if (text == "normalized") return Units::normalized;
    if (text == "celsius") return Units::celsius;
    throw std::invalid_argument("unknown units tag '" + std::string(text) + "'");
}

namespace {

void check_dims(int width, int height, int channels) {
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("image must have 1 or 3 channels, got " +
                                    std::to_string(channels));
    }
}

}  // namespace

Image::Image(int width, int height, int channels, Units units)
    : width_(width), height_(height), channels_(channels), units_(units) {
    check_dims(width, height, channels);
    data_.assign(pixel_count() * static_cast<std::size_t>(channels), 0.0);
}

Image::Image(int width, int height, int channels, std::vector<double> data, Units units)
    : width_(width), height_(height), channels_(channels), units_(units), data_(std::move(data)) {
    check_dims(width, height, channels);
    if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
        throw std::invalid_argument("image data length does not match width*height*channels");
    }
    require_finite();
}

Image Image::filled(int width, int height, double value, Units units) {
    Image img(width, height, 1, units);
    std::fill(img.data_.begin(), img.data_.end(), value);
    return img;
}

void Image::require_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) throw std::invalid_argument("image contains non-finite values");
    }
}

SparseMap::SparseMap(int w, int h)
    : width(w), height(h),
      values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0),
      counts(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

std::size_t SparseMap::known_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(counts.begin(), counts.end(), [](std::uint32_t c) { return c != 0; }));
}

Image SparseMap::to_image_with_void_marker() const {
    Image out(width, height, 1);
    auto data = out.data();
    for (std::size_t i = 0; i < size(); ++i) data[i] = known(i) ? values[i] : -1.0;
    return out;
}

ConfidenceMap::ConfidenceMap(int w, int h, double value)
    : width(w), height(h),
      conf(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), value) {}

Mask::Mask(int w, int h, bool value)
    : width(w), height(h),
      bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), value ? 1 : 0) {}

std::size_t Mask::count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

void require_consistent(const SparseMap& sparse, const ConfidenceMap& conf) {
    if (sparse.width != conf.width || sparse.height != conf.height ||
        sparse.values.size() != sparse.counts.size() || sparse.size() != conf.size()) {
        throw std::invalid_argument("sparse map and confidence map dimensions differ");
    }
    for (std::size_t i = 0; i < sparse.size(); ++i) {
        const double c = conf.conf[i];
        if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("confidence outside [0,1]");
        if (!sparse.known(i) && c != 0.0) {
            throw std::invalid_argument("non-zero confidence on a void pixel");
        }
        if (sparse.known(i) && !std::isfinite(sparse.values[i])) {
            throw std::invalid_argument("non-finite value at a known pixel");
        }
    }
}

Image to_grayscale(const Image& img) {
    if (img.channels() == 1) return img;
    if (img.channels() != 3) throw std::invalid_argument("to_grayscale expects 1 or 3 channels");
    Image out(img.width(), img.height(), 1, img.units());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        dst[i] = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    }
    return out;
}

std::optional<double> sample_bilinear(const Image& img, double row, double col, int ch) {
    const int w = img.width();
    const int h = img.height();
    if (!(row >= 0.0 && col >= 0.0 && row <= h - 1 && col <= w - 1)) return std::nullopt;
    const int r0 = static_cast<int>(std::floor(row));
    const int c0 = static_cast<int>(std::floor(col));
    const int r1 = std::min(r0 + 1, h - 1);
    const int c1 = std::min(c0 + 1, w - 1);
    const double fr = row - r0;
    const double fc = col - c0;
    const double top = (1.0 - fc) * img.at(r0, c0, ch) + fc * img.at(r0, c1, ch);
    const double bottom = (1.0 - fc) * img.at(r1, c0, ch) + fc * img.at(r1, c1, ch);
    return (1.0 - fr) * top + fr * bottom;
}

SparseMap dense_to_sparse(const Image& img) {
    if (img.channels() != 1) throw std::invalid_argument("dense_to_sparse expects 1 channel");
    SparseMap out(img.width(), img.height());
    auto data = img.data();
    for (std::size_t i = 0; i < out.size(); ++i) out.set(i, data[i], 1);
    return out;
}

std::pair<double, double> value_range(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("value_range of empty data");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return {*lo, *hi};
}

}  // namespace rgbx
