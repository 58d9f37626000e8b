#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "rgbx/image.hpp"

namespace rgbx {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class BitDepth { eight = 8, sixteen = 16 };

struct SaveOptions {
    BitDepth depth = BitDepth::sixteen;
    // Required mapping for celsius images. When absent for a celsius image,
    // offset = min and scale = (max - min) / 65535 are chosen and the image
    // is always written at 16 bits.
    std::optional<UnitsDescriptor> units;
};

/// Reads 8/16-bit grayscale or RGB PNG, or PGM (P2/P5). Codes are scaled by
/// the format's full-scale value unless a `<path>.units` sidecar exists, in
/// which case value = code * scale + offset and the sidecar's units apply.
Image load_image(const std::filesystem::path& path);

/// Format is chosen by extension (.png or .pgm). Normalized values are
/// clamped to [0,1] before quantization.
void save_image(const Image& img, const std::filesystem::path& path, const SaveOptions& opts = {});

/// 1/2/4/8/16-bit grayscale PNG or PGM; any non-zero code is true.
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path);

std::filesystem::path units_sidecar_path(const std::filesystem::path& image_path);
std::optional<UnitsDescriptor> read_units_sidecar(const std::filesystem::path& image_path);
void write_units_sidecar(const std::filesystem::path& image_path, const UnitsDescriptor& desc);

}  // namespace rgbx
