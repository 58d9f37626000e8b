#include "rgbx/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace rgbx {

namespace fs = std::filesystem;

namespace {

/// Raw decoded raster: integer codes plus full-scale value.
struct RawRaster {
    int width = 0;
    int height = 0;
    int channels = 0;
    int max_code = 0;
    std::vector<std::uint16_t> codes;
};

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw ImageIoError("cannot open '" + path.string() + "' (" + mode + ")");
    }
    return f;
}

struct PngErrorContext {
    char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp msg) {
    auto* ctx = static_cast<PngErrorContext*>(png_get_error_ptr(png));
    std::snprintf(ctx->message, sizeof(ctx->message), "%s", msg);
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

// `allow_low_depth` admits 1/2/4-bit grayscale (masks only).
RawRaster read_png(const fs::path& path, bool allow_low_depth) {
    FilePtr file = open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw ImageIoError("'" + path.string() + "' is not a PNG file");
    }

    PngErrorContext ctx;
    PngReadGuard guard;
    RawRaster raw;
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;

    guard.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, on_png_error, on_png_warning);
    if (!guard.png) throw ImageIoError("png_create_read_struct failed");
    guard.info = png_create_info_struct(guard.png);
    if (!guard.info) throw ImageIoError("png_create_info_struct failed");

    if (setjmp(png_jmpbuf(guard.png))) {
        throw ImageIoError("PNG decode error in '" + path.string() + "': " + ctx.message);
    }

    png_init_io(guard.png, file.get());
    png_set_sig_bytes(guard.png, 8);
    png_read_info(guard.png, guard.info);

    const png_uint_32 width = png_get_image_width(guard.png, guard.info);
    const png_uint_32 height = png_get_image_height(guard.png, guard.info);
    const int depth = png_get_bit_depth(guard.png, guard.info);
    const int color = png_get_color_type(guard.png, guard.info);

    std::string unsupported;
    if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) {
        unsupported = "color type " + std::to_string(color) + " (only grayscale and RGB)";
    } else if (depth < 8 && !(allow_low_depth && color == PNG_COLOR_TYPE_GRAY)) {
        unsupported = "bit depth " + std::to_string(depth);
    }
    if (!unsupported.empty()) {
        throw ImageIoError("unsupported PNG in '" + path.string() + "': " + unsupported);
    }
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(guard.png);
    png_read_update_info(guard.png, guard.info);

    raw.width = static_cast<int>(width);
    raw.height = static_cast<int>(height);
    raw.channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const int out_depth = depth == 16 ? 16 : 8;
    raw.max_code = out_depth == 16 ? 65535 : 255;

    const std::size_t row_bytes = png_get_rowbytes(guard.png, guard.info);
    buffer.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = buffer.data() + r * row_bytes;
    png_read_image(guard.png, rows.data());
    png_read_end(guard.png, nullptr);

    const std::size_t n = static_cast<std::size_t>(width) * height * raw.channels;
    raw.codes.resize(n);
    if (out_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            raw.codes[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
        }
    } else {
        std::copy(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(n), raw.codes.begin());
    }
    return raw;
}

void write_png(const fs::path& path, const RawRaster& raw) {
    FilePtr file = open_file(path, "wb");
    PngErrorContext ctx;
    PngWriteGuard guard;
    const bool sixteen = raw.max_code > 255;
    const std::size_t row_bytes =
        static_cast<std::size_t>(raw.width) * raw.channels * (sixteen ? 2 : 1);
    std::vector<png_byte> buffer(row_bytes * raw.height);
    std::vector<png_bytep> rows(raw.height);

    for (std::size_t i = 0; i < raw.codes.size(); ++i) {
        if (sixteen) {
            buffer[2 * i] = static_cast<png_byte>(raw.codes[i] >> 8);
            buffer[2 * i + 1] = static_cast<png_byte>(raw.codes[i] & 0xff);
        } else {
            buffer[i] = static_cast<png_byte>(raw.codes[i]);
        }
    }
    for (int r = 0; r < raw.height; ++r) rows[r] = buffer.data() + r * row_bytes;

    guard.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, on_png_error, on_png_warning);
    if (!guard.png) throw ImageIoError("png_create_write_struct failed");
    guard.info = png_create_info_struct(guard.png);
    if (!guard.info) throw ImageIoError("png_create_info_struct failed");

    if (setjmp(png_jmpbuf(guard.png))) {
        throw ImageIoError("PNG encode error for '" + path.string() + "': " + ctx.message);
    }
    png_init_io(guard.png, file.get());
    png_set_IHDR(guard.png, guard.info, static_cast<png_uint_32>(raw.width),
                 static_cast<png_uint_32>(raw.height), sixteen ? 16 : 8,
                 raw.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(guard.png, guard.info);
    png_write_image(guard.png, rows.data());
    png_write_end(guard.png, nullptr);
}

// PGM header tokens may be separated by whitespace and '#' comments.
std::string next_pgm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

int parse_positive(const std::string& tok, const fs::path& path, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used == tok.size() && v > 0) return v;
    } catch (const std::exception&) {
    }
    throw ImageIoError("malformed PGM " + std::string(what) + " in '" + path.string() + "'");
}

RawRaster read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError("cannot open '" + path.string() + "'");
    const std::string magic = next_pgm_token(in);
    if (magic != "P5" && magic != "P2") {
        throw ImageIoError("'" + path.string() + "' is not a P2/P5 PGM file");
    }
    RawRaster raw;
    raw.width = parse_positive(next_pgm_token(in), path, "width");
    raw.height = parse_positive(next_pgm_token(in), path, "height");
    raw.max_code = parse_positive(next_pgm_token(in), path, "maxval");
    raw.channels = 1;
    if (raw.max_code > 65535) throw ImageIoError("PGM maxval above 65535 in '" + path.string() + "'");

    const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height;
    raw.codes.resize(n);
    if (magic == "P5") {
        const bool wide = raw.max_code > 255;
        std::vector<unsigned char> bytes(n * (wide ? 2 : 1));
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
            throw ImageIoError("truncated PGM data in '" + path.string() + "'");
        }
        for (std::size_t i = 0; i < n; ++i) {
            raw.codes[i] = wide ? static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1])
                                : bytes[i];
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::string tok = next_pgm_token(in);
            if (tok.empty()) throw ImageIoError("truncated PGM data in '" + path.string() + "'");
            int v = -1;
            try {
                v = std::stoi(tok);
            } catch (const std::exception&) {
            }
            if (v < 0 || v > raw.max_code) {
                throw ImageIoError("invalid PGM sample in '" + path.string() + "'");
            }
            raw.codes[i] = static_cast<std::uint16_t>(v);
        }
    }
    for (std::uint16_t c : raw.codes) {
        if (c > raw.max_code) throw ImageIoError("PGM sample above maxval in '" + path.string() + "'");
    }
    return raw;
}

void write_pgm(const fs::path& path, const RawRaster& raw) {
    if (raw.channels != 1) throw ImageIoError("PGM supports single-channel images only");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << raw.width << ' ' << raw.height << '\n' << raw.max_code << '\n';
    const bool wide = raw.max_code > 255;
    std::vector<unsigned char> bytes;
    bytes.reserve(raw.codes.size() * (wide ? 2 : 1));
    for (std::uint16_t c : raw.codes) {
        if (wide) bytes.push_back(static_cast<unsigned char>(c >> 8));
        bytes.push_back(static_cast<unsigned char>(c & 0xff));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ImageIoError("write failed for '" + path.string() + "'");
}

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

RawRaster read_raw(const fs::path& path, bool allow_low_depth) {
    if (!fs::exists(path)) throw ImageIoError("file not found: '" + path.string() + "'");
    const std::string ext = lower_extension(path);
    if (ext == ".png") return read_png(path, allow_low_depth);
    if (ext == ".pgm") return read_pgm(path);
    throw ImageIoError("unsupported image format '" + ext + "' for '" + path.string() + "'");
}

void write_raw(const fs::path& path, const RawRaster& raw) {
    const std::string ext = lower_extension(path);
    if (ext == ".png") return write_png(path, raw);
    if (ext == ".pgm") return write_pgm(path, raw);
    throw ImageIoError("unsupported image format '" + ext + "' for '" + path.string() + "'");
}

}  // namespace

fs::path units_sidecar_path(const fs::path& image_path) {
    fs::path p = image_path;
    p += ".units";
    return p;
}

std::optional<UnitsDescriptor> read_units_sidecar(const fs::path& image_path) {
    const fs::path side = units_sidecar_path(image_path);
    if (!fs::exists(side)) return std::nullopt;
    std::ifstream in(side);
    if (!in) throw ImageIoError("cannot open units sidecar '" + side.string() + "'");
    try {
        const auto j = nlohmann::json::parse(in);
        UnitsDescriptor d;
        d.units = parse_units(j.at("units").get<std::string>());
        d.scale = j.at("scale").get<double>();
        d.offset = j.at("offset").get<double>();
        if (!std::isfinite(d.scale) || !std::isfinite(d.offset) || d.scale == 0.0) {
            throw ImageIoError("degenerate scale/offset");
        }
        return d;
    } catch (const std::exception& e) {
        throw ImageIoError("malformed units sidecar '" + side.string() + "': " + e.what());
    }
}

void write_units_sidecar(const fs::path& image_path, const UnitsDescriptor& desc) {
    const fs::path side = units_sidecar_path(image_path);
    std::ofstream out(side);
    if (!out) throw ImageIoError("cannot write units sidecar '" + side.string() + "'");
    nlohmann::json j;
    j["units"] = std::string(to_string(desc.units));
    j["scale"] = desc.scale;
    j["offset"] = desc.offset;
    out << j.dump(2) << '\n';
}

Image load_image(const fs::path& path) {
    const RawRaster raw = read_raw(path, false);
    const auto sidecar = read_units_sidecar(path);
    std::vector<double> data(raw.codes.size());
    const double full = static_cast<double>(raw.max_code);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = sidecar ? raw.codes[i] * sidecar->scale + sidecar->offset : raw.codes[i] / full;
    }
    return Image(raw.width, raw.height, raw.channels, std::move(data),
                 sidecar ? sidecar->units : Units::normalized);
}

void save_image(const Image& img, const fs::path& path, const SaveOptions& opts) {
    if (img.empty()) throw ImageIoError("cannot save an empty image");
    img.require_finite();
    RawRaster raw;
    raw.width = img.width();
    raw.height = img.height();
    raw.channels = img.channels();
    auto data = img.data();
    raw.codes.resize(data.size());

    std::optional<UnitsDescriptor> desc = opts.units;
    if (img.units() == Units::celsius && !desc) {
        const auto [lo, hi] = value_range(data);
        desc = UnitsDescriptor{Units::celsius, hi > lo ? (hi - lo) / 65535.0 : 1.0, lo};
    }

    if (desc) {
        raw.max_code = desc->units == Units::celsius || opts.depth == BitDepth::sixteen ? 65535 : 255;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double code = std::round((data[i] - desc->offset) / desc->scale);
            raw.codes[i] = static_cast<std::uint16_t>(std::clamp(code, 0.0, double(raw.max_code)));
        }
    } else {
        raw.max_code = opts.depth == BitDepth::sixteen ? 65535 : 255;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double code = std::round(std::clamp(data[i], 0.0, 1.0) * raw.max_code);
            raw.codes[i] = static_cast<std::uint16_t>(code);
        }
    }

    write_raw(path, raw);
    if (desc) {
        write_units_sidecar(path, *desc);
    } else {
        std::error_code ec;
        fs::remove(units_sidecar_path(path), ec);
    }
}

Mask load_mask(const fs::path& path) {
    const RawRaster raw = read_raw(path, true);
    if (raw.channels != 1) throw ImageIoError("mask '" + path.string() + "' must be grayscale");
    Mask mask(raw.width, raw.height);
    for (std::size_t i = 0; i < raw.codes.size(); ++i) mask.bits[i] = raw.codes[i] != 0 ? 1 : 0;
    return mask;
}

void save_mask(const Mask& mask, const fs::path& path) {
    RawRaster raw;
    raw.width = mask.width;
    raw.height = mask.height;
    raw.channels = 1;
    raw.max_code = 255;
    raw.codes.resize(mask.bits.size());
    for (std::size_t i = 0; i < mask.bits.size(); ++i) raw.codes[i] = mask.bits[i] ? 255 : 0;
    write_raw(path, raw);
}

}  // namespace rgbx
