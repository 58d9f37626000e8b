#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgbx::colmap {

class ColmapError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Camera {
    std::uint32_t id = 0;
    std::string model;  // kept verbatim, including unknown model names
    int width = 0;
    int height = 0;
    std::vector<double> params;
    bool known_model = true;

    bool operator==(const Camera&) const = default;
};

struct ImagePose {
    std::uint32_t id = 0;
    std::array<double, 4> qvec{1, 0, 0, 0};  // qw, qx, qy, qz
    std::array<double, 3> tvec{0, 0, 0};
    std::uint32_t camera_id = 0;
    std::string name;

    bool operator==(const ImagePose&) const = default;
};

struct Model {
    std::map<std::uint32_t, Camera> cameras;
    std::map<std::uint32_t, ImagePose> images;

    bool empty() const noexcept { return cameras.empty() && images.empty(); }
    /// Image with the given file name, or nullptr.
    const ImagePose* find_image(const std::string& name) const;

    bool operator==(const Model&) const = default;
};

/// Number of intrinsic parameters for a known camera model, -1 if unknown.
int camera_param_count(const std::string& model);

/// Parses cameras.txt and images.txt from `dir`. Errors carry file:line.
Model parse_model(const std::filesystem::path& dir);

/// Writes cameras.txt, images.txt and an empty points3D.txt.
void write_model(const Model& model, const std::filesystem::path& dir);

}  // namespace rgbx::colmap
