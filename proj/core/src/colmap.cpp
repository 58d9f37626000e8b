#include "rgbx/colmap.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace rgbx::colmap {

namespace fs = std::filesystem;

int camera_param_count(const std::string& model) {
    static const std::unordered_map<std::string, int> kCounts{
        {"SIMPLE_PINHOLE", 3}, {"PINHOLE", 4},       {"SIMPLE_RADIAL", 4},     {"RADIAL", 5},
        {"OPENCV", 8},         {"OPENCV_FISHEYE", 8}, {"FULL_OPENCV", 12},     {"FOV", 5},
        {"SIMPLE_RADIAL_FISHEYE", 4}, {"RADIAL_FISHEYE", 5}, {"THIN_PRISM_FISHEYE", 12},
    };
    const auto it = kCounts.find(model);
    return it == kCounts.end() ? -1 : it->second;
}

const ImagePose* Model::find_image(const std::string& name) const {
    for (const auto& [id, img] : images) {
        if (img.name == name) return &img;
    }
    return nullptr;
}

namespace {

bool is_blank_or_comment(const std::string& line) {
    const auto pos = line.find_first_not_of(" \t\r");
    return pos == std::string::npos || line[pos] == '#';
}

[[noreturn]] void fail(const fs::path& file, int line, const std::string& what) {
    throw ColmapError(file.string() + ":" + std::to_string(line) + ": " + what);
}

void parse_cameras(const fs::path& file, Model& model) {
    std::ifstream in(file);
    if (!in) throw ColmapError("cannot open '" + file.string() + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        std::istringstream ss(line);
        Camera cam;
        if (!(ss >> cam.id >> cam.model >> cam.width >> cam.height)) fail(file, lineno, "malformed camera line");
        double v = 0.0;
        while (ss >> v) cam.params.push_back(v);
        if (!ss.eof()) fail(file, lineno, "non-numeric camera parameter");
        const int expected = camera_param_count(cam.model);
        cam.known_model = expected >= 0;
        if (cam.known_model && static_cast<int>(cam.params.size()) != expected) {
            fail(file, lineno,
                 cam.model + " expects " + std::to_string(expected) + " parameters, got " +
                     std::to_string(cam.params.size()));
        }
        if (cam.width <= 0 || cam.height <= 0) fail(file, lineno, "camera size must be positive");
        if (!model.cameras.emplace(cam.id, cam).second) fail(file, lineno, "duplicate camera id");
    }
}

void parse_images(const fs::path& file, Model& model) {
    std::ifstream in(file);
    if (!in) throw ColmapError("cannot open '" + file.string() + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        std::istringstream ss(line);
        ImagePose img;
        if (!(ss >> img.id >> img.qvec[0] >> img.qvec[1] >> img.qvec[2] >> img.qvec[3] >> img.tvec[0] >>
              img.tvec[1] >> img.tvec[2] >> img.camera_id)) {
            fail(file, lineno, "malformed image line");
        }
        ss >> std::ws;
        std::getline(ss, img.name);
        while (!img.name.empty() && (img.name.back() == '\r' || img.name.back() == ' ')) img.name.pop_back();
        if (img.name.empty()) fail(file, lineno, "image line lacks a file name");
        const double norm = std::sqrt(img.qvec[0] * img.qvec[0] + img.qvec[1] * img.qvec[1] +
                                      img.qvec[2] * img.qvec[2] + img.qvec[3] * img.qvec[3]);
        if (std::abs(norm - 1.0) > 1e-6) {
            fail(file, lineno, "quaternion norm " + std::to_string(norm) + " is not 1");
        }
        if (!model.cameras.count(img.camera_id)) fail(file, lineno, "unknown camera id");
        if (!model.images.emplace(img.id, img).second) fail(file, lineno, "duplicate image id");
        // The 2D point line follows unconditionally, even when empty.
        std::getline(in, line);
        ++lineno;
    }
}

}  // namespace

Model parse_model(const fs::path& dir) {
    Model model;
    parse_cameras(dir / "cameras.txt", model);
    parse_images(dir / "images.txt", model);
    return model;
}

void write_model(const Model& model, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream cams(dir / "cameras.txt");
    cams.precision(17);
    cams << "# Camera list with one line of data per camera:\n"
         << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
    for (const auto& [id, cam] : model.cameras) {
        cams << id << ' ' << cam.model << ' ' << cam.width << ' ' << cam.height;
        for (double p : cam.params) cams << ' ' << p;
        cams << '\n';
    }
    std::ofstream imgs(dir / "images.txt");
    imgs.precision(17);
    imgs << "# Image list with two lines of data per image:\n"
         << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
         << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
    for (const auto& [id, img] : model.images) {
        imgs << id;
        for (double q : img.qvec) imgs << ' ' << q;
        for (double t : img.tvec) imgs << ' ' << t;
        imgs << ' ' << img.camera_id << ' ' << img.name << "\n\n";
    }
    std::ofstream pts(dir / "points3D.txt");
    pts << "# 3D point list (empty)\n";
    if (!cams || !imgs || !pts) throw ColmapError("failed writing model to '" + dir.string() + "'");
}

}  // namespace rgbx::colmap
