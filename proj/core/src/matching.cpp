#include "rgbx/matching.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace rgbx::matching {

namespace fs = std::filesystem;

void deduplicate(MatchSet& ms) {
    std::unordered_map<long long, std::size_t> best;  // rounded key -> index into matches
    best.reserve(ms.matches.size());
    std::vector<bool> keep(ms.matches.size(), false);
    for (std::size_t i = 0; i < ms.matches.size(); ++i) {
        const Match& m = ms.matches[i];
        const long long key = (static_cast<long long>(round_coord(m.rgb.row)) << 32) ^
                              static_cast<long long>(static_cast<unsigned>(round_coord(m.rgb.col)));
        auto [it, inserted] = best.try_emplace(key, i);
        if (inserted) {
            keep[i] = true;
        } else if (m.conf > ms.matches[it->second].conf) {
            keep[it->second] = false;
            keep[i] = true;
            it->second = i;
        }
    }
    std::vector<Match> out;
    out.reserve(best.size());
    for (std::size_t i = 0; i < ms.matches.size(); ++i) {
        if (keep[i]) out.push_back(ms.matches[i]);
    }
    ms.matches = std::move(out);
}

void validate(const MatchSet& ms, int rgb_width, int rgb_height, int x_width, int x_height) {
    auto inside = [](const PixelCoord& p, int w, int h) {
        return p.row >= 0.0 && p.col >= 0.0 && p.row <= h - 1 && p.col <= w - 1;
    };
    for (const Match& m : ms.matches) {
        if (!(m.conf >= 0.0 && m.conf <= 1.0)) {
            throw std::invalid_argument("match confidence outside [0,1]");
        }
        if (!inside(m.rgb, rgb_width, rgb_height)) {
            throw std::invalid_argument("match outside RGB frame bounds");
        }
        if (!inside(m.x, x_width, x_height)) {
            throw std::invalid_argument("match outside X frame bounds");
        }
    }
}

MatchSet match_pair(const MatcherBackend& backend, int rgb_frame, const Image& rgb, int x_frame,
                    const Image& x) {
    MatchSet ms = backend.match_pair(rgb_frame, rgb, x_frame, x);
    ms.rgb_frame = rgb_frame;
    ms.x_frame = x_frame;
    std::erase_if(ms.matches, [](const Match& m) { return m.conf < 0.0; });
    validate(ms, rgb.width(), rgb.height(), x.width(), x.height());
    deduplicate(ms);
    return ms;
}

Accumulation accumulate_matches(std::span<const MatchSet> sets, std::span<const Image> x_frames,
                                int target_frame, int width, int height) {
    if (sets.size() != x_frames.size()) {
        throw std::invalid_argument("accumulate_matches: one X frame required per match set");
    }
    for (const MatchSet& ms : sets) {
        if (ms.rgb_frame != target_frame) {
            throw std::invalid_argument("accumulate_matches: match set targets RGB frame " +
                                        std::to_string(ms.rgb_frame) + ", expected " +
                                        std::to_string(target_frame));
        }
    }

    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    std::vector<double> value_sum(n, 0.0);
    std::vector<double> conf_sum(n, 0.0);
    Accumulation acc{SparseMap(width, height), ConfidenceMap(width, height)};

    for (std::size_t s = 0; s < sets.size(); ++s) {
        const Image& x = x_frames[s];
        for (const Match& m : sets[s].matches) {
            const int r = round_coord(m.rgb.row);
            const int c = round_coord(m.rgb.col);
            if (r < 0 || c < 0 || r >= height || c >= width) {
                throw std::invalid_argument("accumulate_matches: p_rgb outside target frame");
            }
            const auto v = sample_bilinear(x, m.x.row, m.x.col);
            if (!v) throw std::invalid_argument("accumulate_matches: p_x outside X frame");
            const std::size_t i = static_cast<std::size_t>(r) * width + c;
            value_sum[i] += *v;
            conf_sum[i] += m.conf;
            ++acc.sparse.counts[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (acc.sparse.counts[i] == 0) continue;
        const double k = acc.sparse.counts[i];
        acc.sparse.values[i] = value_sum[i] / k;
        acc.conf.conf[i] = conf_sum[i] / k;
    }
    return acc;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok, const fs::path& path, int line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": bad number '" +
                                 tok + "'");
    }
    return v;
}

}  // namespace

void write_match_set(const MatchSet& ms, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write match file '" + path.string() + "'");
    out << ms.rgb_frame << ' ' << ms.x_frame << '\n' << ms.matches.size() << '\n';
    for (const Match& m : ms.matches) {
        out << format_double(m.rgb.row) << ' ' << format_double(m.rgb.col) << ' '
            << format_double(m.x.row) << ' ' << format_double(m.x.col) << ' '
            << format_double(m.conf) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

MatchSet read_match_set(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open match file '" + path.string() + "'");
    MatchSet ms;
    std::string line;
    auto fail = [&](int lineno, const std::string& what) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + what);
    };

    if (!std::getline(in, line)) fail(1, "missing frame id header");
    {
        std::istringstream ss(line);
        if (!(ss >> ms.rgb_frame >> ms.x_frame)) fail(1, "expected 'rgb_frame x_frame'");
    }
    long long count = -1;
    if (!std::getline(in, line)) fail(2, "missing match count");
    {
        std::istringstream ss(line);
        if (!(ss >> count) || count < 0) fail(2, "expected non-negative match count");
    }
    ms.matches.reserve(static_cast<std::size_t>(count));
    for (long long k = 0; k < count; ++k) {
        const int lineno = static_cast<int>(k) + 3;
        if (!std::getline(in, line)) fail(lineno, "fewer matches than declared");
        std::istringstream ss(line);
        std::string tok[5];
        for (auto& t : tok) {
            if (!(ss >> t)) fail(lineno, "expected 5 fields");
        }
        Match m;
        m.rgb.row = parse_double(tok[0], path, lineno);
        m.rgb.col = parse_double(tok[1], path, lineno);
        m.x.row = parse_double(tok[2], path, lineno);
        m.x.col = parse_double(tok[3], path, lineno);
        m.conf = parse_double(tok[4], path, lineno);
        ms.matches.push_back(m);
    }
    return ms;
}

std::string match_file_name(int rgb_frame, int x_frame) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d_%04d.txt", rgb_frame, x_frame);
    return buf;
}

MatchSet FileMatcher::match_pair(int rgb_frame, const Image&, int x_frame, const Image&) const {
    const fs::path p = dir_ / match_file_name(rgb_frame, x_frame);
    if (!fs::exists(p)) {
        MatchSet empty;
        empty.rgb_frame = rgb_frame;
        empty.x_frame = x_frame;
        empty.warning = true;
        return empty;
    }
    MatchSet ms = read_match_set(p);
    if (ms.rgb_frame != rgb_frame || ms.x_frame != x_frame) {
        throw std::runtime_error("match file '" + p.string() + "' declares frames " +
                                 std::to_string(ms.rgb_frame) + "/" + std::to_string(ms.x_frame));
    }
    return ms;
}

}  // namespace rgbx::matching
