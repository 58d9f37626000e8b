#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rgbx/colmap.hpp"
#include "rgbx/config.hpp"
#include "rgbx/densify.hpp"
#include "rgbx/fuse_filter.hpp"
#include "rgbx/homography.hpp"
#include "rgbx/image.hpp"
#include "rgbx/matching.hpp"
#include "rgbx/metrics.hpp"
#include "rgbx/synthbench.hpp"

namespace rgbx::pipeline {

/// Frames of one capture. X frames and masks may be missing per frame.
struct Sequence {
    std::vector<std::string> names;  // file names shared by rgb/ and x/
    std::vector<Image> rgb;
    std::vector<std::optional<Image>> x;
    std::vector<std::optional<Mask>> masks;

    int size() const noexcept { return static_cast<int>(rgb.size()); }
};

/// Reads <dir>/rgb/*.png, X frames from <dir>/x_raw/ (or <dir>/x/) and
/// optional masks from <dir>/masks/, all keyed by the RGB file name.
Sequence load_sequence(const std::filesystem::path& dir);

/// In-memory sequence from a synthetic bundle (X = x_raw, masks included).
Sequence sequence_from_bundle(const synth::GroundTruthBundle& bundle, bool with_masks = true);

/// Frames n - window/2 .. n + window/2 clipped to [0, total).
std::vector<int> frame_window(int n, int total, int window);

std::uint64_t frame_seed(std::uint64_t seed, int frame, std::uint64_t stage);

struct FrontEnd {
    std::vector<matching::MatchSet> sets;
    std::size_t match_count = 0;
    std::optional<matching::HomographyFit> homography;
    std::optional<matching::WarpResult> warped;  // X of frame n in RGB coordinates
    SparseMap sparse;                            // after area sampling
    ConfidenceMap conf;
    std::size_t accumulated = 0;
    std::size_t area_sampled = 0;
    std::vector<std::string> warnings;
};

/// Windowed matching, accumulation, homography warp and area sampling.
FrontEnd front_end(const PipelineConfig& cfg, const Sequence& seq, const matching::MatcherBackend& backend,
                   int n);

struct Fusion {
    densify::MultiLevelResult levels;
    Image fused;
};

/// densify_multilevel, enhance per level, mean fusion. Throws DensifyError
/// when no level survives.
Fusion densify_and_fuse(const PipelineConfig& cfg, const densify::AffinityField& aff, const Image& rgb,
                        const SparseMap& sparse, const ConfidenceMap& conf);

struct Refinement {
    fuse::FilterResult filter;
    std::optional<double> score_before;  // self-match score of the input
    std::optional<Image> fine;           // nullopt: nothing survived the filter
};

/// Self-matching, concentration filter and single-level re-densification.
Refinement self_match_refine(const PipelineConfig& cfg, const densify::AffinityField& aff, const Image& rgb,
                             const Image& xd);

enum class FrameStatus { ok, fallback, failed };
std::string_view to_string(FrameStatus s);

enum class OutputStage { fine, fused, warped, none };
std::string_view to_string(OutputStage s);

struct FrameResult {
    int frame = 0;
    std::string name;
    FrameStatus status = FrameStatus::failed;
    OutputStage stage = OutputStage::none;
    Image output;
    std::vector<std::string> warnings;

    std::size_t matches = 0;
    std::size_t accumulated = 0;
    std::size_t area_sampled = 0;
    std::size_t homography_inliers = 0;
    bool homography_ok = false;
    std::vector<double> omitted_levels;
    std::vector<Image> levels;  // densified per-threshold outputs
    std::vector<double> level_thresholds;
    std::optional<Image> fused;
    std::optional<Image> warped;
    std::optional<Mask> rejected;
    double q = 1.0;
    double theta = 0.0;
    std::size_t rejected_patches = 0;
    bool self_match_degenerate = false;
    std::optional<double> score_before;
    std::optional<double> score_after;
};

/// Runs every stage for RGB frame n with the fallback ladder
/// fine -> fused -> warped -> failed. Never throws for per-frame faults.
FrameResult process_frame(const PipelineConfig& cfg, const Sequence& seq, const matching::MatcherBackend& backend,
                          int n);

/// All frames on a pool of cfg.workers threads; results in frame order.
std::vector<FrameResult> run_frames(const PipelineConfig& cfg, const Sequence& seq,
                                    const matching::MatcherBackend& backend);

/// Owns the backend plus whatever it borrows (the oracle's bundle).
struct BackendHandle {
    std::unique_ptr<synth::GroundTruthBundle> bundle;
    std::unique_ptr<matching::MatcherBackend> backend;
};

/// oracle: regenerates the bundle from <input>/gt/meta.
BackendHandle make_backend(const PipelineConfig& cfg);

struct ManifestFrame {
    std::string name;
    FrameStatus status = FrameStatus::failed;
    OutputStage stage = OutputStage::none;
    std::string output;  // relative to the output directory
    std::string sha256;
    std::vector<std::string> warnings;
};

struct RunManifest {
    std::string config_json;
    std::vector<ManifestFrame> frames;
    std::vector<std::string> warnings;
    std::string report_csv;   // relative paths
    std::string metrics_csv;  // empty when no GT is available
    std::string combined_sha256;

    std::size_t failed_count() const;
    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

/// Loads cfg.input_dir, processes every frame, writes x_final/, report.csv,
/// metrics (when x_gt/ exists), optional level dumps and manifest.json to
/// cfg.output_dir. Throws for an empty input.
RunManifest run_pipeline(const PipelineConfig& cfg);

RunManifest load_manifest(const std::filesystem::path& path);

/// Scores the written outputs of a finished run against <input>/x_gt/.
/// Frames without output or GT are skipped; consistency is filled when
/// every frame is scored and <input>/gt/meta exists.
metrics::MetricReport evaluate_run(const RunManifest& run, const std::filesystem::path& run_dir,
                                   const std::filesystem::path& input_dir, double tau = 0.1, double lambda = 0.1);

/// Writes the per-frame stage report (q, theta, rejected count, self-match
/// scores before and after refinement, fallbacks).
void write_stage_report(const std::vector<FrameResult>& results, std::ostream& os);

struct ExportOptions {
    std::filesystem::path run_dir;    // holds manifest.json and x_final/
    std::filesystem::path rgb_dir;    // defaults to <run input>/rgb
    std::filesystem::path model_dir;  // COLMAP text model to copy
    std::filesystem::path out_dir;
    // Run frame name -> COLMAP image name, for differing conventions.
    std::map<std::string, std::string> name_map;
};

struct ExportResult {
    std::size_t exported = 0;
    std::vector<std::string> warnings;
};

/// Writes images/, x/ (16-bit PNG plus units sidecars), sparse/0/ (the
/// copied text model) and manifest.json mapping image ids to X files.
/// Frames without a pose or without an output are skipped with a warning;
/// throws when no frame overlaps the model.
ExportResult export_dataset(const RunManifest& run, const colmap::Model& model, const ExportOptions& opts);

}  // namespace rgbx::pipeline
