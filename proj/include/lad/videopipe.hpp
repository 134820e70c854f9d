#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lad/datamodel.hpp"
#include "lad/tensor.hpp"

namespace lad {

struct SegmentConfig {
    int clip_frames = 16;       // m
    int clips_per_segment = 5;  // K
    int frame_size = 224;

    int segment_frames() const { return clip_frames * clips_per_segment; }
    void validate() const;
    friend bool operator==(const SegmentConfig&, const SegmentConfig&) = default;
};

struct SegmentWindow {
    std::int64_t index = 0;
    std::vector<std::int64_t> frames;  // m*K frame indices, tail padded with the last frame
    int valid = 0;                     // leading entries that are real (unpadded) frames
};

std::int64_t segment_count(std::int64_t frame_count, const SegmentConfig& config);

/// Consecutive non-overlapping windows of m*K frames. A short final
/// window is completed by repeating the last frame index.
std::vector<SegmentWindow> segment_video(std::int64_t frame_count, const SegmentConfig& config);

// --- Frames -----------------------------------------------------------------

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // interleaved HxWx3

    std::uint8_t at(int r, int c, int ch) const {
        return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
};

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using FrameTensor = std::array<Plane<Scalar>, 3>;

// Bilinear resize (half-pixel centres) to frame_size x frame_size, then
// per-channel removal of the resized frame's mean.
FrameTensor<double> preprocess_frame(const RgbImage& frame, const SegmentConfig& config);

// Binary PPM (P6, maxval 255).
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

// Regular files of a frame directory, ordered by the integer embedded in
// their stem (ties by name).
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);

// --- Local features ---------------------------------------------------------

inline constexpr int kStreamDim = 1024;     // per-stream pooled feature length
inline constexpr int kGridSide = 4;
inline constexpr int kStreamChannels = 64;  // kStreamDim / (kGridSide * kGridSide)

enum class BackboneKind { import_rgb_flow, import_rgb_only, import_flow_only, synthetic };

std::string to_string(BackboneKind kind);
BackboneKind parse_backbone(std::string_view text);

struct BackboneSpec {
    BackboneKind kind = BackboneKind::import_rgb_flow;
    std::uint64_t seed = 0;  // synthetic only

    bool is_import() const { return kind != BackboneKind::synthetic; }
    int input_channels() const;
};

enum class Provenance { imported, synthetic };

struct ClipFeatureGrid {
    Mat<float> values;  // (4*4) x channels
    Provenance provenance = Provenance::imported;
};

// Per-video clip features: one row per clip, streams concatenated (RGB
// first, then flow) when both are present.
struct FeatureTable {
    std::string video_id;
    Mat<float> rows;
    Provenance provenance = Provenance::imported;
};

// Little-endian: uint32 clip count, uint32 dim, then clips*dim float32
// row-major. A `.txt` sidecar next to the file records provenance.
void write_feature_file(const std::filesystem::path& path, const FeatureTable& table,
                        const std::string& provenance_note);
FeatureTable read_feature_file(const std::filesystem::path& path, const std::string& video_id);

// Deterministic standard-normal clip rows derived from (seed, video_id, clip).
FeatureTable synthetic_features(const std::string& video_id, std::int64_t clips, std::uint64_t seed);

// Feature table for one video under the given backbone. Import kinds read
// `feature_root / video.feature_source`.
FeatureTable load_features(const VideoEntry& video, const BackboneSpec& backbone,
                           const std::filesystem::path& feature_root, const SegmentConfig& config);

// Maps one stream vector of length kStreamDim into channels
// [channel_offset, channel_offset + 64) of a 16-position grid.
void place_stream(std::span<const float> stream, int channel_offset, Mat<float>& grid);

/// K clip grids for one segment. Two-stream kinds give 4x4x128 grids,
/// single-stream kinds 4x4x64.
std::vector<ClipFeatureGrid> extract_features(const FeatureTable& table, std::int64_t segment,
                                              const SegmentConfig& config, BackboneKind kind);

}  // namespace lad
