#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lad/category.hpp"

namespace lad {

struct FrameInterval {
    std::int64_t start = 0;
    std::int64_t end = 0;  // inclusive

    friend bool operator==(const FrameInterval&, const FrameInterval&) = default;
};

struct AnnotationRecord {
    std::string video_id;
    std::string annotator_id;
    std::vector<FrameInterval> intervals;
};

// Sorts and merges overlapping intervals. Throws
// ValidationError for negative starts or end < start.
std::vector<FrameInterval> normalize_intervals(std::vector<FrameInterval> intervals);

struct FrameLabelTrack {
    std::string video_id;
    std::vector<std::uint8_t> labels;  // 1 = abnormal

    std::size_t size() const { return labels.size(); }
    std::size_t abnormal_count() const;
};

struct VideoEntry {
    std::string video_id;
    AnomalyCategory category = AnomalyCategory::Crash;
    std::int64_t frame_count = 0;
    double fps = 25.0;
    FrameLabelTrack frame_labels;
    std::string feature_source = "synthetic";

    bool is_abnormal() const;
};

// Throws ValidationError when the entry breaks a VideoEntry invariant.
void validate(const VideoEntry& video);

/// Per-frame mean of the annotators' binary marks, binarized with
/// `mean >= 0.5` (a tie counts as abnormal, so for an odd number of
/// annotators this is exactly majority vote).
FrameLabelTrack aggregate_frame_labels(std::span<const AnnotationRecord> records,
                                       std::int64_t frame_count);

// True iff any frame is abnormal.
bool video_label(const FrameLabelTrack& track);

enum class SupervisionMode { unsupervised, weakly, fully };

std::string to_string(SupervisionMode mode);
SupervisionMode parse_mode(std::string_view text);

struct SplitSpec {
    SupervisionMode mode = SupervisionMode::fully;
    std::uint64_t seed = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;

    // What training may read under this mode.
    bool frame_labels_visible() const { return mode == SupervisionMode::fully; }
    bool video_labels_visible() const { return mode != SupervisionMode::unsupervised; }
    bool categories_visible() const { return mode == SupervisionMode::fully; }
    std::string visible_labels() const;
};

struct TestQuota {
    int abnormal = 20;
    int normal = 20;
};

/// Per-category random test selection; everything else is training.
/// Unsupervised mode keeps the same test set and drops abnormal videos
/// from training.
SplitSpec make_split(std::span<const VideoEntry> catalog, SupervisionMode mode,
                     TestQuota quota, std::uint64_t seed);

struct CategoryStats {
    AnomalyCategory category;
    int videos = 0;
    int abnormal_videos = 0;
    std::optional<double> anomaly_ratio;  // absent when no abnormal videos
};

struct VideoStats {
    std::string video_id;
    AnomalyCategory category;
    std::int64_t frame_count = 0;
    double anomaly_ratio = 0.0;
};

struct DatasetStats {
    std::vector<CategoryStats> categories;  // always kNumCategories rows
    std::vector<VideoStats> videos;
};

DatasetStats compute_stats(std::span<const VideoEntry> catalog);

// Replaces every label track with its video-level label broadcast to all
// frames (for sets that only ship video-level labels).
void broadcast_video_labels(std::vector<VideoEntry>& catalog);

// --- Persistence ------------------------------------------------------------

// Run-length pairs (value, length) covering the whole track.
std::vector<std::pair<int, std::int64_t>> rle_encode(std::span<const std::uint8_t> labels);
std::vector<std::uint8_t> rle_decode(std::span<const std::pair<int, std::int64_t>> runs);

// Line-delimited JSON: a header record carrying the category order, then
// one record per video.
void save_catalog(const std::filesystem::path& path, std::span<const VideoEntry> catalog);
std::vector<VideoEntry> load_catalog(const std::filesystem::path& path);

// Canonical single-line JSON for a record. Files on disk and payloads
// posted to the annotation service use exactly these bytes.
std::string serialize_annotation(const AnnotationRecord& record);
AnnotationRecord parse_annotation(std::string_view text);
std::vector<AnnotationRecord> load_annotation_dir(const std::filesystem::path& dir);
std::string annotation_filename(const AnnotationRecord& record);

void save_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec load_split(const std::filesystem::path& path);

}  // namespace lad
