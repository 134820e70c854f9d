#include "lad/datamodel.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lad/error.hpp"

namespace lad {

using ordered_json = nlohmann::ordered_json;

AnomalyCategory category_from_index(int index) {
    if (index < 0 || index >= kNumCategories) {
        throw ValidationError("category index out of range: " + std::to_string(index));
    }
    return static_cast<AnomalyCategory>(index);
}

std::string_view category_name(AnomalyCategory c) { return kCategoryNames[category_index(c)]; }

std::optional<AnomalyCategory> parse_category(std::string_view name) {
    for (int i = 0; i < kNumCategories; ++i) {
        if (kCategoryNames[i] == name) return static_cast<AnomalyCategory>(i);
    }
    return std::nullopt;
}

std::uint64_t category_fingerprint() {
    std::uint64_t h = 14695981039346656037ull;
    for (auto name : kCategoryNames) {
        for (char ch : name) {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ull;
        }
        h ^= static_cast<unsigned char>(',');
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<FrameInterval> normalize_intervals(std::vector<FrameInterval> intervals) {
    for (const auto& iv : intervals) {
        if (iv.start < 0) throw FieldError("intervals", "interval start must be >= 0");
        if (iv.end < iv.start) {
            throw FieldError("intervals", "interval end " + std::to_string(iv.end) +
                                              " precedes start " + std::to_string(iv.start));
        }
    }
    std::sort(intervals.begin(), intervals.end(),
              [](const auto& a, const auto& b) { return a.start < b.start; });
    std::vector<FrameInterval> merged;
    for (const auto& iv : intervals) {
        if (!merged.empty() && iv.start <= merged.back().end) {
            merged.back().end = std::max(merged.back().end, iv.end);
        } else {
            merged.push_back(iv);
        }
    }
    return merged;
}

std::size_t FrameLabelTrack::abnormal_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

bool VideoEntry::is_abnormal() const { return frame_labels.abnormal_count() > 0; }

void validate(const VideoEntry& video) {
    if (video.video_id.empty()) throw ValidationError("video_id must be non-empty");
    if (video.frame_count <= 0) {
        throw ValidationError("video " + video.video_id + ": frame_count must be positive");
    }
    if (!(video.fps > 0.0)) throw ValidationError("video " + video.video_id + ": fps must be positive");
    if (static_cast<std::int64_t>(video.frame_labels.size()) != video.frame_count) {
        throw ValidationError("video " + video.video_id + ": label track length " +
                              std::to_string(video.frame_labels.size()) + " != frame_count " +
                              std::to_string(video.frame_count));
    }
    for (auto v : video.frame_labels.labels) {
        if (v > 1) throw ValidationError("video " + video.video_id + ": labels must be 0 or 1");
    }
}

FrameLabelTrack aggregate_frame_labels(std::span<const AnnotationRecord> records,
                                       std::int64_t frame_count) {
    if (records.empty()) throw UsageError("aggregate_frame_labels: no annotation records");
    if (frame_count <= 0) throw ValidationError("aggregate_frame_labels: frame_count must be positive");
    const std::string& video_id = records.front().video_id;

    std::vector<int> votes(static_cast<std::size_t>(frame_count), 0);
    for (const auto& rec : records) {
        if (rec.video_id != video_id) {
            throw ValidationError("annotator " + rec.annotator_id + " labels video " + rec.video_id +
                                  ", expected " + video_id);
        }
        std::vector<std::uint8_t> marks(votes.size(), 0);
        for (const auto& iv : rec.intervals) {
            if (iv.start < 0 || iv.end < iv.start || iv.end >= frame_count) {
                throw ValidationError("annotator " + rec.annotator_id + ": interval [" +
                                      std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                                      "] outside video " + video_id + " of " +
                                      std::to_string(frame_count) + " frames");
            }
            std::fill(marks.begin() + iv.start, marks.begin() + iv.end + 1, std::uint8_t{1});
        }
        for (std::size_t f = 0; f < votes.size(); ++f) votes[f] += marks[f];
    }

    // mean >= 0.5  <=>  2 * votes >= annotators, kept in integers.
    const auto annotators = static_cast<int>(records.size());
    FrameLabelTrack track{video_id, std::vector<std::uint8_t>(votes.size(), 0)};
    for (std::size_t f = 0; f < votes.size(); ++f) {
        track.labels[f] = 2 * votes[f] >= annotators ? 1 : 0;
    }
    return track;
}

bool video_label(const FrameLabelTrack& track) {
    if (track.labels.empty()) throw ValidationError("video_label: empty label track");
    return std::any_of(track.labels.begin(), track.labels.end(), [](auto v) { return v != 0; });
}

std::string to_string(SupervisionMode mode) {
    switch (mode) {
        case SupervisionMode::unsupervised: return "unsupervised";
        case SupervisionMode::weakly: return "weakly";
        case SupervisionMode::fully: return "fully";
    }
    return "?";
}

SupervisionMode parse_mode(std::string_view text) {
    if (text == "unsupervised") return SupervisionMode::unsupervised;
    if (text == "weakly") return SupervisionMode::weakly;
    if (text == "fully") return SupervisionMode::fully;
    throw UsageError("unknown supervision mode '" + std::string(text) +
                     "' (expected unsupervised, weakly or fully)");
}

std::string SplitSpec::visible_labels() const {
    switch (mode) {
        case SupervisionMode::unsupervised: return "none (normal-only training videos)";
        case SupervisionMode::weakly: return "video-level labels";
        case SupervisionMode::fully: return "frame-level labels and categories";
    }
    return "?";
}

SplitSpec make_split(std::span<const VideoEntry> catalog, SupervisionMode mode, TestQuota quota,
                     std::uint64_t seed) {
    if (quota.abnormal < 0 || quota.normal < 0) throw UsageError("test quota must be non-negative");

    std::array<std::vector<std::size_t>, kNumCategories> abnormal, normal;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        const auto c = category_index(catalog[i].category);
        (catalog[i].is_abnormal() ? abnormal[c] : normal[c]).push_back(i);
    }

    std::vector<bool> in_test(catalog.size(), false);
    for (int c = 0; c < kNumCategories; ++c) {
        const auto name = std::string(kCategoryNames[c]);
        if (static_cast<int>(abnormal[c].size()) < quota.abnormal ||
            static_cast<int>(normal[c].size()) < quota.normal) {
            throw ValidationError("category " + name + " has " + std::to_string(abnormal[c].size()) +
                                  " abnormal / " + std::to_string(normal[c].size()) +
                                  " normal videos; test quota needs " +
                                  std::to_string(quota.abnormal) + " / " +
                                  std::to_string(quota.normal));
        }
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(c));
        auto pick = [&](std::vector<std::size_t>& pool, int n) {
            std::shuffle(pool.begin(), pool.end(), rng);
            for (int k = 0; k < n; ++k) in_test[pool[k]] = true;
        };
        pick(abnormal[c], quota.abnormal);
        pick(normal[c], quota.normal);
    }

    SplitSpec split;
    split.mode = mode;
    split.seed = seed;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        if (in_test[i]) {
            split.test_ids.push_back(catalog[i].video_id);
        } else if (mode != SupervisionMode::unsupervised || !catalog[i].is_abnormal()) {
            split.train_ids.push_back(catalog[i].video_id);
        }
    }
    return split;
}

DatasetStats compute_stats(std::span<const VideoEntry> catalog) {
    if (catalog.empty()) throw UsageError("compute_stats: empty catalog");
    DatasetStats stats;
    std::array<double, kNumCategories> ratio_sum{};
    for (int c = 0; c < kNumCategories; ++c) {
        stats.categories.push_back({category_from_index(c), 0, 0, std::nullopt});
    }
    for (const auto& video : catalog) {
        validate(video);
        const double ratio = static_cast<double>(video.frame_labels.abnormal_count()) /
                             static_cast<double>(video.frame_count);
        stats.videos.push_back({video.video_id, video.category, video.frame_count, ratio});
        auto& cat = stats.categories[category_index(video.category)];
        ++cat.videos;
        if (video.is_abnormal()) {
            ++cat.abnormal_videos;
            ratio_sum[category_index(video.category)] += ratio;
        }
    }
    for (int c = 0; c < kNumCategories; ++c) {
        auto& cat = stats.categories[c];
        if (cat.abnormal_videos > 0) cat.anomaly_ratio = ratio_sum[c] / cat.abnormal_videos;
    }
    return stats;
}

void broadcast_video_labels(std::vector<VideoEntry>& catalog) {
    for (auto& video : catalog) {
        const std::uint8_t label = video.is_abnormal() ? 1 : 0;
        std::fill(video.frame_labels.labels.begin(), video.frame_labels.labels.end(), label);
    }
}

// --- Persistence ------------------------------------------------------------

std::vector<std::pair<int, std::int64_t>> rle_encode(std::span<const std::uint8_t> labels) {
    std::vector<std::pair<int, std::int64_t>> runs;
    for (auto v : labels) {
        if (!runs.empty() && runs.back().first == v) {
            ++runs.back().second;
        } else {
            runs.emplace_back(v, 1);
        }
    }
    return runs;
}

std::vector<std::uint8_t> rle_decode(std::span<const std::pair<int, std::int64_t>> runs) {
    std::vector<std::uint8_t> labels;
    for (auto [value, length] : runs) {
        if ((value != 0 && value != 1) || length <= 0) {
            throw ValidationError("malformed run-length pair (" + std::to_string(value) + ", " +
                                  std::to_string(length) + ")");
        }
        labels.insert(labels.end(), static_cast<std::size_t>(length), static_cast<std::uint8_t>(value));
    }
    return labels;
}

namespace {

ordered_json category_header() {
    ordered_json header;
    header["categories"] = ordered_json::array();
    for (auto name : kCategoryNames) header["categories"].push_back(std::string(name));
    return header;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void save_catalog(const std::filesystem::path& path, std::span<const VideoEntry> catalog) {
    std::string text = category_header().dump() + "\n";
    for (const auto& video : catalog) {
        validate(video);
        ordered_json rec;
        rec["video_id"] = video.video_id;
        rec["category"] = std::string(category_name(video.category));
        rec["frame_count"] = video.frame_count;
        rec["fps"] = video.fps;
        rec["rle_labels"] = ordered_json::array();
        for (auto [value, length] : rle_encode(video.frame_labels.labels)) {
            rec["rle_labels"].push_back({value, length});
        }
        rec["feature_source"] = video.feature_source;
        text += rec.dump() + "\n";
    }
    write_text(path, text);
}

std::vector<VideoEntry> load_catalog(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    std::vector<VideoEntry> catalog;
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.string() + ":" + std::to_string(line_no);
        ordered_json rec;
        try {
            rec = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(where + ": " + e.what());
        }
        if (rec.contains("categories")) {
            if (rec != category_header()) {
                throw ValidationError(where + ": category order differs from this build's order");
            }
            saw_header = true;
            continue;
        }
        try {
            VideoEntry video;
            video.video_id = rec.at("video_id").get<std::string>();
            const auto cat_name = rec.at("category").get<std::string>();
            const auto cat = parse_category(cat_name);
            if (!cat) throw ValidationError("unknown category " + cat_name);
            video.category = *cat;
            video.frame_count = rec.at("frame_count").get<std::int64_t>();
            video.fps = rec.value("fps", 25.0);
            std::vector<std::pair<int, std::int64_t>> runs;
            for (const auto& run : rec.at("rle_labels")) {
                runs.emplace_back(run.at(0).get<int>(), run.at(1).get<std::int64_t>());
            }
            video.frame_labels = {video.video_id, rle_decode(runs)};
            video.feature_source = rec.value("feature_source", std::string("synthetic"));
            validate(video);
            catalog.push_back(std::move(video));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(where + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
    }
    if (!saw_header) throw ValidationError(path.string() + ": missing category header record");
    return catalog;
}

std::string serialize_annotation(const AnnotationRecord& record) {
    ordered_json j;
    j["video_id"] = record.video_id;
    j["annotator_id"] = record.annotator_id;
    j["intervals"] = ordered_json::array();
    for (const auto& iv : record.intervals) j["intervals"].push_back({iv.start, iv.end});
    return j.dump() + "\n";
}

AnnotationRecord parse_annotation(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FieldError("", std::string("malformed annotation record: ") + e.what());
    }
    if (!j.is_object()) throw FieldError("", "annotation record must be an object");
    for (const auto& [key, _] : j.items()) {
        if (key != "video_id" && key != "annotator_id" && key != "intervals") {
            throw FieldError(key, "unknown field '" + key + "'");
        }
    }
    auto require_string = [&](const char* field) {
        if (!j.contains(field) || !j[field].is_string() || j[field].get<std::string>().empty()) {
            throw FieldError(field, std::string("field '") + field + "' must be a non-empty string");
        }
        return j[field].get<std::string>();
    };
    AnnotationRecord rec;
    rec.video_id = require_string("video_id");
    rec.annotator_id = require_string("annotator_id");
    if (!j.contains("intervals") || !j["intervals"].is_array()) {
        throw FieldError("intervals", "field 'intervals' must be an array of [start, end] pairs");
    }
    for (const auto& pair : j["intervals"]) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
            !pair[1].is_number_integer()) {
            throw FieldError("intervals", "each interval must be an integer pair [start, end]");
        }
        rec.intervals.push_back({pair[0].get<std::int64_t>(), pair[1].get<std::int64_t>()});
    }
    rec.intervals = normalize_intervals(std::move(rec.intervals));
    return rec;
}

std::string annotation_filename(const AnnotationRecord& record) {
    auto clean = [](std::string s) {
        for (auto& ch : s) {
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
        }
        return s;
    };
    return clean(record.video_id) + "__" + clean(record.annotator_id) + ".json";
}

std::vector<AnnotationRecord> load_annotation_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<AnnotationRecord> records;
    for (const auto& file : files) {
        try {
            records.push_back(parse_annotation(read_text(file)));
        } catch (const ValidationError& e) {
            throw ValidationError(file.string() + ": " + e.what());
        }
    }
    return records;
}

void save_split(const std::filesystem::path& path, const SplitSpec& split) {
    ordered_json j;
    j["mode"] = to_string(split.mode);
    j["seed"] = split.seed;
    j["train_ids"] = split.train_ids;
    j["test_ids"] = split.test_ids;
    write_text(path, j.dump(1) + "\n");
}

SplitSpec load_split(const std::filesystem::path& path) {
    try {
        const auto j = nlohmann::json::parse(read_text(path));
        SplitSpec split;
        split.mode = parse_mode(j.at("mode").get<std::string>());
        split.seed = j.at("seed").get<std::uint64_t>();
        split.train_ids = j.at("train_ids").get<std::vector<std::string>>();
        split.test_ids = j.at("test_ids").get<std::vector<std::string>>();
        std::set<std::string> train(split.train_ids.begin(), split.train_ids.end());
        for (const auto& id : split.test_ids) {
            if (train.count(id)) throw ValidationError("video " + id + " is in both train and test");
        }
        return split;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace lad
