#include "lad/videopipe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <regex>

#include "lad/error.hpp"

namespace lad {

void SegmentConfig::validate() const {
    if (clip_frames <= 0) throw ValidationError("clip_frames must be positive");
    if (clips_per_segment <= 0) throw ValidationError("clips_per_segment must be positive");
    if (frame_size <= 0) throw ValidationError("frame_size must be positive");
}

std::int64_t segment_count(std::int64_t frame_count, const SegmentConfig& config) {
    config.validate();
    if (frame_count < 1) throw ValidationError("frame_count must be >= 1");
    const std::int64_t len = config.segment_frames();
    return (frame_count + len - 1) / len;
}

std::vector<SegmentWindow> segment_video(std::int64_t frame_count, const SegmentConfig& config) {
    const auto count = segment_count(frame_count, config);
    const std::int64_t len = config.segment_frames();
    std::vector<SegmentWindow> windows;
    windows.reserve(static_cast<std::size_t>(count));
    for (std::int64_t s = 0; s < count; ++s) {
        SegmentWindow w;
        w.index = s;
        w.frames.resize(static_cast<std::size_t>(len));
        for (std::int64_t k = 0; k < len; ++k) {
            w.frames[k] = std::min(s * len + k, frame_count - 1);
        }
        w.valid = static_cast<int>(std::min(len, frame_count - s * len));
        windows.push_back(std::move(w));
    }
    return windows;
}

FrameTensor<double> preprocess_frame(const RgbImage& frame, const SegmentConfig& config) {
    if (frame.height < 1 || frame.width < 1 || frame.pixels.empty()) {
        throw ValidationError("preprocess_frame: empty image");
    }
    if (frame.pixels.size() != static_cast<std::size_t>(frame.height) * frame.width * 3) {
        throw ValidationError("preprocess_frame: pixel buffer does not match HxWx3");
    }
    const int size = config.frame_size;
    const double sy = static_cast<double>(frame.height) / size;
    const double sx = static_cast<double>(frame.width) / size;

    FrameTensor<double> out;
    for (auto& plane : out) plane.resize(size, size);
    for (int y = 0; y < size; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, frame.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, frame.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < size; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, frame.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, frame.width - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < 3; ++ch) {
                const double top = (1 - wx) * frame.at(y0, x0, ch) + wx * frame.at(y0, x1, ch);
                const double bottom = (1 - wx) * frame.at(y1, x0, ch) + wx * frame.at(y1, x1, ch);
                out[ch](y, x) = (1 - wy) * top + wy * bottom;
            }
        }
    }
    for (auto& plane : out) plane -= plane.mean();
    return out;
}

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    int width = 0, height = 0, maxval = 0;
    in >> magic >> width >> height >> maxval;
    if (magic != "P6" || width < 1 || height < 1 || maxval != 255) {
        throw ValidationError(path.string() + ": not a binary 8-bit PPM");
    }
    in.get();
    RgbImage image{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
    in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!in) throw ValidationError(path.string() + ": truncated pixel data");
    return image;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
}

std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    static const std::regex digits("(\\d+)");
    std::vector<std::pair<long long, std::filesystem::path>> numbered;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto stem = entry.path().stem().string();
        std::smatch m;
        long long n = -1;
        if (std::regex_search(stem, m, digits)) n = std::stoll(m[1].str());
        numbered.emplace_back(n, entry.path());
    }
    std::sort(numbered.begin(), numbered.end());
    std::vector<std::filesystem::path> files;
    for (auto& [_, p] : numbered) files.push_back(std::move(p));
    return files;
}

std::string to_string(BackboneKind kind) {
    switch (kind) {
        case BackboneKind::import_rgb_flow: return "import_rgb_flow";
        case BackboneKind::import_rgb_only: return "import_rgb_only";
        case BackboneKind::import_flow_only: return "import_flow_only";
        case BackboneKind::synthetic: return "synthetic";
    }
    return "?";
}

BackboneKind parse_backbone(std::string_view text) {
    if (text == "import_rgb_flow" || text == "rgb_flow") return BackboneKind::import_rgb_flow;
    if (text == "import_rgb_only" || text == "rgb_only") return BackboneKind::import_rgb_only;
    if (text == "import_flow_only" || text == "flow_only") return BackboneKind::import_flow_only;
    if (text == "synthetic") return BackboneKind::synthetic;
    throw UsageError("unknown backbone '" + std::string(text) + "'");
}

int BackboneSpec::input_channels() const {
    switch (kind) {
        case BackboneKind::import_rgb_only:
        case BackboneKind::import_flow_only: return kStreamChannels;
        default: return 2 * kStreamChannels;
    }
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    in.read(bytes.data(), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    return h;
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const FeatureTable& table,
                        const std::string& provenance_note) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.rows.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.rows.cols()));
    for (Eigen::Index i = 0; i < table.rows.size(); ++i) put_le<float>(out, table.rows.data()[i]);
    if (!out) throw IoError("write failed: " + path.string());

    auto sidecar = path;
    sidecar += ".txt";
    std::ofstream note(sidecar);
    note << "video_id: " << table.video_id << "\n"
         << "clips: " << table.rows.rows() << "\n"
         << "dim: " << table.rows.cols() << "\n"
         << "provenance: " << (table.provenance == Provenance::synthetic ? "synthetic" : "imported") << "\n"
         << provenance_note << "\n";
}

FeatureTable read_feature_file(const std::filesystem::path& path, const std::string& video_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("video " + video_id + ": missing feature file " + path.string());
    const auto clips = get_le<std::uint32_t>(in);
    const auto dim = get_le<std::uint32_t>(in);
    if (!in) throw IoError("video " + video_id + ": truncated feature header in " + path.string());
    FeatureTable table{video_id, Mat<float>(clips, dim), Provenance::imported};
    for (Eigen::Index i = 0; i < table.rows.size(); ++i) table.rows.data()[i] = get_le<float>(in);
    if (!in) {
        throw IoError("video " + video_id + ": feature file " + path.string() + " shorter than its header (" +
                      std::to_string(clips) + " x " + std::to_string(dim) + ")");
    }
    return table;
}

FeatureTable synthetic_features(const std::string& video_id, std::int64_t clips, std::uint64_t seed) {
    std::uint64_t base = mix(0xA5A5A5A5ull, seed);
    for (char ch : video_id) base = mix(base, static_cast<unsigned char>(ch));
    FeatureTable table{video_id, Mat<float>(clips, 2 * kStreamDim), Provenance::synthetic};
    for (std::int64_t c = 0; c < clips; ++c) {
        std::mt19937_64 rng(mix(base, static_cast<std::uint64_t>(c)));
        std::normal_distribution<float> normal(0.0f, 1.0f);
        for (Eigen::Index j = 0; j < table.rows.cols(); ++j) table.rows(c, j) = normal(rng);
    }
    return table;
}

FeatureTable load_features(const VideoEntry& video, const BackboneSpec& backbone,
                           const std::filesystem::path& feature_root, const SegmentConfig& config) {
    const auto clips = segment_count(video.frame_count, config) * config.clips_per_segment;
    if (!backbone.is_import()) return synthetic_features(video.video_id, clips, backbone.seed);
    std::filesystem::path path = video.feature_source;
    if (path.is_relative()) path = feature_root / path;
    return read_feature_file(path, video.video_id);
}

void place_stream(std::span<const float> stream, int channel_offset, Mat<float>& grid) {
    for (int i = 0; i < kStreamDim; ++i) {
        const int r = i / (kGridSide * kStreamChannels);
        const int c = (i / kStreamChannels) % kGridSide;
        const int ch = i % kStreamChannels;
        grid(r * kGridSide + c, channel_offset + ch) = stream[i];
    }
}

std::vector<ClipFeatureGrid> extract_features(const FeatureTable& table, std::int64_t segment,
                                              const SegmentConfig& config, BackboneKind kind) {
    config.validate();
    const auto dim = table.rows.cols();
    const bool two_stream = kind == BackboneKind::import_rgb_flow || kind == BackboneKind::synthetic;
    if (two_stream && dim != 2 * kStreamDim) {
        throw ValidationError("video " + table.video_id + ": two-stream features need dim " +
                              std::to_string(2 * kStreamDim) + ", file has " + std::to_string(dim));
    }
    if (!two_stream && dim != kStreamDim && dim != 2 * kStreamDim) {
        throw ValidationError("video " + table.video_id + ": single-stream features need dim " +
                              std::to_string(kStreamDim) + " or " + std::to_string(2 * kStreamDim) +
                              ", file has " + std::to_string(dim));
    }
    // A single-stream kind reading a two-stream file takes its own half.
    const Eigen::Index offset = (kind == BackboneKind::import_flow_only && dim == 2 * kStreamDim) ? kStreamDim : 0;
    const int channels = two_stream ? 2 * kStreamChannels : kStreamChannels;
    const auto provenance = table.provenance;

    std::vector<ClipFeatureGrid> grids;
    for (int k = 0; k < config.clips_per_segment; ++k) {
        const std::int64_t clip = segment * config.clips_per_segment + k;
        if (clip >= table.rows.rows()) {
            throw IoError("video " + table.video_id + ": feature file has " +
                          std::to_string(table.rows.rows()) + " clips, segment " + std::to_string(segment) +
                          " needs clip " + std::to_string(clip));
        }
        const auto row = table.rows.row(clip);
        if (!row.allFinite()) {
            throw ValidationError("video " + table.video_id + ": non-finite feature in clip " + std::to_string(clip));
        }
        ClipFeatureGrid grid{Mat<float>(kGridSide * kGridSide, channels), provenance};
        place_stream({row.data() + offset, kStreamDim}, 0, grid.values);
        if (two_stream) place_stream({row.data() + kStreamDim, kStreamDim}, kStreamChannels, grid.values);
        grids.push_back(std::move(grid));
    }
    return grids;
}

}  // namespace lad
