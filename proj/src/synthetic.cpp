#include "lad/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "lad/error.hpp"

namespace lad {

std::vector<VideoEntry> synthetic_benchmark_catalog(std::uint64_t seed, int total, int abnormal_per_category) {
    if (total < kNumCategories * abnormal_per_category) {
        throw UsageError("synthetic catalog: total smaller than the abnormal videos requested");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> length(200, 600);
    std::vector<VideoEntry> catalog;
    auto add = [&](int c, bool abnormal, int n) {
        VideoEntry v;
        v.category = category_from_index(c);
        v.video_id = std::string(category_name(v.category)) + (abnormal ? "_abn_" : "_nrm_") + std::to_string(n);
        v.frame_count = length(rng);
        v.frame_labels = {v.video_id, std::vector<std::uint8_t>(static_cast<std::size_t>(v.frame_count), 0)};
        if (abnormal) {
            std::uniform_int_distribution<std::int64_t> start(0, v.frame_count - 20);
            const auto s = start(rng);
            std::uniform_int_distribution<std::int64_t> len(1, std::min<std::int64_t>(200, v.frame_count - s));
            std::fill_n(v.frame_labels.labels.begin() + s, len(rng), std::uint8_t{1});
        }
        catalog.push_back(std::move(v));
    };
    const int normals = total - kNumCategories * abnormal_per_category;
    for (int c = 0; c < kNumCategories; ++c) {
        for (int n = 0; n < abnormal_per_category; ++n) add(c, true, n);
        const int mine = normals / kNumCategories + (c < normals % kNumCategories ? 1 : 0);
        for (int n = 0; n < mine; ++n) add(c, false, n);
    }
    return catalog;
}

FeatureLookup PlantedToy::lookup() const {
    return [this](const VideoEntry& video) {
        const auto it = features.find(video.video_id);
        if (it == features.end()) throw IoError("video " + video.video_id + ": no planted features");
        return it->second;
    };
}

SplitSpec PlantedToy::all_videos_split() const {
    SplitSpec split;
    split.mode = SupervisionMode::fully;
    for (const auto& v : catalog) {
        split.train_ids.push_back(v.video_id);
    }
    return split;
}

PlantedToy make_planted_toy(const PlantedToyConfig& config) {
    config.segment.validate();
    const int m = config.segment.clip_frames;
    std::mt19937_64 rng(config.seed);

    std::vector<Mat<float>> signatures;
    {
        std::normal_distribution<float> normal(0.0f, 1.0f);
        for (int c = 0; c < kNumCategories; ++c) {
            Mat<float> s(1, 2 * kStreamDim);
            for (Eigen::Index j = 0; j < s.cols(); ++j) s(0, j) = normal(rng);
            signatures.push_back(s);
        }
    }

    PlantedToy toy;
    toy.segment = config.segment;
    std::uniform_int_distribution<std::int64_t> length(config.min_frames, config.max_frames);
    for (int c = 0; c < kNumCategories; ++c) {
        for (int n = 0; n < config.videos_per_category; ++n) {
            const bool abnormal = n < config.videos_per_category / 2;
            VideoEntry v;
            v.category = category_from_index(c);
            v.video_id = "toy_" + std::string(category_name(v.category)) + "_" + std::to_string(n);
            v.frame_count = length(rng);
            v.feature_source = "features/" + v.video_id + ".bin";
            v.frame_labels = {v.video_id, std::vector<std::uint8_t>(static_cast<std::size_t>(v.frame_count), 0)};
            const std::int64_t clips = (v.frame_count + m - 1) / m;
            if (abnormal) {
                std::uniform_int_distribution<std::int64_t> first(0, clips - 1);
                const auto a = first(rng);
                std::uniform_int_distribution<std::int64_t> count(1, std::max<std::int64_t>(1, std::min<std::int64_t>(3, clips - a)));
                const auto b = a + count(rng);
                const auto begin = a * m;
                const auto end = std::min(b * m, v.frame_count);
                std::fill(v.frame_labels.labels.begin() + begin, v.frame_labels.labels.begin() + end, std::uint8_t{1});
            }

            const auto total_clips = segment_count(v.frame_count, config.segment) * config.segment.clips_per_segment;
            auto table = synthetic_features(v.video_id, total_clips, config.seed);
            table.rows.rowwise() += config.category_signal * signatures[c].row(0);
            const auto windows = segment_video(v.frame_count, config.segment);
            for (const auto& w : windows) {
                for (int k = 0; k < config.segment.clips_per_segment; ++k) {
                    bool hit = false;
                    for (int f = 0; f < m; ++f) hit |= v.frame_labels.labels[w.frames[k * m + f]] != 0;
                    if (hit) table.rows.row(w.index * config.segment.clips_per_segment + k).array() += config.anomaly_offset;
                }
            }
            toy.features.emplace(v.video_id, std::move(table));
            toy.catalog.push_back(std::move(v));
        }
    }
    return toy;
}

RunConfig planted_toy_run_config() {
    RunConfig c;
    c.backbone.kind = BackboneKind::import_rgb_flow;
    c.stack = {2, 16};
    c.trunk = {128, 64};
    c.train.learning_rate = 1e-3;
    c.train.batch_size = 16;
    c.train.max_epochs = 40;
    c.paths.catalog = "catalog.jsonl";
    c.paths.features = ".";
    c.paths.out = "out";
    return c;
}

void write_planted_toy(const PlantedToy& toy, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "features");
    save_catalog(dir / "catalog.jsonl", toy.catalog);
    auto config = planted_toy_run_config();
    config.segment = toy.segment;
    {
        std::ofstream out(dir / "config.json");
        if (!out) throw IoError("cannot write " + (dir / "config.json").string());
        auto j = to_json(config);
        j["paths"].erase("split");
        out << j.dump(2) << "\n";
    }
    for (const auto& video : toy.catalog) {
        write_feature_file(dir / video.feature_source, toy.features.at(video.video_id),
                           "planted toy features: seeded noise + category signature + anomaly offset");
    }
}

}  // namespace lad
