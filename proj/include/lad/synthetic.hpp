#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lad/config.hpp"
#include "lad/datamodel.hpp"
#include "lad/trainer.hpp"
#include "lad/videopipe.hpp"

namespace lad {

/// Catalog shaped like the benchmark: every category gets
/// `abnormal_per_category` abnormal videos, the remaining videos up to
/// `total` are normal and spread round-robin over categories. Labels only;
/// no features.
std::vector<VideoEntry> synthetic_benchmark_catalog(std::uint64_t seed, int total = 2000,
                                                    int abnormal_per_category = 72);

struct PlantedToyConfig {
    int videos_per_category = 8;  // half abnormal, half normal
    std::int64_t min_frames = 96;
    std::int64_t max_frames = 160;
    float anomaly_offset = 1.0f;   // added to every feature of a clip holding abnormal frames
    float category_signal = 0.5f;  // amplitude of the per-category feature signature
    std::uint64_t seed = 7;
    SegmentConfig segment;
};

/// Small dataset with a planted, learnable signal: features are seeded
/// standard-normal noise plus a fixed per-category signature, and clips
/// containing abnormal frames are shifted by `anomaly_offset`. Abnormal
/// intervals are aligned to clip boundaries.
struct PlantedToy {
    std::vector<VideoEntry> catalog;
    std::map<std::string, FeatureTable> features;
    SegmentConfig segment;

    FeatureLookup lookup() const;
    // Every video in training, fully supervised; empty test set.
    SplitSpec all_videos_split() const;
};

PlantedToy make_planted_toy(const PlantedToyConfig& config);

// Reduced-width model and optimizer settings that fit the planted toy on
// one CPU core. Paths are relative to the toy directory.
RunConfig planted_toy_run_config();

// catalog.jsonl, features/<id>.bin and a matching config.json under `dir`.
void write_planted_toy(const PlantedToy& toy, const std::filesystem::path& dir);

}  // namespace lad
