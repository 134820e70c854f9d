#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "lad/model.hpp"
#include "lad/trainer.hpp"
#include "lad/videopipe.hpp"

namespace lad {

struct PathsConfig {
    std::filesystem::path catalog;
    std::filesystem::path features;
    std::filesystem::path split;  // empty: every catalog video trains and evaluates
    std::filesystem::path out = "out";
};

/// Everything a train/eval/sweep run needs. Defaults reproduce the
/// reference configuration (m=16, K=5, 2x128 ConvLSTM, 1024/512 trunk,
/// Adam lr 3e-4, decay 5e-4, batch 60, lambda 1/10).
struct RunConfig {
    SegmentConfig segment;
    BackboneSpec backbone;
    StackConfig stack;
    std::vector<int> trunk = {1024, 512};
    TrainConfig train;
    int checkpoint_every = 0;
    bool broadcast_video_labels = false;
    PathsConfig paths;

    ModelConfig model_config() const;
    void validate() const;
};

// Unknown keys at any level raise ValidationError naming the key path.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& config);

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SegmentConfig& config);
SegmentConfig segment_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace lad
