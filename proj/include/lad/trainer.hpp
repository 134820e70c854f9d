#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lad/datamodel.hpp"
#include "lad/model.hpp"
#include "lad/videopipe.hpp"

namespace lad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    double learning_rate = 3e-4;
    double weight_decay = 5e-4;  // decoupled, applied to weight matrices at each update
    int batch_size = 60;
    int max_epochs = 50;
    std::uint64_t seed = 0;
    LossConfig loss;
    AdamConfig adam;

    void validate() const;
};

// One training unit: K clip grids of a segment with its targets.
struct SegmentExample {
    std::string video_id;
    std::int64_t segment = 0;
    std::vector<Mat<float>> features;        // K grids, positions x channels
    std::vector<std::uint8_t> frame_targets;  // m*K
    std::vector<std::uint8_t> mask;           // 0 on tail padding
    int category = 0;
};

using FeatureLookup = std::function<FeatureTable(const VideoEntry&)>;

// Reads features for each video through `feature_root` per the backbone kind.
FeatureLookup file_feature_lookup(BackboneSpec backbone, std::filesystem::path feature_root, SegmentConfig config);

/// One example per segment of every training video, in split order.
/// Only fully-supervised splits are accepted.
std::vector<SegmentExample> build_examples(const SplitSpec& split, std::span<const VideoEntry> catalog,
                                           const SegmentConfig& config, BackboneKind kind,
                                           const FeatureLookup& lookup);

SegmentExample make_example(const VideoEntry& video, const FeatureTable& table, std::int64_t segment,
                            const SegmentConfig& config, BackboneKind kind);

struct AdamState {
    std::int64_t step = 0;
    std::vector<Mat<float>> first;   // parallel to Model::parameters()
    std::vector<Mat<float>> second;
};

struct Checkpoint {
    Model<float> model;
    AdamState optimizer;
    int epoch = 0;
    SegmentConfig segment;
    BackboneKind backbone = BackboneKind::import_rgb_flow;
    TrainConfig train;
    std::uint64_t category_fingerprint = 0;
};

Checkpoint fresh_checkpoint(const ModelConfig& model, const SegmentConfig& segment, BackboneKind backbone,
                            const TrainConfig& train);

// Binary: magic, manifest (JSON with config snapshot and array index), then
// named arrays each with a shape header and little-endian float32 data.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_auc = 0.0;  // NaN when the epoch saw a single frame class
    double train_acc = 0.0;
    double wall_time = 0.0;  // seconds since training started
};

struct TrainOptions {
    std::optional<std::filesystem::path> log_path;  // JSON lines, appended
    std::optional<std::filesystem::path> checkpoint_dir;
    int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochRecord> history;
};

// Raised when a batch produces a non-finite loss.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adam on mean per-segment loss over mini-batches. Examples are visited
/// in an order shuffled per epoch from (seed, epoch).
TrainResult train(Checkpoint start, std::span<const SegmentExample> examples, const TrainOptions& options = {});

TrainResult train(const ModelConfig& model, const SegmentConfig& segment, BackboneKind backbone,
                  const TrainConfig& config, std::span<const SegmentExample> examples,
                  const TrainOptions& options = {});

// One optimizer step on already averaged gradients.
void adam_update(Model<float>& model, Model<float>& grads, AdamState& state, const TrainConfig& config);

struct VideoPrediction {
    std::vector<double> scores;  // one per frame
    int category = 0;
    Vec<double> mean_class_probs;
};

/// Scores every segment and stitches the per-frame scores back together,
/// dropping padded positions. The category is the argmax of the mean class
/// distribution over segments.
VideoPrediction predict_video(const VideoEntry& video, const Checkpoint& checkpoint, const FeatureTable& table);

}  // namespace lad
