#include "lad/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lad/metrics.hpp"

namespace lad {

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
    if (!(weight_decay >= 0)) throw ValidationError("weight_decay must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (max_epochs < 0) throw ValidationError("max_epochs must be >= 0");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) || !(adam.epsilon > 0)) {
        throw ValidationError("adam: betas must lie in [0, 1) and epsilon must be > 0");
    }
    loss.validate();
}

FeatureLookup file_feature_lookup(BackboneSpec backbone, std::filesystem::path feature_root, SegmentConfig config) {
    return [backbone, root = std::move(feature_root), config](const VideoEntry& video) {
        return load_features(video, backbone, root, config);
    };
}

SegmentExample make_example(const VideoEntry& video, const FeatureTable& table, std::int64_t segment,
                            const SegmentConfig& config, BackboneKind kind) {
    const auto windows = segment_video(video.frame_count, config);
    if (segment < 0 || segment >= static_cast<std::int64_t>(windows.size())) {
        throw UsageError("video " + video.video_id + " has no segment " + std::to_string(segment));
    }
    const auto& w = windows[segment];
    SegmentExample ex;
    ex.video_id = video.video_id;
    ex.segment = segment;
    for (auto& grid : extract_features(table, segment, config, kind)) ex.features.push_back(std::move(grid.values));
    ex.frame_targets.resize(w.frames.size());
    ex.mask.resize(w.frames.size());
    for (std::size_t k = 0; k < w.frames.size(); ++k) {
        const bool real = static_cast<int>(k) < w.valid;
        ex.mask[k] = real ? 1 : 0;
        ex.frame_targets[k] = real ? video.frame_labels.labels[w.frames[k]] : 0;
    }
    ex.category = category_index(video.category);
    return ex;
}

std::vector<SegmentExample> build_examples(const SplitSpec& split, std::span<const VideoEntry> catalog,
                                           const SegmentConfig& config, BackboneKind kind,
                                           const FeatureLookup& lookup) {
    if (split.mode != SupervisionMode::fully) {
        throw UsageError("the multi-task trainer needs a fully-supervised split (frame labels); got mode " +
                         to_string(split.mode));
    }
    std::map<std::string, const VideoEntry*> by_id;
    for (const auto& v : catalog) by_id[v.video_id] = &v;
    std::vector<SegmentExample> examples;
    for (const auto& id : split.train_ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("split references unknown video " + id);
        const auto& video = *it->second;
        const auto table = lookup(video);
        const auto n = segment_count(video.frame_count, config);
        for (std::int64_t s = 0; s < n; ++s) examples.push_back(make_example(video, table, s, config, kind));
    }
    return examples;
}

Checkpoint fresh_checkpoint(const ModelConfig& model, const SegmentConfig& segment, BackboneKind backbone,
                            const TrainConfig& train) {
    Checkpoint ck;
    ck.model = Model<float>::initialized(model, train.seed);
    ck.segment = segment;
    ck.backbone = backbone;
    ck.train = train;
    ck.category_fingerprint = category_fingerprint();
    for (auto& p : ck.model.parameters()) {
        ck.optimizer.first.push_back(Mat<float>::Zero(p.value->rows(), p.value->cols()));
        ck.optimizer.second.push_back(Mat<float>::Zero(p.value->rows(), p.value->cols()));
    }
    return ck;
}

void adam_update(Model<float>& model, Model<float>& grads, AdamState& state, const TrainConfig& config) {
    auto params = model.parameters();
    auto gparams = grads.parameters();
    if (state.first.size() != params.size()) {
        state.first.clear();
        state.second.clear();
        for (auto& p : params) {
            state.first.push_back(Mat<float>::Zero(p.value->rows(), p.value->cols()));
            state.second.push_back(Mat<float>::Zero(p.value->rows(), p.value->cols()));
        }
    }
    ++state.step;
    const auto& a = config.adam;
    const float b1 = static_cast<float>(a.beta1), b2 = static_cast<float>(a.beta2);
    const float c1 = static_cast<float>(1.0 - std::pow(a.beta1, static_cast<double>(state.step)));
    const float c2 = static_cast<float>(1.0 - std::pow(a.beta2, static_cast<double>(state.step)));
    const float lr = static_cast<float>(config.learning_rate);
    const float wd = static_cast<float>(config.weight_decay);
    const float eps = static_cast<float>(a.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto g = gparams[i].value->array();
        auto m = state.first[i].array();
        auto v = state.second[i].array();
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        auto p = params[i].value->array();
        const float decay = params[i].decay ? wd : 0.0f;
        p -= lr * ((m / c1) / ((v / c2).sqrt() + eps) + decay * p);
    }
}

namespace {

Vec<float> to_vec(const std::vector<std::uint8_t>& v) {
    Vec<float> out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

void append_log(const std::filesystem::path& path, const EpochRecord& r) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["mean_loss"] = r.mean_loss;
    j["train_auc"] = std::isfinite(r.train_auc) ? nlohmann::ordered_json(r.train_auc) : nlohmann::ordered_json();
    j["train_acc"] = r.train_acc;
    j["wall_time"] = r.wall_time;
    out << j.dump() << "\n";
}

}  // namespace

TrainResult train(Checkpoint start, std::span<const SegmentExample> examples, const TrainOptions& options) {
    const auto& config = start.train;
    config.validate();
    if (examples.empty()) throw UsageError("train: no training examples");
    const auto& mc = start.model.config;
    for (const auto& ex : examples) {
        if (static_cast<int>(ex.features.size()) != start.segment.clips_per_segment ||
            static_cast<int>(ex.frame_targets.size()) != mc.frame_outputs) {
            throw ValidationError("train: example " + ex.video_id + "#" + std::to_string(ex.segment) +
                                  " does not match the model's clip count / frame outputs");
        }
    }

    TrainResult result{std::move(start), {}};
    auto& ck = result.checkpoint;
    auto& model = ck.model;
    auto grads = model.zeros_like();
    std::vector<std::size_t> order(examples.size());
    const auto t0 = std::chrono::steady_clock::now();

    for (int e = 0; e < config.max_epochs; ++e) {
        const int epoch = ck.epoch + 1;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0;
        std::size_t hits = 0;
        ScoredTrack pooled{"train", {}, {}};
        const auto batch = static_cast<std::size_t>(config.batch_size);
        for (std::size_t b0 = 0, batch_index = 0; b0 < order.size(); b0 += batch, ++batch_index) {
            const std::size_t b1 = std::min(order.size(), b0 + batch);
            for (auto& p : grads.parameters()) p.value->setZero();
            double batch_loss = 0;
            for (std::size_t k = b0; k < b1; ++k) {
                const auto& ex = examples[order[k]];
                const SegmentTargets<float> targets{to_vec(ex.frame_targets), to_vec(ex.mask), ex.category};
                const auto r = segment_loss<float>(model, ex.features, targets, config.loss, &grads);
                batch_loss += r.total;
                hits += r.outputs.predicted_class() == ex.category;
                for (std::size_t f = 0; f < ex.mask.size(); ++f) {
                    if (!ex.mask[f]) continue;
                    pooled.scores.push_back(r.outputs.frame_scores[static_cast<Eigen::Index>(f)]);
                    pooled.labels.push_back(ex.frame_targets[f]);
                }
            }
            if (!std::isfinite(batch_loss)) {
                throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index));
            }
            const float scale = 1.0f / static_cast<float>(b1 - b0);
            for (auto& p : grads.parameters()) *p.value *= scale;
            adam_update(model, grads, ck.optimizer, config);
            loss_sum += batch_loss;
        }
        ck.epoch = epoch;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(examples.size());
        rec.train_acc = static_cast<double>(hits) / static_cast<double>(examples.size());
        try {
            rec.train_auc = roc_auc(std::span<const ScoredTrack>(&pooled, 1)).auc;
        } catch (const UndefinedAucError&) {
            rec.train_auc = std::nan("");
        }
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        if (options.log_path) append_log(*options.log_path, rec);
        if (options.on_epoch) options.on_epoch(rec);
        if (options.checkpoint_dir && options.checkpoint_every > 0 && epoch % options.checkpoint_every == 0) {
            save_checkpoint(*options.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), ck);
        }
    }
    return result;
}

TrainResult train(const ModelConfig& model, const SegmentConfig& segment, BackboneKind backbone,
                  const TrainConfig& config, std::span<const SegmentExample> examples, const TrainOptions& options) {
    config.validate();
    return train(fresh_checkpoint(model, segment, backbone, config), examples, options);
}

VideoPrediction predict_video(const VideoEntry& video, const Checkpoint& checkpoint, const FeatureTable& table) {
    const auto& mc = checkpoint.model.config;
    const auto windows = segment_video(video.frame_count, checkpoint.segment);
    VideoPrediction pred;
    pred.scores.reserve(static_cast<std::size_t>(video.frame_count));
    pred.mean_class_probs = Vec<double>::Zero(mc.classes);
    for (const auto& w : windows) {
        std::vector<ClipFeatureGrid> grids;
        try {
            grids = extract_features(table, w.index, checkpoint.segment, checkpoint.backbone);
        } catch (const std::exception& e) {
            throw IoError("video " + video.video_id + ", segment " + std::to_string(w.index) + ": " + e.what());
        }
        std::vector<Mat<float>> clips;
        for (auto& g : grids) clips.push_back(std::move(g.values));
        const auto out = predict_segment<float>(checkpoint.model, clips);
        for (int k = 0; k < w.valid; ++k) pred.scores.push_back(out.frame_scores[k]);
        pred.mean_class_probs += out.class_probs.cast<double>();
    }
    pred.mean_class_probs /= static_cast<double>(windows.size());
    Eigen::Index best = 0;
    pred.mean_class_probs.maxCoeff(&best);
    pred.category = static_cast<int>(best);
    return pred;
}

}  // namespace lad
