#include "lad/config.hpp"

#include <fstream>
#include <set>

namespace lad {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) throw ValidationError("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.geometry = {kGridSide, kGridSide};
    m.input_channels = backbone.input_channels();
    m.stack = stack;
    m.trunk = trunk;
    m.classes = kNumCategories;
    m.frame_outputs = segment.segment_frames();
    return m;
}

void RunConfig::validate() const {
    segment.validate();
    train.validate();
    if (stack.layers < 1) throw ValidationError("config: model.layers must be >= 1");
    if (stack.hidden_channels < 1) throw ValidationError("config: model.hidden_channels must be >= 1");
    for (int w : trunk) {
        if (w < 1) throw ValidationError("config: model.trunk widths must be >= 1");
    }
    if (checkpoint_every < 0) throw ValidationError("config: train.checkpoint_every must be >= 0");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
    return {{"height", c.geometry.height}, {"width", c.geometry.width}, {"input_channels", c.input_channels},
            {"layers", c.stack.layers},    {"hidden_channels", c.stack.hidden_channels},
            {"trunk", c.trunk},            {"classes", c.classes},  {"frame_outputs", c.frame_outputs}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.geometry = {j.at("height").get<int>(), j.at("width").get<int>()};
    c.input_channels = j.at("input_channels").get<int>();
    c.stack = {j.at("layers").get<int>(), j.at("hidden_channels").get<int>()};
    c.trunk = j.at("trunk").get<std::vector<int>>();
    c.classes = j.at("classes").get<int>();
    c.frame_outputs = j.at("frame_outputs").get<int>();
    return c;
}

nlohmann::ordered_json to_json(const SegmentConfig& c) {
    return {{"clip_frames", c.clip_frames}, {"clips_per_segment", c.clips_per_segment}, {"frame_size", c.frame_size}};
}

SegmentConfig segment_config_from_json(const json& j) {
    reject_unknown(j, "segment", {"clip_frames", "clips_per_segment", "frame_size"});
    SegmentConfig c;
    read(j, "clip_frames", c.clip_frames);
    read(j, "clips_per_segment", c.clips_per_segment);
    read(j, "frame_size", c.frame_size);
    return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"seed", c.seed},
            {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
            {"loss", {{"lambda1", c.loss.lambda1}, {"lambda2", c.loss.lambda2}, {"gamma", c.loss.gamma}}}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    read(j, "learning_rate", c.learning_rate);
    read(j, "weight_decay", c.weight_decay);
    read(j, "batch_size", c.batch_size);
    read(j, "max_epochs", c.max_epochs);
    read(j, "seed", c.seed);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        reject_unknown(a, "train.adam", {"beta1", "beta2", "epsilon"});
        read(a, "beta1", c.adam.beta1);
        read(a, "beta2", c.adam.beta2);
        read(a, "epsilon", c.adam.epsilon);
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        reject_unknown(l, "loss", {"lambda1", "lambda2", "gamma"});
        read(l, "lambda1", c.loss.lambda1);
        read(l, "lambda2", c.loss.lambda2);
        read(l, "gamma", c.loss.gamma);
    }
    return c;
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    try {
        reject_unknown(j, "", {"segment", "backbone", "model", "train", "loss", "paths"});
        if (j.contains("segment")) c.segment = segment_config_from_json(j.at("segment"));
        if (j.contains("backbone")) {
            const auto& b = j.at("backbone");
            reject_unknown(b, "backbone", {"kind", "seed"});
            if (b.contains("kind")) c.backbone.kind = parse_backbone(b.at("kind").get<std::string>());
            read(b, "seed", c.backbone.seed);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            reject_unknown(m, "model", {"layers", "hidden_channels", "trunk"});
            read(m, "layers", c.stack.layers);
            read(m, "hidden_channels", c.stack.hidden_channels);
            read(m, "trunk", c.trunk);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            reject_unknown(t, "train", {"learning_rate", "weight_decay", "batch_size", "max_epochs", "seed", "adam",
                                        "checkpoint_every", "broadcast_video_labels"});
            json core = t;
            core.erase("checkpoint_every");
            core.erase("broadcast_video_labels");
            c.train = train_config_from_json(core);
            read(t, "checkpoint_every", c.checkpoint_every);
            read(t, "broadcast_video_labels", c.broadcast_video_labels);
        }
        if (j.contains("loss")) {
            const auto& l = j.at("loss");
            reject_unknown(l, "loss", {"lambda1", "lambda2", "gamma"});
            read(l, "lambda1", c.train.loss.lambda1);
            read(l, "lambda2", c.train.loss.lambda2);
            read(l, "gamma", c.train.loss.gamma);
        }
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            reject_unknown(p, "paths", {"catalog", "features", "split", "out"});
            if (p.contains("catalog")) c.paths.catalog = resolve(base_dir, p.at("catalog").get<std::string>());
            if (p.contains("features")) c.paths.features = resolve(base_dir, p.at("features").get<std::string>());
            if (p.contains("split")) c.paths.split = resolve(base_dir, p.at("split").get<std::string>());
            if (p.contains("out")) c.paths.out = resolve(base_dir, p.at("out").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    } catch (const UsageError& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["segment"] = to_json(c.segment);
    j["backbone"] = {{"kind", to_string(c.backbone.kind)}, {"seed", c.backbone.seed}};
    j["model"] = {{"layers", c.stack.layers}, {"hidden_channels", c.stack.hidden_channels}, {"trunk", c.trunk}};
    auto t = to_json(c.train);
    t.erase("loss");
    t["checkpoint_every"] = c.checkpoint_every;
    t["broadcast_video_labels"] = c.broadcast_video_labels;
    j["train"] = t;
    j["loss"] = {{"lambda1", c.train.loss.lambda1}, {"lambda2", c.train.loss.lambda2}, {"gamma", c.train.loss.gamma}};
    j["paths"] = {{"catalog", c.paths.catalog.string()},
                  {"features", c.paths.features.string()},
                  {"split", c.paths.split.string()},
                  {"out", c.paths.out.string()}};
    return j;
}

}  // namespace lad
