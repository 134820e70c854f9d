#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lad/convlstm.hpp"
#include "lad/heads.hpp"

namespace lad {

struct ModelConfig {
    GridGeometry geometry{4, 4};
    int input_channels = 128;
    StackConfig stack;
    std::vector<int> trunk = {1024, 512};
    int classes = 14;
    int frame_outputs = 80;

    int global_dim() const { return geometry.positions() * stack.hidden_channels; }
    HeadConfig head_config() const { return {global_dim(), trunk, classes, frame_outputs}; }
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Scalar>
struct NamedParam {
    std::string name;
    Mat<Scalar>* value;
    bool decay;  // weight matrices decay, biases do not
};

/// Recurrent context stream plus multi-task heads.
template <typename Scalar>
struct Model {
    ModelConfig config;
    ConvLstmStack<Scalar> stack;
    HeadParams<Scalar> heads;

    static Model zeros(const ModelConfig& config) {
        return {config, ConvLstmStack<Scalar>::zeros(config.geometry, config.input_channels, config.stack),
                HeadParams<Scalar>::zeros(config.head_config())};
    }

    static Model initialized(const ModelConfig& config, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        Model m;
        m.config = config;
        m.stack = ConvLstmStack<Scalar>::initialized(config.geometry, config.input_channels, config.stack, rng);
        m.heads = HeadParams<Scalar>::initialized(config.head_config(), rng);
        return m;
    }

    Model zeros_like() const { return zeros(config); }

    std::vector<NamedParam<Scalar>> parameters() {
        std::vector<NamedParam<Scalar>> out;
        auto collect = [&out](const std::string& name, Mat<Scalar>& m, bool decay) {
            out.push_back({name, &m, decay});
        };
        stack.visit(collect);
        heads.visit([&](const std::string& name, Mat<Scalar>& m, bool decay) { collect("heads." + name, m, decay); });
        return out;
    }

    template <typename Other>
    Model<Other> cast() const {
        auto copy = *this;
        auto out = Model<Other>::zeros(config);
        auto src = copy.parameters();
        auto dst = out.parameters();
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template cast<Other>();
        return out;
    }
};

template <typename Scalar>
HeadOutputs<Scalar> predict_segment(const Model<Scalar>& model, std::span<const Mat<Scalar>> clips) {
    const auto out = run_stack(clips, model.stack);
    return forward_heads(flatten_global_feature(out.final_hidden, model.config.geometry,
                                                model.config.stack.hidden_channels),
                         model.heads);
}

template <typename Scalar>
struct SegmentTargets {
    Vec<Scalar> frames;  // 0/1 per output frame
    Vec<Scalar> mask;    // 1 for real frames, 0 for tail padding
    int category = 0;
};

template <typename Scalar>
struct SegmentLoss {
    Scalar total = 0;
    Scalar classification = 0;
    Scalar score = 0;
    HeadOutputs<Scalar> outputs;
};

/// lambda1 * L_cls + lambda2 * L_score for one segment. When `grads` is
/// given, the gradient of that total is accumulated into it.
template <typename Scalar>
SegmentLoss<Scalar> segment_loss(const Model<Scalar>& model, std::span<const Mat<Scalar>> clips,
                                 const SegmentTargets<Scalar>& targets, const LossConfig& loss,
                                 Model<Scalar>* grads = nullptr) {
    const auto& cfg = model.config;
    if (targets.category < 0 || targets.category >= cfg.classes) {
        throw ValidationError("segment_loss: category index out of range");
    }
    StackTape<Scalar> stack_tape;
    HeadTape<Scalar> head_tape;
    const auto out = run_stack(clips, model.stack, grads ? &stack_tape : nullptr);
    const Vec<Scalar> feature = flatten_global_feature(out.final_hidden, cfg.geometry, cfg.stack.hidden_channels);

    SegmentLoss<Scalar> result;
    result.outputs = forward_heads(feature, model.heads, grads ? &head_tape : nullptr);
    const Vec<Scalar> one_hot = Vec<Scalar>::Unit(cfg.classes, targets.category);
    result.classification = loss_classification(result.outputs.class_probs, one_hot, model.heads, loss.gamma);
    result.score = loss_score(result.outputs.frame_scores, targets.frames, targets.mask);
    result.total = loss_total(result.classification, result.score, loss);

    if (grads) {
        const Scalar l1 = Scalar(loss.lambda1);
        const Scalar l2 = Scalar(loss.lambda2);
        Vec<Scalar> d_class = l1 * (result.outputs.class_probs - one_hot);
        const auto& s = result.outputs.frame_scores;
        Vec<Scalar> d_score(s.size());
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            const bool counted = targets.mask.size() == 0 || targets.mask[i] != Scalar(0);
            d_score[i] = counted ? l2 * smooth_derivative(s[i] - targets.frames[i]) * s[i] * (Scalar(1) - s[i])
                                 : Scalar(0);
        }
        const Vec<Scalar> d_feature = backward_heads(head_tape, model.heads, d_class, d_score, grads->heads);
        if (loss.gamma != 0) {
            const Scalar k = l1 * Scalar(2 * loss.gamma);
            for (std::size_t l = 0; l < model.heads.trunk_weights.size(); ++l) {
                grads->heads.trunk_weights[l] += k * model.heads.trunk_weights[l];
            }
            grads->heads.class_weight += k * model.heads.class_weight;
            grads->heads.score_weight += k * model.heads.score_weight;
        }
        run_stack_backward(stack_tape, model.stack,
                           unflatten_global_feature(d_feature, cfg.geometry, cfg.stack.hidden_channels),
                           grads->stack);
    }
    return result;
}

}  // namespace lad
