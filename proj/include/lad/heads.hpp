#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lad/convlstm.hpp"
#include "lad/error.hpp"
#include "lad/tensor.hpp"

namespace lad {

struct HeadConfig {
    int input_dim = 2048;
    std::vector<int> trunk = {1024, 512};
    int classes = 14;
    int frame_outputs = 80;
};

/// Shared rectified trunk followed by a softmax category head and a
/// logistic per-frame score head. Weights are out x in, biases out x 1.
template <typename Scalar>
struct HeadParams {
    std::vector<Mat<Scalar>> trunk_weights;
    std::vector<Mat<Scalar>> trunk_biases;
    Mat<Scalar> class_weight, class_bias;
    Mat<Scalar> score_weight, score_bias;

    static HeadParams zeros(const HeadConfig& config) {
        HeadParams p;
        int in = config.input_dim;
        for (int width : config.trunk) {
            p.trunk_weights.push_back(Mat<Scalar>::Zero(width, in));
            p.trunk_biases.push_back(Mat<Scalar>::Zero(width, 1));
            in = width;
        }
        p.class_weight = Mat<Scalar>::Zero(config.classes, in);
        p.class_bias = Mat<Scalar>::Zero(config.classes, 1);
        p.score_weight = Mat<Scalar>::Zero(config.frame_outputs, in);
        p.score_bias = Mat<Scalar>::Zero(config.frame_outputs, 1);
        return p;
    }

    // Trunk: He-uniform weights, zero biases. Output layers start at zero so
    // an untrained model predicts the uniform category distribution and 0.5
    // for every frame.
    template <typename Rng>
    static HeadParams initialized(const HeadConfig& config, Rng& rng) {
        auto p = zeros(config);
        for (auto& w : p.trunk_weights) {
            const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = Scalar(dist(rng));
        }
        return p;
    }

    template <typename F>
    void visit(F&& f) {
        for (std::size_t l = 0; l < trunk_weights.size(); ++l) {
            f("trunk." + std::to_string(l) + ".weight", trunk_weights[l], true);
            f("trunk." + std::to_string(l) + ".bias", trunk_biases[l], false);
        }
        f("class.weight", class_weight, true);
        f("class.bias", class_bias, false);
        f("score.weight", score_weight, true);
        f("score.bias", score_bias, false);
    }

    // Sum of squared entries of every weight matrix (biases excluded).
    Scalar weight_norm_squared() const {
        Scalar total = class_weight.squaredNorm() + score_weight.squaredNorm();
        for (const auto& w : trunk_weights) total += w.squaredNorm();
        return total;
    }

    Eigen::Index input_dim() const {
        return trunk_weights.empty() ? class_weight.cols() : trunk_weights.front().cols();
    }
};

template <typename Scalar>
struct HeadOutputs {
    Vec<Scalar> class_probs;
    Vec<Scalar> frame_scores;

    int predicted_class() const {
        Eigen::Index best = 0;
        class_probs.maxCoeff(&best);
        return static_cast<int>(best);
    }
};

template <typename Scalar>
struct HeadTape {
    Vec<Scalar> input;
    std::vector<Vec<Scalar>> activations;  // post-rectifier output of each trunk layer
};

template <typename Scalar>
Vec<Scalar> softmax(const Vec<Scalar>& logits) {
    Vec<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

template <typename Scalar>
HeadOutputs<Scalar> forward_heads(const Vec<Scalar>& feature, const HeadParams<Scalar>& params,
                                  HeadTape<Scalar>* tape = nullptr) {
    if (feature.size() != params.input_dim()) {
        throw ValidationError("forward_heads: feature length " + std::to_string(feature.size()) +
                              ", expected " + std::to_string(params.input_dim()));
    }
    if (!feature.allFinite()) throw ValidationError("forward_heads: non-finite global feature");
    Vec<Scalar> h = feature;
    if (tape) tape->input = feature;
    for (std::size_t l = 0; l < params.trunk_weights.size(); ++l) {
        h = (params.trunk_weights[l] * h + params.trunk_biases[l]).cwiseMax(Scalar(0));
        if (tape) tape->activations.push_back(h);
    }
    HeadOutputs<Scalar> out;
    out.class_probs = softmax<Scalar>(params.class_weight * h + params.class_bias);
    out.frame_scores = (params.score_weight * h + params.score_bias).unaryExpr([](Scalar v) { return sigmoid(v); });
    return out;
}

/// Backward pass given gradients w.r.t. the class and score logits.
/// Accumulates into `grads`; returns the gradient w.r.t. the input feature.
template <typename Scalar>
Vec<Scalar> backward_heads(const HeadTape<Scalar>& tape, const HeadParams<Scalar>& params,
                           const Vec<Scalar>& d_class_logits, const Vec<Scalar>& d_score_logits,
                           HeadParams<Scalar>& grads) {
    const std::size_t L = params.trunk_weights.size();
    const Vec<Scalar>& top = L ? tape.activations.back() : tape.input;
    grads.class_weight.noalias() += d_class_logits * top.transpose();
    grads.class_bias += d_class_logits;
    grads.score_weight.noalias() += d_score_logits * top.transpose();
    grads.score_bias += d_score_logits;
    Vec<Scalar> d = params.class_weight.transpose() * d_class_logits;
    d.noalias() += params.score_weight.transpose() * d_score_logits;
    for (std::size_t l = L; l-- > 0;) {
        const auto& act = tape.activations[l];
        d = (act.array() > Scalar(0)).select(d, Scalar(0));
        const Vec<Scalar>& below = l ? tape.activations[l - 1] : tape.input;
        grads.trunk_weights[l].noalias() += d * below.transpose();
        grads.trunk_biases[l] += d;
        d = params.trunk_weights[l].transpose() * d;
    }
    return d;
}

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 10.0;
    double gamma = 0.0;

    void validate() const {
        if (!(lambda1 >= 0) || !(lambda2 >= 0) || !(gamma >= 0)) {
            throw ValidationError("loss weights lambda1, lambda2, gamma must be >= 0");
        }
    }
};

inline constexpr double kLogClamp = 1e-12;

/// Cross-entropy against a one-hot target plus gamma * ||W||^2 over all
/// trunk and head weight matrices.
template <typename Scalar>
Scalar loss_classification(const Vec<Scalar>& class_probs, const Vec<Scalar>& target,
                           const HeadParams<Scalar>& params, double gamma) {
    if (target.size() != class_probs.size()) throw ValidationError("loss_classification: length mismatch");
    int ones = 0;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        if (target[i] == Scalar(1)) {
            ++ones;
        } else if (target[i] != Scalar(0)) {
            ones = -1;
            break;
        }
    }
    if (ones != 1) throw ValidationError("loss_classification: target is not one-hot");
    Scalar loss = 0;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        if (target[i] != Scalar(0)) loss -= target[i] * std::log(std::max(class_probs[i], Scalar(kLogClamp)));
    }
    if (gamma != 0) loss += Scalar(gamma) * params.weight_norm_squared();
    return loss;
}

template <typename Scalar>
Scalar smooth(Scalar x) {
    const Scalar a = std::abs(x);
    return a <= Scalar(1) ? Scalar(0.5) * x * x : a - Scalar(0.5);
}

template <typename Scalar>
Scalar smooth_derivative(Scalar x) {
    return std::clamp(x, Scalar(-1), Scalar(1));
}

/// Sum of smooth(s_i - target_i) over frames whose mask entry is nonzero.
/// An empty mask means every frame counts.
template <typename Scalar>
Scalar loss_score(const Vec<Scalar>& scores, const Vec<Scalar>& targets, const Vec<Scalar>& mask = {}) {
    if (scores.size() != targets.size() || (mask.size() != 0 && mask.size() != scores.size())) {
        throw ValidationError("loss_score: length mismatch");
    }
    Scalar loss = 0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (mask.size() == 0 || mask[i] != Scalar(0)) loss += smooth(scores[i] - targets[i]);
    }
    return loss;
}

template <typename Scalar>
Scalar loss_total(Scalar classification, Scalar score, const LossConfig& config) {
    if (!std::isfinite(static_cast<double>(classification)) || !std::isfinite(static_cast<double>(score))) {
        throw ValidationError("loss_total: non-finite component loss");
    }
    return Scalar(config.lambda1) * classification + Scalar(config.lambda2) * score;
}

}  // namespace lad
