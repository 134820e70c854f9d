#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lad/error.hpp"
#include "lad/tensor.hpp"

namespace lad {

// Column blocks of the fused gate pre-activation, each `hidden` wide.
enum Gate : int { kGateInput = 0, kGateForget = 1, kGateCell = 2, kGateOutput = 3 };
inline constexpr int kNumGates = 4;
inline constexpr int kKernelTaps = 9;  // 3x3

/// Weights of one convolutional LSTM layer.
///
/// A 3x3 kernel from `c_in` to `c_out` channels is stored as a
/// (9 * c_in) x c_out matrix: row `tap * c_in + ci` with `tap = ky * 3 + kx`.
/// The four gate kernels are fused along columns in the order i, f, c, o.
/// Peephole weights are per position and channel, shaped like the cell state.
template <typename Scalar>
struct ConvLstmParams {
    GridGeometry geometry;
    int in_channels = 0;
    int hidden_channels = 0;
    Mat<Scalar> input_kernel;   // (9 * in) x (4 * hidden)
    Mat<Scalar> hidden_kernel;  // (9 * hidden) x (4 * hidden)
    Mat<Scalar> bias;           // 1 x (4 * hidden)
    Mat<Scalar> peephole_input;   // positions x hidden
    Mat<Scalar> peephole_forget;  // positions x hidden
    Mat<Scalar> peephole_output;  // positions x hidden

    static ConvLstmParams zeros(GridGeometry geometry, int in_channels, int hidden_channels) {
        ConvLstmParams p;
        p.geometry = geometry;
        p.in_channels = in_channels;
        p.hidden_channels = hidden_channels;
        p.input_kernel = Mat<Scalar>::Zero(kKernelTaps * in_channels, kNumGates * hidden_channels);
        p.hidden_kernel = Mat<Scalar>::Zero(kKernelTaps * hidden_channels, kNumGates * hidden_channels);
        p.bias = Mat<Scalar>::Zero(1, kNumGates * hidden_channels);
        p.peephole_input = Mat<Scalar>::Zero(geometry.positions(), hidden_channels);
        p.peephole_forget = p.peephole_input;
        p.peephole_output = p.peephole_input;
        return p;
    }

    // Kernels uniform in +-1/sqrt(fan_in) with fan_in = 9 * (in + hidden),
    // forget-gate bias 1, everything else 0.
    template <typename Rng>
    static ConvLstmParams initialized(GridGeometry geometry, int in_channels, int hidden_channels, Rng& rng) {
        auto p = zeros(geometry, in_channels, hidden_channels);
        const double bound = 1.0 / std::sqrt(static_cast<double>(kKernelTaps * (in_channels + hidden_channels)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index i = 0; i < p.input_kernel.size(); ++i) p.input_kernel.data()[i] = Scalar(dist(rng));
        for (Eigen::Index i = 0; i < p.hidden_kernel.size(); ++i) p.hidden_kernel.data()[i] = Scalar(dist(rng));
        p.bias.middleCols(kGateForget * hidden_channels, hidden_channels).setOnes();
        return p;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "input_kernel", input_kernel, true);
        f(prefix + "hidden_kernel", hidden_kernel, true);
        f(prefix + "bias", bias, false);
        f(prefix + "peephole_input", peephole_input, true);
        f(prefix + "peephole_forget", peephole_forget, true);
        f(prefix + "peephole_output", peephole_output, true);
    }

    void validate() const {
        const auto P = geometry.positions();
        const auto G = kNumGates * hidden_channels;
        if (in_channels <= 0 || hidden_channels <= 0 || P <= 0) {
            throw ValidationError("convlstm: channels and geometry must be positive");
        }
        if (input_kernel.rows() != kKernelTaps * in_channels || input_kernel.cols() != G ||
            hidden_kernel.rows() != kKernelTaps * hidden_channels || hidden_kernel.cols() != G ||
            bias.rows() != 1 || bias.cols() != G || peephole_input.rows() != P ||
            peephole_input.cols() != hidden_channels || peephole_forget.rows() != P ||
            peephole_forget.cols() != hidden_channels || peephole_output.rows() != P ||
            peephole_output.cols() != hidden_channels) {
            throw ValidationError("convlstm: parameter shapes inconsistent with geometry/channels");
        }
    }
};

template <typename Scalar>
struct ConvLstmState {
    Mat<Scalar> hidden;  // positions x hidden_channels
    Mat<Scalar> cell;

    static ConvLstmState zeros(GridGeometry geometry, int hidden_channels) {
        return {Mat<Scalar>::Zero(geometry.positions(), hidden_channels),
                Mat<Scalar>::Zero(geometry.positions(), hidden_channels)};
    }
};

/// Patch matrix for a 3x3, stride-1, zero-padded "same" convolution:
/// row p holds the 9 neighbours of position p, channels contiguous per tap.
template <typename Scalar>
Mat<Scalar> im2col(const Mat<Scalar>& x, GridGeometry g) {
    const auto C = x.cols();
    Mat<Scalar> cols = Mat<Scalar>::Zero(g.positions(), kKernelTaps * C);
    for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
            const int p = r * g.width + c;
            for (int ky = 0; ky < 3; ++ky) {
                const int rr = r + ky - 1;
                if (rr < 0 || rr >= g.height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int cc = c + kx - 1;
                    if (cc < 0 || cc >= g.width) continue;
                    cols.block(p, (ky * 3 + kx) * C, 1, C) = x.row(rr * g.width + cc);
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatters patch gradients back onto the feature map.
template <typename Scalar>
Mat<Scalar> col2im(const Mat<Scalar>& cols, GridGeometry g, Eigen::Index channels) {
    Mat<Scalar> x = Mat<Scalar>::Zero(g.positions(), channels);
    for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
            const int p = r * g.width + c;
            for (int ky = 0; ky < 3; ++ky) {
                const int rr = r + ky - 1;
                if (rr < 0 || rr >= g.height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int cc = c + kx - 1;
                    if (cc < 0 || cc >= g.width) continue;
                    x.row(rr * g.width + cc) += cols.block(p, (ky * 3 + kx) * channels, 1, channels);
                }
            }
        }
    }
    return x;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// Activations of one step, kept for backpropagation.
template <typename Scalar>
struct StepCache {
    Mat<Scalar> input_cols;
    Mat<Scalar> hidden_cols;
    Mat<Scalar> prev_cell;
    Mat<Scalar> input_gate, forget_gate, candidate, output_gate;
    Mat<Scalar> cell, tanh_cell;
};

/// One recurrence step:
///   i = sig(Wxi*X + Whi*H' + Wci.C' + bi)     f = sig(Wxf*X + Whf*H' + Wcf.C' + bf)
///   C = f.C' + i.tanh(Wxc*X + Whc*H' + bc)
///   o = sig(Wxo*X + Who*H' + Wco.C + bo)      H = o.tanh(C)
/// where * is the same-padded 3x3 convolution and . the Hadamard product.
template <typename Scalar>
ConvLstmState<Scalar> cell_step(const Mat<Scalar>& input, const ConvLstmState<Scalar>& state,
                                const ConvLstmParams<Scalar>& params, StepCache<Scalar>* cache = nullptr) {
    const auto& g = params.geometry;
    const int hid = params.hidden_channels;
    if (input.rows() != g.positions() || input.cols() != params.in_channels) {
        throw ValidationError("cell_step: input is " + std::to_string(input.rows()) + "x" +
                              std::to_string(input.cols()) + ", expected " + std::to_string(g.positions()) +
                              "x" + std::to_string(params.in_channels));
    }
    if (state.hidden.rows() != g.positions() || state.hidden.cols() != hid ||
        state.cell.rows() != g.positions() || state.cell.cols() != hid) {
        throw ValidationError("cell_step: state shape does not match parameters");
    }
    if (!input.allFinite() || !state.hidden.allFinite() || !state.cell.allFinite()) {
        throw ValidationError("cell_step: non-finite input or state");
    }

    Mat<Scalar> x_cols = im2col(input, g);
    Mat<Scalar> h_cols = im2col(state.hidden, g);
    Mat<Scalar> z = x_cols * params.input_kernel;
    z.noalias() += h_cols * params.hidden_kernel;
    z.rowwise() += params.bias.row(0);

    auto sig = [](Scalar v) { return sigmoid(v); };
    auto th = [](Scalar v) { return std::tanh(v); };
    const auto& prev_cell = state.cell;

    Mat<Scalar> i_gate = (z.middleCols(kGateInput * hid, hid).array() +
                          params.peephole_input.array() * prev_cell.array()).unaryExpr(sig);
    Mat<Scalar> f_gate = (z.middleCols(kGateForget * hid, hid).array() +
                          params.peephole_forget.array() * prev_cell.array()).unaryExpr(sig);
    Mat<Scalar> cand = z.middleCols(kGateCell * hid, hid).unaryExpr(th);
    Mat<Scalar> cell = f_gate.array() * prev_cell.array() + i_gate.array() * cand.array();
    Mat<Scalar> o_gate = (z.middleCols(kGateOutput * hid, hid).array() +
                          params.peephole_output.array() * cell.array()).unaryExpr(sig);
    Mat<Scalar> tanh_cell = cell.unaryExpr(th);
    Mat<Scalar> hidden = o_gate.array() * tanh_cell.array();

    if (cache) {
        cache->input_cols = std::move(x_cols);
        cache->hidden_cols = std::move(h_cols);
        cache->prev_cell = prev_cell;
        cache->input_gate = std::move(i_gate);
        cache->forget_gate = std::move(f_gate);
        cache->candidate = std::move(cand);
        cache->output_gate = std::move(o_gate);
        cache->cell = cell;
        cache->tanh_cell = std::move(tanh_cell);
    }
    return {std::move(hidden), std::move(cell)};
}

/// Backward pass of one step. `d_hidden`/`d_cell` are gradients w.r.t.
/// this step's outputs; on return they hold gradients w.r.t. the previous
/// state. Parameter gradients accumulate into `grads`. Returns the
/// gradient w.r.t. the step input.
template <typename Scalar>
Mat<Scalar> cell_step_backward(const StepCache<Scalar>& cache, const ConvLstmParams<Scalar>& params,
                               Mat<Scalar>& d_hidden, Mat<Scalar>& d_cell, ConvLstmParams<Scalar>& grads) {
    const int hid = params.hidden_channels;
    const auto one = Scalar(1);
    auto i = cache.input_gate.array();
    auto f = cache.forget_gate.array();
    auto g = cache.candidate.array();
    auto o = cache.output_gate.array();
    auto tc = cache.tanh_cell.array();

    Mat<Scalar> da_o = d_hidden.array() * tc * o * (one - o);
    Mat<Scalar> dc = d_cell.array() + d_hidden.array() * o * (one - tc * tc) +
                     da_o.array() * params.peephole_output.array();
    grads.peephole_output.array() += da_o.array() * cache.cell.array();

    Mat<Scalar> da_i = dc.array() * g * i * (one - i);
    Mat<Scalar> da_f = dc.array() * cache.prev_cell.array() * f * (one - f);
    Mat<Scalar> da_g = dc.array() * i * (one - g * g);
    grads.peephole_input.array() += da_i.array() * cache.prev_cell.array();
    grads.peephole_forget.array() += da_f.array() * cache.prev_cell.array();

    d_cell = dc.array() * f + da_i.array() * params.peephole_input.array() +
             da_f.array() * params.peephole_forget.array();

    Mat<Scalar> dz(dc.rows(), kNumGates * hid);
    dz.middleCols(kGateInput * hid, hid) = da_i;
    dz.middleCols(kGateForget * hid, hid) = da_f;
    dz.middleCols(kGateCell * hid, hid) = da_g;
    dz.middleCols(kGateOutput * hid, hid) = da_o;

    grads.bias.row(0) += dz.colwise().sum();
    grads.input_kernel.noalias() += cache.input_cols.transpose() * dz;
    grads.hidden_kernel.noalias() += cache.hidden_cols.transpose() * dz;

    Mat<Scalar> dh_cols = dz * params.hidden_kernel.transpose();
    d_hidden = col2im(dh_cols, params.geometry, hid);
    Mat<Scalar> dx_cols = dz * params.input_kernel.transpose();
    return col2im(dx_cols, params.geometry, params.in_channels);
}

struct StackConfig {
    int layers = 2;
    int hidden_channels = 128;
    friend bool operator==(const StackConfig&, const StackConfig&) = default;
};

template <typename Scalar>
struct ConvLstmStack {
    std::vector<ConvLstmParams<Scalar>> layers;

    static ConvLstmStack zeros(GridGeometry g, int in_channels, const StackConfig& config) {
        ConvLstmStack s;
        for (int l = 0; l < config.layers; ++l) {
            s.layers.push_back(ConvLstmParams<Scalar>::zeros(g, l == 0 ? in_channels : config.hidden_channels,
                                                             config.hidden_channels));
        }
        return s;
    }

    template <typename Rng>
    static ConvLstmStack initialized(GridGeometry g, int in_channels, const StackConfig& config, Rng& rng) {
        ConvLstmStack s;
        for (int l = 0; l < config.layers; ++l) {
            s.layers.push_back(ConvLstmParams<Scalar>::initialized(
                g, l == 0 ? in_channels : config.hidden_channels, config.hidden_channels, rng));
        }
        return s;
    }

    template <typename F>
    void visit(F&& f) {
        for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit("convlstm." + std::to_string(l) + ".", f);
    }

    void validate() const {
        if (layers.empty()) throw ValidationError("convlstm stack needs at least one layer");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].validate();
            if (l > 0 && (layers[l].in_channels != layers[l - 1].hidden_channels ||
                          !(layers[l].geometry == layers[l - 1].geometry))) {
                throw ValidationError("convlstm: layer " + std::to_string(l) +
                                      " input channels do not match layer " + std::to_string(l - 1) + " output");
            }
        }
    }
};

template <typename Scalar>
struct StackOutput {
    Mat<Scalar> final_hidden;                     // top layer, last step
    std::vector<std::vector<Mat<Scalar>>> hidden;  // [layer][step]
};

// Per-layer, per-step caches of a forward pass.
template <typename Scalar>
using StackTape = std::vector<std::vector<StepCache<Scalar>>>;

/// Runs the stack over the K inputs from zero initial state. Layer l > 0
/// consumes the hidden sequence of layer l - 1.
template <typename Scalar>
StackOutput<Scalar> run_stack(std::span<const Mat<Scalar>> inputs, const ConvLstmStack<Scalar>& stack,
                              StackTape<Scalar>* tape = nullptr) {
    if (inputs.empty()) throw ValidationError("run_stack: need at least one input step");
    stack.validate();
    StackOutput<Scalar> out;
    if (tape) tape->assign(stack.layers.size(), {});
    std::vector<Mat<Scalar>> sequence(inputs.begin(), inputs.end());
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        const auto& params = stack.layers[l];
        auto state = ConvLstmState<Scalar>::zeros(params.geometry, params.hidden_channels);
        std::vector<Mat<Scalar>> hidden;
        for (const auto& x : sequence) {
            StepCache<Scalar>* cache = nullptr;
            if (tape) cache = &(*tape)[l].emplace_back();
            state = cell_step(x, state, params, cache);
            hidden.push_back(state.hidden);
        }
        out.hidden.push_back(hidden);
        sequence = std::move(hidden);
    }
    out.final_hidden = sequence.back();
    return out;
}

/// Backpropagation through time for a loss that depends only on the top
/// layer's final hidden state. Accumulates into `grads`.
template <typename Scalar>
void run_stack_backward(const StackTape<Scalar>& tape, const ConvLstmStack<Scalar>& stack,
                        const Mat<Scalar>& d_final_hidden, ConvLstmStack<Scalar>& grads) {
    const std::size_t L = stack.layers.size();
    const std::size_t K = tape.front().size();
    // External gradient on each step's hidden output of the current layer.
    std::vector<Mat<Scalar>> d_outputs(K, Mat<Scalar>::Zero(d_final_hidden.rows(), d_final_hidden.cols()));
    d_outputs.back() = d_final_hidden;
    for (std::size_t l = L; l-- > 0;) {
        const auto& params = stack.layers[l];
        Mat<Scalar> d_hidden = Mat<Scalar>::Zero(params.geometry.positions(), params.hidden_channels);
        Mat<Scalar> d_cell = d_hidden;
        std::vector<Mat<Scalar>> d_inputs(K);
        for (std::size_t t = K; t-- > 0;) {
            d_hidden += d_outputs[t];
            d_inputs[t] = cell_step_backward(tape[l][t], params, d_hidden, d_cell, grads.layers[l]);
        }
        d_outputs = std::move(d_inputs);
    }
}

/// Row-major flatten: entry (r, c, ch) lands at r*W*C + c*C + ch.
template <typename Scalar>
Vec<Scalar> flatten_global_feature(const Mat<Scalar>& hidden, GridGeometry g, int channels) {
    if (hidden.rows() != g.positions() || hidden.cols() != channels) {
        throw ValidationError("flatten_global_feature: expected " + std::to_string(g.height) + "x" +
                              std::to_string(g.width) + "x" + std::to_string(channels) + " map");
    }
    return Eigen::Map<const Vec<Scalar>>(hidden.data(), hidden.size());
}

template <typename Scalar>
Mat<Scalar> unflatten_global_feature(const Vec<Scalar>& flat, GridGeometry g, int channels) {
    if (flat.size() != static_cast<Eigen::Index>(g.positions()) * channels) {
        throw ValidationError("unflatten_global_feature: length does not match geometry");
    }
    return Eigen::Map<const Mat<Scalar>>(flat.data(), g.positions(), channels);
}

}  // namespace lad
