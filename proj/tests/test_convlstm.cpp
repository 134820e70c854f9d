#include <doctest.h>

#include <random>

#include "lad/convlstm.hpp"
#include "oracles.hpp"

using namespace lad;

TEST_CASE("cell step matches the per-pixel loop oracle") {
    std::mt19937_64 rng(2024);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const GridGeometry g{1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4)};
        const int cin = 1 + static_cast<int>(rng() % 4);
        const int hid = 1 + static_cast<int>(rng() % 4);
        const auto params = oracle::random_params(g, cin, hid, rng);
        const auto x = oracle::random_mat(g.positions(), cin, rng, 2.0);
        const ConvLstmState<double> state{oracle::random_mat(g.positions(), hid, rng),
                                          oracle::random_mat(g.positions(), hid, rng, 2.0)};
        const auto got = cell_step(x, state, params);
        const auto want = oracle::cell_reference(x, {state.hidden, state.cell}, params);
        worst = std::max({worst, (got.hidden - want.hidden).cwiseAbs().maxCoeff(),
                          (got.cell - want.cell).cwiseAbs().maxCoeff()});
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("zero weights halve the cell") {
    const GridGeometry g{4, 4};
    const auto params = ConvLstmParams<double>::zeros(g, 3, 5);
    std::mt19937_64 rng(1);
    const ConvLstmState<double> state{oracle::random_mat(16, 5, rng), oracle::random_mat(16, 5, rng, 3.0)};
    StepCache<double> cache;
    const auto next = cell_step(oracle::random_mat(16, 3, rng), state, params, &cache);
    CHECK((cache.input_gate.array() == 0.5).all());
    CHECK((cache.forget_gate.array() == 0.5).all());
    CHECK((cache.output_gate.array() == 0.5).all());
    CHECK((next.cell - 0.5 * state.cell).cwiseAbs().maxCoeff() < 1e-15);
    const Mat<double> expect = (0.5 * (0.5 * state.cell.array()).tanh()).matrix();
    CHECK((next.hidden - expect).cwiseAbs().maxCoeff() < 1e-15);

    const auto rest = cell_step(oracle::random_mat(16, 3, rng), ConvLstmState<double>::zeros(g, 5), params);
    CHECK(rest.cell.isZero(0));
    CHECK(rest.hidden.isZero(0));
}

TEST_CASE("gate activations stay in range and hidden below one") {
    std::mt19937_64 rng(8);
    const GridGeometry g{3, 3};
    // magnitudes kept small enough that no pre-activation rounds sigmoid to exactly 0 or 1
    const auto params = oracle::random_params(g, 2, 3, rng, 0.5);
    ConvLstmState<double> state = ConvLstmState<double>::zeros(g, 3);
    for (int t = 0; t < 20; ++t) {
        StepCache<double> cache;
        state = cell_step(oracle::random_mat(9, 2, rng, 2.0), state, params, &cache);
        for (const auto* gate : {&cache.input_gate, &cache.forget_gate, &cache.output_gate}) {
            CHECK(gate->minCoeff() > 0.0);
            CHECK(gate->maxCoeff() < 1.0);
        }
        CHECK(state.hidden.cwiseAbs().maxCoeff() < 1.0);
    }
}

TEST_CASE("cell step rejects bad shapes and non-finite input") {
    const GridGeometry g{2, 2};
    const auto params = ConvLstmParams<double>::zeros(g, 3, 2);
    const auto state = ConvLstmState<double>::zeros(g, 2);
    CHECK_THROWS_AS(cell_step(Mat<double>(Mat<double>::Zero(4, 2)), state, params), ValidationError);
    CHECK_THROWS_AS(cell_step(Mat<double>(Mat<double>::Zero(3, 3)), state, params), ValidationError);
    Mat<double> x = Mat<double>::Zero(4, 3);
    x(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cell_step(x, state, params), ValidationError);
}

TEST_CASE("single-step stack is the composition of two cell steps") {
    std::mt19937_64 rng(4);
    const GridGeometry g{4, 4};
    ConvLstmStack<double> stack;
    stack.layers.push_back(oracle::random_params(g, 3, 4, rng));
    stack.layers.push_back(oracle::random_params(g, 4, 4, rng));
    const std::vector<Mat<double>> x{oracle::random_mat(16, 3, rng)};
    const auto out = run_stack<double>(x, stack);
    const auto h1 = cell_step(x[0], ConvLstmState<double>::zeros(g, 4), stack.layers[0]);
    const auto h2 = cell_step(h1.hidden, ConvLstmState<double>::zeros(g, 4), stack.layers[1]);
    CHECK(out.final_hidden == h2.hidden);
    REQUIRE(out.hidden.size() == 2);
    CHECK(out.hidden[0][0] == h1.hidden);
}

TEST_CASE("zero stack gives zero output from zero state") {
    // with zero weights the cell never leaves zero, so every entry equals the closed-form constant 0
    const GridGeometry g{4, 4};
    const auto stack = ConvLstmStack<double>::zeros(g, 128, {});
    std::mt19937_64 rng(6);
    std::vector<Mat<double>> xs;
    for (int k = 0; k < 5; ++k) xs.push_back(oracle::random_mat(16, 128, rng));
    const auto out = run_stack<double>(xs, stack);
    CHECK(out.final_hidden.rows() == 16);
    CHECK(out.final_hidden.cols() == 128);
    CHECK(out.final_hidden.isZero(0));
}

TEST_CASE("defaults give a 4x4x128 context that flattens to 2048") {
    std::mt19937_64 rng(9);
    const auto stack = ConvLstmStack<float>::initialized({4, 4}, 128, {}, rng);
    std::vector<Mat<float>> xs(5, Mat<float>::Random(16, 128));
    const auto out = run_stack<float>(xs, stack);
    CHECK(out.final_hidden.rows() == 16);
    CHECK(out.final_hidden.cols() == 128);
    CHECK(flatten_global_feature(out.final_hidden, {4, 4}, 128).size() == 2048);
}

TEST_CASE("flatten is row-major and invertible") {
    Mat<double> h(16, 128);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            for (int ch = 0; ch < 128; ++ch) h(r * 4 + c, ch) = r * 1000000 + c * 1000 + ch;
        }
    }
    const auto flat = flatten_global_feature(h, {4, 4}, 128);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            for (int ch = 0; ch < 128; ++ch) CHECK(flat[r * 512 + c * 128 + ch] == h(r * 4 + c, ch));
        }
    }
    CHECK(unflatten_global_feature(flat, {4, 4}, 128) == h);
    CHECK_THROWS_AS(flatten_global_feature(h, {4, 4}, 64), ValidationError);
}

TEST_CASE("stack gradients match finite differences") {
    std::mt19937_64 rng(12);
    const GridGeometry g{2, 3};
    ConvLstmStack<double> stack;
    stack.layers.push_back(oracle::random_params(g, 2, 3, rng));
    stack.layers.push_back(oracle::random_params(g, 3, 3, rng));
    std::vector<Mat<double>> xs;
    for (int k = 0; k < 3; ++k) xs.push_back(oracle::random_mat(6, 2, rng));
    const Mat<double> weights = oracle::random_mat(6, 3, rng);
    auto loss = [&] { return run_stack<double>(xs, stack).final_hidden.cwiseProduct(weights).sum(); };

    StackTape<double> tape;
    run_stack<double>(xs, stack, &tape);
    auto grads = ConvLstmStack<double>::zeros(g, 2, {2, 3});
    run_stack_backward(tape, stack, weights, grads);

    double worst = 0;
    for (std::size_t l = 0; l < 2; ++l) {
        std::vector<std::pair<Mat<double>*, Mat<double>*>> pairs;
        auto& p = stack.layers[l];
        auto& q = grads.layers[l];
        pairs = {{&p.input_kernel, &q.input_kernel},       {&p.hidden_kernel, &q.hidden_kernel},
                 {&p.bias, &q.bias},                       {&p.peephole_input, &q.peephole_input},
                 {&p.peephole_forget, &q.peephole_forget}, {&p.peephole_output, &q.peephole_output}};
        for (auto [value, grad] : pairs) {
            for (Eigen::Index i = 0; i < value->size(); ++i) {
                const double saved = value->data()[i];
                value->data()[i] = saved + 1e-5;
                const double up = loss();
                value->data()[i] = saved - 1e-5;
                const double down = loss();
                value->data()[i] = saved;
                const double numeric = (up - down) / 2e-5;
                const double a = grad->data()[i];
                const double scale = std::max(std::abs(a), std::abs(numeric));
                if (scale > 1e-8) worst = std::max(worst, std::abs(a - numeric) / scale);
            }
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("forward pass is deterministic") {
    std::mt19937_64 rng(3);
    const auto stack = ConvLstmStack<float>::initialized({4, 4}, 8, {2, 4}, rng);
    std::vector<Mat<float>> xs(3, Mat<float>::Random(16, 8));
    CHECK(run_stack<float>(xs, stack).final_hidden == run_stack<float>(xs, stack).final_hidden);
}

TEST_CASE("stack validation catches broken channel chains") {
    std::mt19937_64 rng(1);
    ConvLstmStack<double> stack;
    stack.layers.push_back(oracle::random_params({2, 2}, 2, 3, rng));
    stack.layers.push_back(oracle::random_params({2, 2}, 4, 3, rng));
    std::vector<Mat<double>> xs{Mat<double>::Zero(4, 2)};
    CHECK_THROWS_AS(run_stack<double>(xs, stack), ValidationError);
    CHECK_THROWS_AS(run_stack<double>({}, stack), ValidationError);
}
