// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "lad/config.hpp"
#include "lad/convlstm.hpp"
#include "lad/datamodel.hpp"
#include "lad/evaluate.hpp"
#include "lad/heads.hpp"
#include "lad/metrics.hpp"
#include "lad/model.hpp"
#include "lad/synthetic.hpp"
#include "lad/trainer.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

using namespace lad;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void criterion(const char* name, double time_limit_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (time_limit_s > 0 && secs >= time_limit_s) {
        o.pass = false;
        o.detail += "; over the " + std::to_string(static_cast<int>(time_limit_s)) + " s budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-28s %6.1fs  %s\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Every check appends to the detail and clears pass on failure.
struct Checks {
    Outcome out;
    void expect(bool ok, const std::string& what) {
        if (!out.detail.empty()) out.detail += "; ";
        out.detail += what;
        if (!ok) {
            out.pass = false;
            out.detail += " [x]";
        }
    }
};

Outcome cell_oracle() {
    std::mt19937_64 rng(9001);
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
    Checks c;
    c.expect(worst < 1e-10, "50 instances, max |diff| " + fmt("%.2e", worst));
    return c.out;
}

Outcome gradient_check() {
    ModelConfig cfg;
    cfg.geometry = {2, 2};
    cfg.input_channels = 3;
    cfg.stack = {2, 2};
    cfg.trunk = {6, 5};
    cfg.classes = 4;
    cfg.frame_outputs = 6;

    std::mt19937_64 rng(4242);
    double worst_rel = 0, worst_small = 0;
    std::size_t checked = 0, small = 0;
    std::string worst_entry;
    for (double gamma : {0.0, 0.05}) {
        auto model = Model<double>::zeros(cfg);
        for (auto& p : model.parameters()) *p.value = oracle::random_mat(p.value->rows(), p.value->cols(), rng, 0.6);
        std::vector<Mat<double>> clips;
        for (int k = 0; k < 3; ++k) clips.push_back(oracle::random_mat(4, 3, rng));
        SegmentTargets<double> targets;
        targets.frames = (Vec<double>(6) << 0, 1, 1, 0, 1, 0).finished();
        targets.mask = (Vec<double>(6) << 1, 1, 1, 1, 1, 0).finished();
        targets.category = 1;
        const LossConfig loss{1.0, 10.0, gamma};

        auto grads = model.zeros_like();
        segment_loss<double>(model, clips, targets, loss, &grads);
        const auto r = oracle::finite_difference(
            model, grads, [&] { return static_cast<double>(segment_loss<double>(model, clips, targets, loss).total); },
            1e-5);
        if (r.max_rel_error > worst_rel) {
            // recheck the worst entry with a coarser step, where roundoff in the loss matters less
            auto param = model.parameters()[r.worst_param];
            const double coarse = oracle::central_difference(
                param.value->data()[r.worst_index],
                [&] { return static_cast<double>(segment_loss<double>(model, clips, targets, loss).total); }, 1e-4);
            worst_entry = "worst " + param.name + "[" + std::to_string(r.worst_index) + "] |g| " +
                          fmt("%.2e", std::abs(r.worst_analytic)) + ", rel " +
                          fmt("%.1e", std::abs(coarse - r.worst_analytic) / std::abs(r.worst_analytic)) +
                          " at step 1e-4";
        }
        worst_rel = std::max(worst_rel, r.max_rel_error);
        worst_small = std::max(worst_small, r.max_abs_error_small);
        checked += r.checked;
        small += r.small;
    }
    Checks c;
    c.expect(worst_rel < 1e-4, "max rel error " + fmt("%.2e", worst_rel) + " over " + std::to_string(checked) + " entries");
    c.expect(worst_small < 1e-9, std::to_string(small) + " entries below 1e-6 within abs " + fmt("%.1e", worst_small));
    c.out.detail += "; " + worst_entry;
    return c.out;
}

Outcome smooth_loss() {
    double worst = 0;
    for (double sign : {-1.0, 1.0}) {
        for (int k = -10; k <= 10; ++k) {
            const double x = sign * (1.0 + k * 1e-3);
            const bool inner = std::abs(x) <= 1;
            worst = std::max(worst, std::abs(smooth(x) - (inner ? 0.5 * x * x : std::abs(x) - 0.5)));
            worst = std::max(worst, std::abs(smooth_derivative(x) - (inner ? x : sign)));
        }
        worst = std::max(worst, std::abs(smooth(sign * (1 - 1e-12)) - smooth(sign * (1 + 1e-12))));
        worst = std::max(worst, std::abs(smooth_derivative(sign * (1 - 1e-12)) - smooth_derivative(sign * (1 + 1e-12))));
    }
    const Vec<double> zero = Vec<double>::Zero(1);
    auto at = [&](double x) { return loss_score(Vec<double>(Vec<double>::Constant(1, x)), zero); };
    Checks c;
    c.expect(worst < 1e-9, "knot mismatch " + fmt("%.1e", worst));
    c.expect(at(0) == 0.0 && at(1) == 0.5 && at(2) == 1.5,
             "x=0/1/2 -> " + fmt("%g", at(0)) + "/" + fmt("%g", at(1)) + "/" + fmt("%g", at(2)));
    return c.out;
}

Outcome classification_loss() {
    const auto none = HeadParams<double>::zeros({4, {}, kNumCategories, 80});
    const Vec<double> uniform = Vec<double>::Constant(kNumCategories, 1.0 / kNumCategories);
    const Vec<double> target = Vec<double>::Unit(kNumCategories, 5);
    const double l_uniform = loss_classification(uniform, target, none, 0.0);
    const double l_exact = loss_classification(target, target, none, 0.0);
    Checks c;
    c.expect(std::abs(l_uniform - std::log(14.0)) < 1e-6, "uniform " + fmt("%.6f", l_uniform));
    c.expect(l_exact == 0.0, "exact " + fmt("%g", l_exact));
    return c.out;
}

Outcome auc_oracle() {
    std::mt19937_64 rng(31337);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 199);
        std::vector<double> s(n);
        std::vector<std::uint8_t> l(n);
        for (int i = 0; i < n; ++i) {
            s[i] = (trial % 2) ? static_cast<double>(rng() % 8) : std::uniform_real_distribution<>(0, 1)(rng);
            l[i] = rng() % 2;
        }
        l[0] = 1;
        l[1] = 0;
        const std::vector<ScoredTrack> tracks{{"t", s, l}};
        worst = std::max(worst, std::abs(roc_auc(tracks).auc - oracle::pairwise_auc(s, l)));
    }
    const std::vector<ScoredTrack> constant{{"c", std::vector<double>(50, 0.3), std::vector<std::uint8_t>(50, 0)}};
    auto mixed = constant;
    for (int i = 0; i < 50; i += 3) mixed[0].labels[i] = 1;
    bool raised = false;
    try {
        roc_auc(constant);
    } catch (const UndefinedAucError&) {
        raised = true;
    }
    Checks c;
    c.expect(worst < 1e-12, "200 tracks, max |diff| " + fmt("%.1e", worst));
    c.expect(roc_auc(mixed).auc == 0.5, "constant scores " + fmt("%g", roc_auc(mixed).auc));
    c.expect(raised, "single class raises");
    return c.out;
}

Outcome aggregation() {
    std::mt19937_64 rng(55);
    const std::int64_t frames = 1000;
    std::vector<AnnotationRecord> records;
    std::vector<std::vector<std::uint8_t>> marks;
    for (int a = 0; a < 5; ++a) {
        AnnotationRecord r{"v", "ann" + std::to_string(a), {}};
        std::vector<std::uint8_t> m(frames, 0);
        for (int k = 0; k < 12; ++k) {
            const auto start = static_cast<std::int64_t>(rng() % frames);
            const auto end = std::min<std::int64_t>(frames - 1, start + static_cast<std::int64_t>(rng() % 120));
            r.intervals.push_back({start, end});
            for (auto f = start; f <= end; ++f) m[f] = 1;
        }
        records.push_back(std::move(r));
        marks.push_back(std::move(m));
    }
    const auto track = aggregate_frame_labels(records, frames);
    std::int64_t mismatches = 0, abnormal = 0;
    for (std::int64_t f = 0; f < frames; ++f) {
        std::vector<std::uint8_t> votes;
        for (const auto& m : marks) votes.push_back(m[f]);
        mismatches += track.labels[f] != oracle::majority(votes);
        abnormal += track.labels[f];
    }
    FrameLabelTrack zeros{"z", std::vector<std::uint8_t>(500, 0)};
    FrameLabelTrack single = zeros;
    single.labels[317] = 1;
    Checks c;
    c.expect(mismatches == 0, "1000 frames, " + std::to_string(mismatches) + " mismatches (" + std::to_string(abnormal) +
                                  " abnormal)");
    c.expect(!video_label(zeros) && video_label(single), "any-frame video label");
    return c.out;
}

Outcome split_counts() {
    const auto catalog = synthetic_benchmark_catalog(0);
    Checks c;
    c.expect(catalog.size() == 2000, std::to_string(catalog.size()) + " videos");
    for (auto mode : {SupervisionMode::fully, SupervisionMode::weakly}) {
        const auto s = make_split(catalog, mode, {}, 11);
        c.expect(s.train_ids.size() == 1440 && s.test_ids.size() == 560,
                 to_string(mode) + " " + std::to_string(s.train_ids.size()) + "/" + std::to_string(s.test_ids.size()));
    }
    const auto u = make_split(catalog, SupervisionMode::unsupervised, {}, 11);
    std::map<std::string, const VideoEntry*> index;
    for (const auto& v : catalog) index[v.video_id] = &v;
    int abnormal = 0;
    for (const auto& id : u.train_ids) abnormal += index.at(id)->is_abnormal();
    c.expect(abnormal == 0, "unsupervised train abnormal " + std::to_string(abnormal));
    return c.out;
}

struct ToyRun {
    Checkpoint checkpoint;
    EvalReport report;
    int epochs = 0;
};

ToyRun run_toy(const PlantedToy& toy, RunConfig cfg) {
    const auto examples = build_examples(toy.all_videos_split(), toy.catalog, toy.segment, cfg.backbone.kind,
                                         toy.lookup());
    auto result = train(cfg.model_config(), toy.segment, cfg.backbone.kind, cfg.train, examples);
    auto report = evaluate(result.checkpoint, toy.catalog, toy.lookup());
    return {std::move(result.checkpoint), std::move(report), cfg.train.max_epochs};
}

Outcome end_to_end(const PlantedToy& toy) {
    const auto cfg = planted_toy_run_config();
    const auto t0 = Clock::now();
    const auto full = run_toy(toy, cfg);
    auto ablated_cfg = cfg;
    ablated_cfg.train.loss.lambda2 = 0;
    const auto ablated = run_toy(toy, ablated_cfg);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    Checks c;
    c.expect(full.epochs <= 200, std::to_string(full.epochs) + " epochs");
    c.expect(full.report.auc >= 0.95, "train AUC " + fmt("%.4f", full.report.auc));
    c.expect(full.report.accuracy >= 0.90, "train accuracy " + fmt("%.4f", full.report.accuracy));
    c.expect(ablated.report.auc <= 0.6, "lambda2=0 AUC " + fmt("%.4f", ablated.report.auc));
    c.expect(secs < 300, "both runs " + fmt("%.0f", secs) + " s");
    return c.out;
}

std::string checkpoint_bytes(const Checkpoint& ck, const test::Scratch& dir, const std::string& name) {
    save_checkpoint(dir / name, ck);
    return test::read_file(dir / name);
}

bool same_predictions(const EvalReport& a, const EvalReport& b) {
    if (a.predicted != b.predicted || a.tracks.size() != b.tracks.size()) return false;
    if (std::memcmp(&a.auc, &b.auc, sizeof(double)) != 0) return false;
    for (std::size_t i = 0; i < a.tracks.size(); ++i) {
        const auto& x = a.tracks[i].scores;
        const auto& y = b.tracks[i].scores;
        if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

Outcome determinism(const PlantedToy& toy) {
    test::Scratch dir("accept_det");
    auto cfg = planted_toy_run_config();
    cfg.train.max_epochs = 5;
    cfg.train.seed = 17;
    const auto a = run_toy(toy, cfg);
    const auto b = run_toy(toy, cfg);
    const auto ba = checkpoint_bytes(a.checkpoint, dir, "a.ckpt");
    const auto bb = checkpoint_bytes(b.checkpoint, dir, "b.ckpt");
    Checks c;
    c.expect(ba == bb, "checkpoints " + std::string(ba == bb ? "identical" : "differ") + " (" +
                           std::to_string(ba.size()) + " bytes)");
    c.expect(same_predictions(a.report, b.report), "eval outputs identical");
    return c.out;
}

Outcome checkpoint_round_trip(const PlantedToy& toy) {
    test::Scratch dir("accept_ckpt");
    auto cfg = planted_toy_run_config();
    cfg.train.max_epochs = 3;
    const auto run = run_toy(toy, cfg);
    save_checkpoint(dir / "m.ckpt", run.checkpoint);
    const auto loaded = load_checkpoint(dir / "m.ckpt");
    const auto again = evaluate(loaded, toy.catalog, toy.lookup());
    Checks c;
    c.expect(same_predictions(run.report, again), std::to_string(again.tracks.size()) + " videos bit-identical");
    c.expect(checkpoint_bytes(loaded, dir, "again.ckpt") == test::read_file(dir / "m.ckpt"), "re-save identical");
    return c.out;
}

}  // namespace

int main() {
    const auto toy = make_planted_toy({});

    criterion("convlstm cell oracle", 10, cell_oracle);
    criterion("gradient check", 60, gradient_check);
    criterion("smooth loss continuity", 0, smooth_loss);
    criterion("classification loss", 0, classification_loss);
    criterion("auc oracle", 0, auc_oracle);
    criterion("annotation aggregation", 0, aggregation);
    criterion("split counts", 0, split_counts);
    criterion("end-to-end planted toy", 300, [&] { return end_to_end(toy); });
    criterion("determinism", 0, [&] { return determinism(toy); });
    criterion("checkpoint round trip", 0, [&] { return checkpoint_round_trip(toy); });

    std::printf("%s: %d failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
