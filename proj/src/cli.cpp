#include "lad/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lad/config.hpp"
#include "lad/error.hpp"
#include "lad/evaluate.hpp"
#include "lad/serve.hpp"
#include "lad/synthetic.hpp"

namespace lad {

namespace {

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string percent(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << 100.0 * v << "%";
    return ss.str();
}

struct RunInputs {
    RunConfig config;
    std::vector<VideoEntry> catalog;
    std::vector<VideoEntry> train_videos;
    std::vector<VideoEntry> test_videos;
    SplitSpec split;
};

RunInputs load_inputs(const RunConfig& config) {
    if (config.paths.catalog.empty()) throw UsageError("config paths.catalog is required");
    RunInputs in{config, load_catalog(config.paths.catalog), {}, {}, {}};
    if (config.broadcast_video_labels) broadcast_video_labels(in.catalog);
    if (config.paths.split.empty()) {
        in.split.mode = SupervisionMode::fully;
        for (const auto& v : in.catalog) in.split.train_ids.push_back(v.video_id);
        in.train_videos = in.catalog;
        in.test_videos = in.catalog;
        return in;
    }
    in.split = load_split(config.paths.split);
    std::map<std::string, const VideoEntry*> by_id;
    for (const auto& v : in.catalog) by_id[v.video_id] = &v;
    auto pick = [&](const std::vector<std::string>& ids, std::vector<VideoEntry>& out) {
        for (const auto& id : ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) throw ValidationError("split references unknown video " + id);
            out.push_back(*it->second);
        }
    };
    pick(in.split.train_ids, in.train_videos);
    pick(in.split.test_ids, in.test_videos);
    return in;
}

FeatureLookup lookup_for(const RunConfig& config) {
    return file_feature_lookup(config.backbone, config.paths.features, config.segment);
}

Checkpoint train_run(const RunInputs& in, std::ostream& out, const std::filesystem::path& out_dir, bool verbose) {
    const auto& cfg = in.config;
    const auto examples = build_examples(in.split, in.catalog, cfg.segment, cfg.backbone.kind, lookup_for(cfg));
    out << "training on " << examples.size() << " segments from " << in.split.train_ids.size() << " videos ("
        << "input_channels=" << cfg.backbone.input_channels() << ")\n";
    TrainOptions options;
    options.log_path = out_dir / "train_log.jsonl";
    options.checkpoint_dir = out_dir / "checkpoints";
    options.checkpoint_every = cfg.checkpoint_every;
    if (verbose) {
        options.on_epoch = [&out](const EpochRecord& r) {
            out << "epoch " << r.epoch << " loss " << std::setprecision(6) << r.mean_loss << " train_auc "
                << r.train_auc << " train_acc " << r.train_acc << "\n";
        };
    }
    std::filesystem::remove(*options.log_path);
    return train(cfg.model_config(), cfg.segment, cfg.backbone.kind, cfg.train, examples, options).checkpoint;
}

void check_fingerprint(const Checkpoint& ck, const RunConfig& cfg) {
    std::vector<std::string> diffs;
    if (!(ck.model.config == cfg.model_config())) diffs.push_back("model shape");
    if (!(ck.segment == cfg.segment)) diffs.push_back("segment config");
    if (ck.backbone != cfg.backbone.kind) diffs.push_back("backbone");
    if (!diffs.empty()) {
        std::string what;
        for (const auto& d : diffs) what += (what.empty() ? "" : ", ") + d;
        throw ValidationError("checkpoint/config fingerprint mismatch: " + what);
    }
}

void write_eval_outputs(const EvalReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_roc(dir / "roc.tsv", report.roc.curve);
    write_confusion(dir / "confusion.tsv", report.confusion, false);
    write_confusion(dir / "confusion_normalized.tsv", report.confusion, true);
    std::ofstream pred(dir / "predictions.tsv");
    pred << "video_id\ttrue\tpredicted\n";
    for (std::size_t i = 0; i < report.tracks.size(); ++i) {
        pred << report.tracks[i].video_id << "\t" << kCategoryNames[report.truth[i]] << "\t"
             << kCategoryNames[report.predicted[i]] << "\n";
    }
    std::ofstream scores(dir / "scores.jsonl");
    for (const auto& t : report.tracks) {
        scores << nlohmann::ordered_json{{"video_id", t.video_id}, {"scores", t.scores}}.dump() << "\n";
    }
    std::ofstream metrics(dir / "metrics.json");
    metrics << nlohmann::ordered_json{{"auc", report.auc}, {"accuracy", report.accuracy}}.dump(1) << "\n";
}

void print_eval(const EvalReport& report, std::ostream& out) {
    out << "Frame-level AUC: " << percent(report.auc) << "\n";
    out << "Classification accuracy: " << percent(report.accuracy) << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void print_split_table(const SplitSpec& split, std::span<const VideoEntry> catalog, std::ostream& out) {
    std::set<std::string> abnormal;
    for (const auto& v : catalog) {
        if (v.is_abnormal()) abnormal.insert(v.video_id);
    }
    auto count = [&](const std::vector<std::string>& ids) {
        return std::count_if(ids.begin(), ids.end(), [&](const auto& id) { return abnormal.count(id) > 0; });
    };
    const auto train_abn = count(split.train_ids);
    const auto test_abn = count(split.test_ids);
    out << "Split: " << to_string(split.mode) << " (seed " << split.seed << ")\n";
    out << "Subset\tVideos\tAbnormal\tNormal\n";
    out << "Train\t" << split.train_ids.size() << "\t" << train_abn << "\t"
        << static_cast<long>(split.train_ids.size()) - train_abn << "\n";
    out << "Test\t" << split.test_ids.size() << "\t" << test_abn << "\t"
        << static_cast<long>(split.test_ids.size()) - test_abn << "\n";
    out << "Training may read: " << split.visible_labels() << "\n";
}

int cmd_aggregate(const std::filesystem::path& catalog_path, const std::filesystem::path& annotation_dir,
                  const std::filesystem::path& out_path, std::ostream& out) {
    auto catalog = load_catalog(catalog_path);
    const auto records = load_annotation_dir(annotation_dir);
    if (records.empty()) throw UsageError("no annotation records found in " + annotation_dir.string());
    std::map<std::string, std::vector<AnnotationRecord>> by_video;
    for (const auto& r : records) by_video[r.video_id].push_back(r);
    std::map<std::string, VideoEntry*> index;
    for (auto& v : catalog) index[v.video_id] = &v;
    for (const auto& [id, recs] : by_video) {
        const auto it = index.find(id);
        if (it == index.end()) throw ValidationError("annotation records for unknown video " + id);
        auto& video = *it->second;
        video.frame_labels = aggregate_frame_labels(recs, video.frame_count);
        out << id << "\t" << recs.size() << " annotators\t" << video.frame_labels.abnormal_count()
            << " abnormal frames\n";
    }
    save_catalog(out_path, catalog);
    out << "wrote " << out_path.string() << " (" << by_video.size() << " labelled videos)\n";
    return 0;
}

int cmd_stats(const std::filesystem::path& catalog_path, const std::filesystem::path& out_dir, std::ostream& out) {
    const auto catalog = load_catalog(catalog_path);
    const auto stats = compute_stats(catalog);
    out << "Category\tVideos\tAbnormal\tAnomalyRatio\n";
    for (const auto& c : stats.categories) {
        out << category_name(c.category) << "\t" << c.videos << "\t" << c.abnormal_videos << "\t";
        if (c.anomaly_ratio) {
            out << std::fixed << std::setprecision(4) << *c.anomaly_ratio << std::defaultfloat;
        } else {
            out << "NA";
        }
        out << "\n";
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream v(out_dir / "video_stats.tsv");
        v << "video_id\tcategory\tframe_count\tanomaly_ratio\n";
        for (const auto& s : stats.videos) {
            v << s.video_id << "\t" << category_name(s.category) << "\t" << s.frame_count << "\t" << s.anomaly_ratio << "\n";
        }
        std::ofstream c(out_dir / "category_stats.tsv");
        c << "category\tvideos\tabnormal_videos\tanomaly_ratio\n";
        for (const auto& s : stats.categories) {
            c << category_name(s.category) << "\t" << s.videos << "\t" << s.abnormal_videos << "\t"
              << (s.anomaly_ratio ? std::to_string(*s.anomaly_ratio) : "NA") << "\n";
        }
    }
    return 0;
}

int cmd_sweep(RunConfig base, const std::string& param, const std::vector<std::string>& values,
              const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err) {
    if (param != "K" && param != "lambda2" && param != "backbone") {
        throw UsageError("sweep parameter must be one of K, lambda2, backbone");
    }
    if (values.empty()) throw UsageError("sweep needs at least one value");
    std::filesystem::create_directories(out_dir);
    std::vector<std::pair<std::string, double>> rows;
    for (const auto& value : values) {
        try {
            auto cfg = base;
            if (param == "K") {
                std::size_t used = 0;
                const int k = std::stoi(value, &used);
                if (used != value.size() || k < 1) throw UsageError("K must be a positive integer");
                cfg.segment.clips_per_segment = k;
            } else if (param == "lambda2") {
                std::size_t used = 0;
                const double l = std::stod(value, &used);
                if (used != value.size() || !(l >= 0)) throw UsageError("lambda2 must be a non-negative number");
                cfg.train.loss.lambda2 = l;
            } else {
                cfg.backbone.kind = parse_backbone(value);
            }
            cfg.validate();
            out << param << "=" << value << " input_channels=" << cfg.backbone.input_channels() << "\n";
            const auto in = load_inputs(cfg);
            const auto run_dir = out_dir / (param + "_" + value);
            const auto ck = train_run(in, out, run_dir, false);
            const auto report = evaluate(ck, in.test_videos, lookup_for(cfg));
            out << param << "=" << value << " AUC " << percent(report.auc) << "\n";
            rows.emplace_back(value, report.auc);
        } catch (const std::exception& e) {
            err << "warning: skipping " << param << "=" << value << ": " << one_line(e.what()) << "\n";
        }
    }
    if (rows.empty()) throw UsageError("every sweep value failed");
    std::ofstream table(out_dir / ("sweep_" + param + ".tsv"));
    table << param << "\tauc\n" << std::setprecision(10);
    for (const auto& [v, auc] : rows) table << v << "\t" << auc << "\n";
    out << "wrote " << (out_dir / ("sweep_" + param + ".tsv")).string() << "\n";
    return rows.size() == values.size() ? 0 : 3;
}

AnnotationServer* g_server = nullptr;

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fully-supervised video anomaly detection: data protocol, training and evaluation", "lad"};
    app.require_subcommand(1);

    std::string config_path, catalog_path, annotations_dir, out_path, split_mode = "fully", checkpoint_path;
    std::string frames_root, host = "127.0.0.1", param, values, synth_kind = "toy";
    std::uint64_t seed = 0;
    int port = 8080, test_abnormal = 20, test_normal = 20, epochs = -1;
    bool macro = false, exclude_normal = false;

    auto* agg = app.add_subcommand("aggregate", "Aggregate annotator records into catalog frame labels");
    agg->add_option("--catalog", catalog_path, "Catalog with video metadata")->required()->envname("LAD_CATALOG");
    agg->add_option("--annotations", annotations_dir, "Directory of annotation record files")->required();
    agg->add_option("--out", out_path, "Output catalog")->required();

    auto* split = app.add_subcommand("split", "Generate a train/test split");
    split->add_option("--catalog", catalog_path)->required()->envname("LAD_CATALOG");
    split->add_option("--mode", split_mode)->check(CLI::IsMember({"unsupervised", "weakly", "fully"}));
    split->add_option("--seed", seed);
    split->add_option("--test-abnormal", test_abnormal, "Abnormal test videos per category");
    split->add_option("--test-normal", test_normal, "Normal test videos per category");
    split->add_option("--out", out_path, "Split file to write")->required();

    auto* stats = app.add_subcommand("stats", "Per-category and per-video anomaly statistics");
    stats->add_option("--catalog", catalog_path)->required()->envname("LAD_CATALOG");
    stats->add_option("--out", out_path, "Directory for TSV tables");

    auto* synth = app.add_subcommand("synth", "Write a synthetic catalog (benchmark) or planted toy dataset (toy)");
    synth->add_option("--kind", synth_kind)->check(CLI::IsMember({"benchmark", "toy"}));
    synth->add_option("--seed", seed);
    synth->add_option("--out", out_path)->required();

    auto* trn = app.add_subcommand("train", "Train the model");
    trn->add_option("--config", config_path)->required();
    trn->add_option("--seed", seed);
    trn->add_option("--epochs", epochs);
    trn->add_option("--out", out_path)->envname("LAD_OUT");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--config", config_path)->required();
    ev->add_option("--checkpoint", checkpoint_path)->required();
    ev->add_option("--out", out_path)->envname("LAD_OUT");
    ev->add_flag("--macro", macro, "Mean per-video AUC instead of pooled frames");
    ev->add_flag("--exclude-normal", exclude_normal, "Leave normal videos out of the confusion matrix");

    auto* sweep = app.add_subcommand("sweep", "Retrain and evaluate across values of one parameter");
    sweep->add_option("--config", config_path)->required();
    sweep->add_option("--param", param)->required()->check(CLI::IsMember({"K", "lambda2", "backbone"}));
    sweep->add_option("--values", values, "Comma-separated values")->required();
    sweep->add_option("--seed", seed);
    sweep->add_option("--epochs", epochs);
    sweep->add_option("--out", out_path)->envname("LAD_OUT");

    auto* serve = app.add_subcommand("serve", "Serve frames and accept annotation records");
    serve->add_option("--catalog", catalog_path)->required()->envname("LAD_CATALOG");
    serve->add_option("--frames", frames_root, "Root of per-video frame directories")->required();
    serve->add_option("--annotations", annotations_dir, "Where posted records are stored")->required();
    serve->add_option("--host", host);
    serve->add_option("--port", port)->envname("LAD_PORT");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        auto apply_overrides = [&](RunConfig& cfg, CLI::App* sub) {
            auto given = [sub](const char* name) {
                const auto* opt = sub->get_option_no_throw(name);
                return opt != nullptr && opt->count() > 0;
            };
            if (given("--seed")) cfg.train.seed = seed;
            if (given("--epochs")) cfg.train.max_epochs = epochs;
            if (!out_path.empty()) cfg.paths.out = out_path;
            cfg.validate();
        };
        if (*agg) return cmd_aggregate(catalog_path, annotations_dir, out_path, out);
        if (*split) {
            const auto catalog = load_catalog(catalog_path);
            const auto spec = make_split(catalog, parse_mode(split_mode), {test_abnormal, test_normal}, seed);
            save_split(out_path, spec);
            print_split_table(spec, catalog, out);
            return 0;
        }
        if (*stats) return cmd_stats(catalog_path, out_path, out);
        if (*synth) {
            if (synth_kind == "benchmark") {
                const auto catalog = synthetic_benchmark_catalog(seed);
                save_catalog(std::filesystem::path(out_path) / "catalog.jsonl", catalog);
                out << "wrote " << catalog.size() << " videos\n";
            } else {
                PlantedToyConfig tc;
                tc.seed = seed;
                const auto toy = make_planted_toy(tc);
                write_planted_toy(toy, out_path);
                out << "wrote " << toy.catalog.size() << " videos with features\n";
            }
            return 0;
        }
        if (*trn) {
            auto cfg = load_run_config(config_path);
            apply_overrides(cfg, trn);
            const auto in = load_inputs(cfg);
            const auto ck = train_run(in, out, cfg.paths.out, true);
            const auto path = cfg.paths.out / "model.ckpt";
            save_checkpoint(path, ck);
            out << "wrote " << path.string() << "\n";
            return 0;
        }
        if (*ev) {
            auto cfg = load_run_config(config_path);
            apply_overrides(cfg, ev);
            const auto ck = load_checkpoint(checkpoint_path);
            check_fingerprint(ck, cfg);
            const auto in = load_inputs(cfg);
            const auto report = evaluate(ck, in.test_videos, lookup_for(cfg), {macro, exclude_normal});
            print_eval(report, out);
            write_eval_outputs(report, cfg.paths.out);
            return 0;
        }
        if (*sweep) {
            auto cfg = load_run_config(config_path);
            apply_overrides(cfg, sweep);
            return cmd_sweep(cfg, param, split_list(values), cfg.paths.out, out, err);
        }
        if (*serve) {
            AnnotationService service(load_catalog(catalog_path), frames_root, annotations_dir);
            AnnotationServer server(service);
            const int bound = server.bind(host, port);
            if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
            out << "serving annotations on http://" << host << ":" << bound << "\n" << std::flush;
            g_server = &server;
            std::signal(SIGINT, [](int) {
                if (g_server) g_server->stop();
            });
            server.listen();
            g_server = nullptr;
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 2;
}

}  // namespace lad
