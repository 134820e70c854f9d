#include <doctest.h>

#include <random>
#include <set>

#include "lad/error.hpp"
#include "lad/videopipe.hpp"
#include "scratch.hpp"

using namespace lad;

TEST_CASE("segment windows for exact, single and padded videos") {
    const SegmentConfig cfg;
    CHECK(cfg.segment_frames() == 80);

    auto w = segment_video(160, cfg);
    REQUIRE(w.size() == 2);
    CHECK(w[0].frames.front() == 0);
    CHECK(w[0].frames.back() == 79);
    CHECK(w[1].frames.front() == 80);
    CHECK(w[1].frames.back() == 159);
    CHECK(w[1].valid == 80);

    CHECK(segment_video(80, cfg).size() == 1);

    w = segment_video(90, cfg);
    REQUIRE(w.size() == 2);
    CHECK(w[1].valid == 10);
    for (int k = 0; k < 10; ++k) CHECK(w[1].frames[k] == 80 + k);
    for (int k = 10; k < 80; ++k) CHECK(w[1].frames[k] == 89);

    CHECK(segment_count(1, cfg) == 1);
    CHECK(segment_count(81, cfg) == 2);
    CHECK_THROWS_AS(segment_video(0, cfg), ValidationError);
}

TEST_CASE("windows partition the real frames") {
    for (int m : {1, 3, 16}) {
        for (int k : {1, 2, 5}) {
            const SegmentConfig cfg{m, k, 224};
            for (std::int64_t frames : {1, 7, 79, 80, 81, 333}) {
                std::set<std::int64_t> seen;
                std::int64_t total = 0;
                for (const auto& w : segment_video(frames, cfg)) {
                    CHECK(static_cast<int>(w.frames.size()) == m * k);
                    for (int i = 0; i < w.valid; ++i) seen.insert(w.frames[i]);
                    total += w.valid;
                }
                CHECK(total == frames);
                CHECK(static_cast<std::int64_t>(seen.size()) == frames);
            }
        }
    }
}

TEST_CASE("segment config validation") {
    CHECK_THROWS_AS((SegmentConfig{0, 5, 224}).validate(), ValidationError);
    CHECK_THROWS_AS((SegmentConfig{16, 0, 224}).validate(), ValidationError);
}

TEST_CASE("preprocessing: constant frame becomes zero") {
    RgbImage img{30, 40, std::vector<std::uint8_t>(30 * 40 * 3, 128)};
    const auto out = preprocess_frame(img, {});
    for (const auto& plane : out) {
        CHECK(plane.rows() == 224);
        CHECK(plane.cols() == 224);
        CHECK(plane.abs().maxCoeff() == 0.0);
    }
}

TEST_CASE("preprocessing: shape and zero mean for random input") {
    std::mt19937 rng(3);
    for (auto [h, w] : {std::pair{448, 448}, std::pair{17, 300}, std::pair{1, 1}}) {
        RgbImage img{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * 3)};
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng());
        const auto out = preprocess_frame(img, {});
        for (const auto& plane : out) {
            CHECK(plane.rows() == 224);
            CHECK(plane.cols() == 224);
            CHECK(std::abs(plane.mean()) < 1e-6);
            CHECK(plane.isFinite().all());
        }
    }
    CHECK_THROWS_AS(preprocess_frame(RgbImage{}, {}), ValidationError);
}

TEST_CASE("preprocessing: downscale by two averages pixel pairs") {
    // a 448-wide image alternating 0/200 columns becomes a constant 100 row before mean removal,
    // so every channel is zero afterwards
    RgbImage img{448, 448, std::vector<std::uint8_t>(448 * 448 * 3)};
    for (int r = 0; r < 448; ++r) {
        for (int c = 0; c < 448; ++c) {
            for (int ch = 0; ch < 3; ++ch) img.pixels[(r * 448 + c) * 3 + ch] = (c % 2) ? 200 : 0;
        }
    }
    const auto out = preprocess_frame(img, {});
    CHECK(out[0].abs().maxCoeff() < 1e-9);
}

TEST_CASE("ppm round trip and frame ordering") {
    test::Scratch dir("frames");
    RgbImage img{2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}};
    for (int n : {10, 2, 1}) write_ppm(dir / ("frame_" + std::to_string(n) + ".ppm"), img);
    const auto back = read_ppm(dir / "frame_2.ppm");
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.pixels == img.pixels);
    const auto files = list_frame_files(dir.path());
    REQUIRE(files.size() == 3);
    CHECK(files[0].filename() == "frame_1.ppm");
    CHECK(files[1].filename() == "frame_2.ppm");
    CHECK(files[2].filename() == "frame_10.ppm");
    test::write_file(dir / "bad.ppm", "P3\n1 1\n255\n0 0 0\n");
    CHECK_THROWS(read_ppm(dir / "bad.ppm"));
}

TEST_CASE("two-stream import is a pure reshape") {
    const SegmentConfig cfg;
    FeatureTable table{"v", Mat<float>(10, 2048), Provenance::imported};
    for (Eigen::Index i = 0; i < table.rows.size(); ++i) table.rows.data()[i] = static_cast<float>(i);
    const auto grids = extract_features(table, 1, cfg, BackboneKind::import_rgb_flow);
    REQUIRE(grids.size() == 5);
    for (int k = 0; k < 5; ++k) {
        const auto& g = grids[k].values;
        REQUIRE(g.rows() == 16);
        REQUIRE(g.cols() == 128);
        const auto row = table.rows.row(5 + k);
        for (int i = 0; i < 1024; ++i) {
            const int r = i / 256, c = (i / 64) % 4, ch = i % 64;
            CHECK(g(r * 4 + c, ch) == row(i));
            CHECK(g(r * 4 + c, 64 + ch) == row(1024 + i));
        }
    }
}

TEST_CASE("single-stream kinds give 64 channels") {
    const SegmentConfig cfg;
    FeatureTable rgb{"v", Mat<float>::Random(5, 1024), Provenance::imported};
    const auto grids = extract_features(rgb, 0, cfg, BackboneKind::import_rgb_only);
    REQUIRE(grids.size() == 5);
    CHECK(grids[0].values.cols() == 64);
    // flattening recovers the stream vector exactly
    Eigen::RowVectorXf flat(1024);
    for (int p = 0; p < 16; ++p) flat.segment(p * 64, 64) = grids[2].values.row(p);
    CHECK(flat == rgb.rows.row(2));

    FeatureTable both{"v", Mat<float>::Random(5, 2048), Provenance::imported};
    const auto flow = extract_features(both, 0, cfg, BackboneKind::import_flow_only);
    CHECK(flow[0].values(0, 0) == both.rows(0, 1024));
    CHECK(BackboneSpec{BackboneKind::import_flow_only}.input_channels() == 64);
    CHECK(BackboneSpec{BackboneKind::synthetic}.input_channels() == 128);
}

TEST_CASE("short or non-finite feature tables name the video and clip") {
    const SegmentConfig cfg;
    FeatureTable table{"clipless", Mat<float>::Zero(3, 2048), Provenance::imported};
    try {
        extract_features(table, 0, cfg, BackboneKind::import_rgb_flow);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        const std::string what = e.what();
        CHECK(what.find("clipless") != std::string::npos);
        CHECK(what.find("clip 3") != std::string::npos);
    }
    table.rows = Mat<float>::Zero(5, 2048);
    table.rows(2, 7) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(extract_features(table, 0, cfg, BackboneKind::import_rgb_flow), ValidationError);
    table.rows = Mat<float>::Zero(5, 1000);
    CHECK_THROWS_AS(extract_features(table, 0, cfg, BackboneKind::import_rgb_only), ValidationError);
}

TEST_CASE("synthetic features are deterministic per seed and video") {
    const auto a = synthetic_features("v1", 10, 4);
    const auto b = synthetic_features("v1", 10, 4);
    CHECK(a.rows == b.rows);
    CHECK(a.rows.cols() == 2048);
    CHECK(a.provenance == Provenance::synthetic);
    CHECK(synthetic_features("v2", 10, 4).rows != a.rows);
    CHECK(synthetic_features("v1", 10, 5).rows != a.rows);
    // a longer request extends rather than reshuffles
    CHECK(synthetic_features("v1", 12, 4).rows.topRows(10) == a.rows);
}

TEST_CASE("feature files round trip with a provenance sidecar") {
    test::Scratch dir("features");
    FeatureTable table{"v", Mat<float>::Random(7, 2048), Provenance::imported};
    write_feature_file(dir / "v.bin", table, "hand made");
    CHECK(std::filesystem::exists(dir / "v.bin.txt"));
    CHECK(std::filesystem::file_size(dir / "v.bin") == 8 + 7 * 2048 * 4);
    const auto back = read_feature_file(dir / "v.bin", "v");
    CHECK(back.rows == table.rows);

    test::write_file(dir / "short.bin", test::read_file(dir / "v.bin").substr(0, 100));
    try {
        read_feature_file(dir / "short.bin", "shorty");
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("shorty") != std::string::npos);
    }
    VideoEntry video;
    video.video_id = "missing";
    video.frame_count = 80;
    video.frame_labels = {"missing", std::vector<std::uint8_t>(80, 0)};
    video.feature_source = "nope.bin";
    CHECK_THROWS(load_features(video, {BackboneKind::import_rgb_flow}, dir.path(), {}));
    CHECK(load_features(video, {BackboneKind::synthetic, 1}, dir.path(), {}).rows.rows() == 5);
}

TEST_CASE("backbone names parse") {
    CHECK(parse_backbone("import_rgb_flow") == BackboneKind::import_rgb_flow);
    CHECK(parse_backbone("rgb_only") == BackboneKind::import_rgb_only);
    CHECK(parse_backbone("synthetic") == BackboneKind::synthetic);
    CHECK_THROWS(parse_backbone("c3d"));
    for (auto k : {BackboneKind::import_rgb_flow, BackboneKind::import_rgb_only, BackboneKind::import_flow_only,
                   BackboneKind::synthetic}) {
        CHECK(parse_backbone(to_string(k)) == k);
    }
}
