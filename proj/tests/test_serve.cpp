#include <doctest.h>

#include <thread>

#include <nlohmann/json.hpp>

#include "lad/datamodel.hpp"
#include "lad/serve.hpp"
#include "scratch.hpp"

// After Eigen: the resolver header pulled in here defines a `_res` macro.
#include <httplib.h>

using namespace lad;

namespace {

struct Fixture {
    test::Scratch dir{"serve"};
    std::vector<VideoEntry> catalog;

    Fixture() {
        VideoEntry v;
        v.video_id = "v01";
        v.category = AnomalyCategory::Crowd;
        v.frame_count = 100;
        v.fps = 25;
        v.frame_labels = {"v01", std::vector<std::uint8_t>(100, 0)};
        catalog.push_back(v);
        std::filesystem::create_directories(dir / "frames" / "v01");
        for (int i : {0, 1, 2, 10}) test::write_file(dir / "frames" / "v01" / (std::to_string(i) + ".png"), "frame" + std::to_string(i));
    }

    AnnotationService service() { return {catalog, dir / "frames", dir / "ann"}; }
};

nlohmann::json body_of(const ServiceResponse& r) { return nlohmann::json::parse(r.body); }

const std::string kRecord = R"({"video_id":"v01","annotator_id":"ann1","intervals":[[30,50],[60,61]]})";

}  // namespace

TEST_CASE("metadata and frames") {
    Fixture fx;
    auto svc = fx.service();
    const auto list = body_of(svc.list_videos());
    REQUIRE(list.size() == 1);
    const auto meta = svc.metadata("v01");
    CHECK(meta.status == 200);
    CHECK(body_of(meta)["frame_count"] == 100);
    CHECK(body_of(meta)["category"] == "Crowd");
    CHECK(body_of(meta)["fps"] == 25.0);
    CHECK(svc.metadata("nope").status == 404);

    // numeric ordering: 10.png is the fourth frame
    const auto f = svc.frame("v01", 3);
    CHECK(f.status == 200);
    CHECK(f.body == "frame10");
    CHECK(f.content_type == "image/png");
    CHECK(svc.frame("v01", 4).status == 404);
    CHECK(svc.frame("nope", 0).status == 404);
}

TEST_CASE("posting records is validated and idempotent") {
    Fixture fx;
    auto svc = fx.service();
    auto r = svc.post_annotation(kRecord);
    CHECK(r.status == 201);
    const auto file = fx.dir / "ann" / body_of(r)["file"].get<std::string>();
    CHECK(test::read_file(file) == kRecord + "\n");
    CHECK(load_annotation_dir(fx.dir / "ann").size() == 1);

    r = svc.post_annotation(kRecord);
    CHECK(r.status == 200);
    CHECK(body_of(r)["status"] == "unchanged");

    // a changed record from the same annotator replaces the file
    r = svc.post_annotation(R"({"video_id":"v01","annotator_id":"ann1","intervals":[[1,2]]})");
    CHECK(r.status == 201);
    CHECK(load_annotation_dir(fx.dir / "ann").size() == 1);

    r = svc.post_annotation(R"({"video_id":"v01","annotator_id":"ann2","intervals":[[50,30]]})");
    CHECK(r.status == 400);
    CHECK(body_of(r)["field"] == "intervals");

    r = svc.post_annotation(R"({"video_id":"v01","intervals":[]})");
    CHECK(r.status == 400);
    CHECK(body_of(r)["field"] == "annotator_id");

    r = svc.post_annotation("{not json");
    CHECK(r.status == 400);

    r = svc.post_annotation(R"({"video_id":"v01","annotator_id":"ann2","intervals":[[90,100]]})");
    CHECK(r.status == 400);
    CHECK(body_of(r)["field"] == "intervals");

    r = svc.post_annotation(R"({"video_id":"v99","annotator_id":"ann2","intervals":[]})");
    CHECK(r.status == 404);
    CHECK(load_annotation_dir(fx.dir / "ann").size() == 1);
}

TEST_CASE("HTTP round trip on loopback") {
    Fixture fx;
    auto svc = fx.service();
    AnnotationServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto res = client.Get("/videos/v01");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(nlohmann::json::parse(res->body)["video_id"] == "v01");

    res = client.Get("/videos/v01/frames/0");
    REQUIRE(res);
    CHECK(res->body == "frame0");

    res = client.Post("/annotations", kRecord, "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    res = client.Post("/annotations", kRecord, "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);

    res = client.Get("/videos/missing");
    REQUIRE(res);
    CHECK(res->status == 404);

    server.stop();
    worker.join();
    CHECK(load_annotation_dir(fx.dir / "ann").size() == 1);
}
