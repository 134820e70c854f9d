#include "lad/serve.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lad/error.hpp"
#include "lad/videopipe.hpp"

// After Eigen: the resolver header pulled in here defines a `_res` macro.
#include <httplib.h>

namespace lad {

namespace {

ServiceResponse json_response(int status, const nlohmann::ordered_json& j) {
    return {status, j.dump() + "\n", "application/json"};
}

ServiceResponse error_response(int status, const std::string& message, const std::string& field = {}) {
    nlohmann::ordered_json j;
    j["error"] = message;
    if (!field.empty()) j["field"] = field;
    return json_response(status, j);
}

nlohmann::ordered_json describe(const VideoEntry& v) {
    return {{"video_id", v.video_id},
            {"frame_count", v.frame_count},
            {"fps", v.fps},
            {"category", std::string(category_name(v.category))}};
}

std::string content_type_for(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".png") return "image/png";
    if (ext == ".ppm") return "image/x-portable-pixmap";
    return "application/octet-stream";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

AnnotationService::AnnotationService(std::vector<VideoEntry> catalog, std::filesystem::path frames_root,
                                     std::filesystem::path annotation_dir)
    : frames_root_(std::move(frames_root)), annotation_dir_(std::move(annotation_dir)) {
    for (auto& v : catalog) {
        auto id = v.video_id;
        videos_.emplace(std::move(id), std::move(v));
    }
    std::filesystem::create_directories(annotation_dir_);
}

ServiceResponse AnnotationService::list_videos() const {
    auto list = nlohmann::ordered_json::array();
    for (const auto& [_, v] : videos_) list.push_back(describe(v));
    return json_response(200, list);
}

ServiceResponse AnnotationService::metadata(const std::string& video_id) const {
    const auto it = videos_.find(video_id);
    if (it == videos_.end()) return error_response(404, "unknown video_id '" + video_id + "'", "video_id");
    return json_response(200, describe(it->second));
}

ServiceResponse AnnotationService::frame(const std::string& video_id, long long index) const {
    if (!videos_.count(video_id)) return error_response(404, "unknown video_id '" + video_id + "'", "video_id");
    const auto dir = frames_root_ / video_id;
    if (!std::filesystem::is_directory(dir)) return error_response(404, "no frames for video '" + video_id + "'");
    const auto files = list_frame_files(dir);
    if (index < 0 || index >= static_cast<long long>(files.size())) {
        return error_response(404, "frame " + std::to_string(index) + " out of range");
    }
    return {200, slurp(files[static_cast<std::size_t>(index)]), content_type_for(files[static_cast<std::size_t>(index)])};
}

std::mutex& AnnotationService::video_lock(const std::string& video_id) {
    std::lock_guard guard(locks_guard_);
    auto& slot = locks_[video_id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

ServiceResponse AnnotationService::post_annotation(const std::string& body) {
    AnnotationRecord record;
    try {
        record = parse_annotation(body);
    } catch (const FieldError& e) {
        return error_response(400, e.what(), e.field());
    }
    const auto it = videos_.find(record.video_id);
    if (it == videos_.end()) return error_response(404, "unknown video_id '" + record.video_id + "'", "video_id");
    for (const auto& iv : record.intervals) {
        if (iv.end >= it->second.frame_count) {
            return error_response(400,
                                  "interval [" + std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                                      "] beyond frame_count " + std::to_string(it->second.frame_count),
                                  "intervals");
        }
    }

    const auto bytes = serialize_annotation(record);
    const auto path = annotation_dir_ / annotation_filename(record);
    std::lock_guard guard(video_lock(record.video_id));
    if (std::filesystem::exists(path) && slurp(path) == bytes) {
        return json_response(200, {{"status", "unchanged"}, {"file", path.filename().string()}});
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << bytes;
        if (!out) return error_response(500, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return json_response(201, {{"status", "stored"}, {"file", path.filename().string()}});
}

struct AnnotationServer::Impl {
    httplib::Server server;
};

AnnotationServer::AnnotationServer(AnnotationService& service) : impl_(std::make_unique<Impl>()) {
    auto& s = impl_->server;
    auto send = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    s.Get("/videos", [&service, send](const httplib::Request&, httplib::Response& res) {
        send(res, service.list_videos());
    });
    s.Get(R"(/videos/([^/]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.metadata(req.matches[1]));
    });
    s.Get(R"(/videos/([^/]+)/frames/(\d+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.frame(req.matches[1], std::stoll(req.matches[2])));
    });
    s.Post("/annotations", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.post_annotation(req.body));
    });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::listen() { return impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
    if (impl_) impl_->server.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace lad
