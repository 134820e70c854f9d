#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lad/datamodel.hpp"

namespace lad {

struct ServiceResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Request handlers behind the annotation endpoint, independent of the
/// transport:
///   GET  /videos                    -> list of video metadata
///   GET  /videos/{id}               -> {video_id, frame_count, fps, category}
///   GET  /videos/{id}/frames/{n}    -> bytes of the n-th frame image
///   POST /annotations               -> store one AnnotationRecord
class AnnotationService {
public:
    AnnotationService(std::vector<VideoEntry> catalog, std::filesystem::path frames_root,
                      std::filesystem::path annotation_dir);

    ServiceResponse list_videos() const;
    ServiceResponse metadata(const std::string& video_id) const;
    ServiceResponse frame(const std::string& video_id, long long index) const;
    // 201 when stored or replaced, 200 when identical bytes already exist.
    ServiceResponse post_annotation(const std::string& body);

private:
    std::mutex& video_lock(const std::string& video_id);

    std::map<std::string, VideoEntry> videos_;
    std::filesystem::path frames_root_;
    std::filesystem::path annotation_dir_;
    std::mutex locks_guard_;
    std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

/// HTTP front end. Binds to loopback unless told otherwise.
class AnnotationServer {
public:
    explicit AnnotationServer(AnnotationService& service);
    ~AnnotationServer();

    // Returns the bound port (pass 0 for any free port), or -1 on failure.
    int bind(const std::string& host, int port);
    // Blocks until stop() is called.
    bool listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace lad
