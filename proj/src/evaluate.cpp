#include "lad/evaluate.hpp"

namespace lad {

EvalReport evaluate(const Checkpoint& checkpoint, std::span<const VideoEntry> videos, const FeatureLookup& lookup,
                    const EvalOptions& options) {
    if (videos.empty()) throw UsageError("evaluate: no videos to evaluate");
    EvalReport report;
    std::vector<int> cm_pred, cm_truth;
    for (const auto& video : videos) {
        const auto pred = predict_video(video, checkpoint, lookup(video));
        report.tracks.push_back({video.video_id, pred.scores, video.frame_labels.labels});
        report.predicted.push_back(pred.category);
        report.truth.push_back(category_index(video.category));
        if (!options.exclude_normal || video.is_abnormal()) {
            cm_pred.push_back(pred.category);
            cm_truth.push_back(category_index(video.category));
        }
    }
    report.roc = roc_auc(report.tracks);
    report.auc = options.macro_auc ? roc_auc_macro(report.tracks) : report.roc.auc;
    report.confusion = confusion(cm_pred, cm_truth);
    report.accuracy = report.confusion.total() > 0 ? report.confusion.accuracy() : 0.0;
    return report;
}

}  // namespace lad
