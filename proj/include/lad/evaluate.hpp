#pragma once

#include <span>
#include <string>
#include <vector>

#include "lad/metrics.hpp"
#include "lad/trainer.hpp"

namespace lad {

struct EvalOptions {
    bool macro_auc = false;       // mean per-video AUC instead of pooled frames
    bool exclude_normal = false;  // leave normal videos out of the confusion matrix
};

struct EvalReport {
    double auc = 0.0;
    double accuracy = 0.0;
    RocResult roc;  // pooled curve (also filled in macro mode)
    ConfusionMatrix confusion;
    std::vector<ScoredTrack> tracks;
    std::vector<int> predicted;  // per video, catalog order of `videos`
    std::vector<int> truth;
};

EvalReport evaluate(const Checkpoint& checkpoint, std::span<const VideoEntry> videos, const FeatureLookup& lookup,
                    const EvalOptions& options = {});

}  // namespace lad
