#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lad/category.hpp"
#include "lad/error.hpp"

namespace lad {

struct ScoredTrack {
    std::string video_id;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocResult {
    double auc = 0.0;
    std::vector<RocPoint> curve;  // from (0,0) to (1,1), one point per distinct score
};

// Raised when the pooled labels contain only one class.
class UndefinedAucError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Frame-level AUC pooled over every frame of every track. Computed as the
/// Mann-Whitney statistic with midranks for tied scores, which equals the
/// trapezoidal area under the returned curve.
RocResult roc_auc(std::span<const ScoredTrack> tracks);

// Mean of per-video AUCs over videos that contain both classes.
double roc_auc_macro(std::span<const ScoredTrack> tracks);

std::vector<std::uint8_t> binarize(std::span<const double> scores, double threshold = 0.5);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct ConfusionMatrix {
    // rows = true category, columns = predicted
    Eigen::Matrix<std::int64_t, kNumCategories, kNumCategories> counts =
        Eigen::Matrix<std::int64_t, kNumCategories, kNumCategories>::Zero();

    std::int64_t total() const { return counts.sum(); }
    double accuracy() const;
    // Each row divided by its sum; empty rows stay zero.
    Eigen::MatrixXd normalized() const;
};

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> truth);

// Tab-separated fpr/tpr columns under a header row.
void write_roc(const std::filesystem::path& path, std::span<const RocPoint> curve);
// Header row of category names, then one labelled row per true category.
void write_confusion(const std::filesystem::path& path, const ConfusionMatrix& matrix, bool normalized);

}  // namespace lad
