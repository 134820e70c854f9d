#include "lad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace lad {

namespace {

struct Pooled {
    std::vector<std::pair<double, std::uint8_t>> frames;
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
};

Pooled pool(std::span<const ScoredTrack> tracks) {
    Pooled p;
    for (const auto& t : tracks) {
        if (t.scores.size() != t.labels.size()) {
            throw ValidationError("track " + t.video_id + ": " + std::to_string(t.scores.size()) + " scores vs " +
                                  std::to_string(t.labels.size()) + " labels");
        }
        for (std::size_t i = 0; i < t.scores.size(); ++i) {
            if (!std::isfinite(t.scores[i])) throw ValidationError("track " + t.video_id + ": non-finite score");
            if (t.labels[i] > 1) throw ValidationError("track " + t.video_id + ": labels must be 0 or 1");
            p.frames.emplace_back(t.scores[i], t.labels[i]);
            (t.labels[i] ? p.positives : p.negatives) += 1;
        }
    }
    if (p.positives == 0 || p.negatives == 0) {
        throw UndefinedAucError("undefined AUC: labels contain a single class (" + std::to_string(p.positives) +
                                " positive, " + std::to_string(p.negatives) + " negative frames)");
    }
    return p;
}

}  // namespace

RocResult roc_auc(std::span<const ScoredTrack> tracks) {
    auto p = pool(tracks);
    auto& f = p.frames;
    std::sort(f.begin(), f.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    // Positive rank sum with midranks (1-based) for tie groups.
    long double rank_sum = 0;
    for (std::size_t i = 0; i < f.size();) {
        std::size_t j = i;
        std::int64_t group_pos = 0;
        while (j < f.size() && f[j].first == f[i].first) group_pos += f[j++].second;
        const long double midrank = (static_cast<long double>(i + 1) + static_cast<long double>(j)) / 2;
        rank_sum += midrank * group_pos;
        i = j;
    }
    const long double np = p.positives, nn = p.negatives;
    RocResult result;
    result.auc = static_cast<double>((rank_sum - np * (np + 1) / 2) / (np * nn));

    // Sweep thresholds from the highest score down.
    result.curve.push_back({0.0, 0.0});
    std::int64_t tp = 0, fp = 0;
    for (std::size_t j = f.size(); j > 0;) {
        std::size_t i = j;
        while (i > 0 && f[i - 1].first == f[j - 1].first) {
            --i;
            (f[i].second ? tp : fp) += 1;
        }
        result.curve.push_back({static_cast<double>(fp) / p.negatives, static_cast<double>(tp) / p.positives});
        j = i;
    }
    return result;
}

double roc_auc_macro(std::span<const ScoredTrack> tracks) {
    double sum = 0;
    int used = 0;
    for (const auto& t : tracks) {
        const auto pos = std::count(t.labels.begin(), t.labels.end(), std::uint8_t{1});
        if (pos == 0 || pos == static_cast<std::ptrdiff_t>(t.labels.size())) continue;
        sum += roc_auc(std::span<const ScoredTrack>(&t, 1)).auc;
        ++used;
    }
    if (used == 0) throw UndefinedAucError("undefined macro AUC: no video contains both classes");
    return sum / used;
}

std::vector<std::uint8_t> binarize(std::span<const double> scores, double threshold) {
    std::vector<std::uint8_t> out(scores.size());
    std::transform(scores.begin(), scores.end(), out.begin(),
                   [threshold](double s) { return static_cast<std::uint8_t>(s >= threshold ? 1 : 0); });
    return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw UsageError("accuracy: length mismatch");
    if (predicted.empty()) throw UsageError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double ConfusionMatrix::accuracy() const {
    const auto n = total();
    if (n == 0) throw UsageError("accuracy: empty confusion matrix");
    return static_cast<double>(counts.trace()) / static_cast<double>(n);
}

Eigen::MatrixXd ConfusionMatrix::normalized() const {
    Eigen::MatrixXd out = counts.cast<double>();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double s = out.row(r).sum();
        if (s > 0) out.row(r) /= s;
    }
    return out;
}

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw UsageError("confusion: length mismatch");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        for (int c : {predicted[i], truth[i]}) {
            if (c < 0 || c >= kNumCategories) throw ValidationError("confusion: unknown category " + std::to_string(c));
        }
        ++m.counts(truth[i], predicted[i]);
    }
    return m;
}

void write_roc(const std::filesystem::path& path, std::span<const RocPoint> curve) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "fpr\ttpr\n" << std::setprecision(17);
    for (const auto& pt : curve) out << pt.fpr << "\t" << pt.tpr << "\n";
}

void write_confusion(const std::filesystem::path& path, const ConfusionMatrix& matrix, bool normalized) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const Eigen::MatrixXd norm = matrix.normalized();
    out << "true\\pred";
    for (auto name : kCategoryNames) out << "\t" << name;
    out << "\n";
    out << std::setprecision(6);
    for (int r = 0; r < kNumCategories; ++r) {
        out << kCategoryNames[r];
        for (int c = 0; c < kNumCategories; ++c) {
            out << "\t";
            if (normalized) {
                out << norm(r, c);
            } else {
                out << matrix.counts(r, c);
            }
        }
        out << "\n";
    }
}

}  // namespace lad
