#include "radkg/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "radkg/errors.hpp"

namespace radkg {

PredictionRow predict(const EmbeddingModel& model, std::span<const double> features, std::string image_id) {
    PredictionRow row;
    row.image_id = std::move(image_id);
    row.scores = score_all_objects(model, features, RelationKind::HasFinding);
    row.probabilities.reserve(row.scores.size());
    for (double s : row.scores) row.probabilities.push_back(sigmoid(s));
    return row;
}

std::vector<int> classify(const PredictionRow& row, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error("threshold must lie in (0, 1)");
    std::vector<int> out;
    out.reserve(row.probabilities.size());
    for (double p : row.probabilities) out.push_back(p > tau ? 1 : 0);
    return out;
}

namespace {

void check_aligned(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
}

}  // namespace

std::optional<double> auc_roc(std::span<const double> scores, std::span<const int> labels) {
    check_aligned(scores, labels);
    const std::size_t total = scores.size();
    std::size_t positives = 0;
    for (int y : labels) positives += y != 0;
    const std::size_t negatives = total - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Ranks are 1-based; a tie block [i, k) shares the rank (i + 1 + k) / 2.
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < total;) {
        std::size_t k = i + 1;
        while (k < total && scores[order[k]] == scores[order[i]]) ++k;
        const double midrank = 0.5 * static_cast<double>(i + 1 + k);
        for (std::size_t t = i; t < k; ++t) {
            if (labels[order[t]] != 0) positive_rank_sum += midrank;
        }
        i = k;
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::optional<double> auc_bruteforce(std::span<const double> scores, std::span<const int> labels) {
    check_aligned(scores, labels);
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < scores.size(); ++a) {
        if (labels[a] == 0) continue;
        for (std::size_t b = 0; b < scores.size(); ++b) {
            if (labels[b] != 0) continue;
            ++pairs;
            if (scores[a] > scores[b]) {
                wins += 1.0;
            } else if (scores[a] == scores[b]) {
                wins += 0.5;
            }
        }
    }
    if (pairs == 0) return std::nullopt;
    return wins / static_cast<double>(pairs);
}

EvalReport macro_auc(const std::vector<PredictionRow>& predictions, const AnnotationTable& truth,
                     UncertainPolicy policy, const std::vector<std::size_t>& findings,
                     std::optional<double> threshold) {
    if (predictions.size() != truth.rows()) {
        throw ShapeError(std::to_string(predictions.size()) + " prediction rows for " + std::to_string(truth.rows()) +
                         " annotated images");
    }
    if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw Error("threshold must lie in (0, 1)");
    std::vector<std::size_t> selected = findings;
    if (selected.empty()) {
        selected.resize(truth.findings());
        std::iota(selected.begin(), selected.end(), std::size_t{0});
    }

    EvalReport report;
    report.images = truth.rows();
    report.threshold = threshold;
    double sum = 0.0;
    std::size_t defined = 0;
    std::vector<double> scores(truth.rows());
    std::vector<int> labels(truth.rows());
    for (auto j : selected) {
        if (j >= truth.findings()) throw BoundsError("finding index " + std::to_string(j) + " out of range");
        FindingReport f;
        f.name = truth.finding_names[j];
        std::size_t true_pos = 0;
        std::size_t true_neg = 0;
        for (std::size_t i = 0; i < truth.rows(); ++i) {
            if (predictions[i].scores.size() != truth.findings()) throw ShapeError("prediction row has wrong width");
            scores[i] = predictions[i].scores[j];
            labels[i] = is_positive(truth.labels[i][j], policy) ? 1 : 0;
            (labels[i] ? f.positives : f.negatives) += 1;
            if (threshold) {
                const int predicted = predictions[i].probabilities[j] > *threshold ? 1 : 0;
                if (labels[i] && predicted) ++true_pos;
                if (!labels[i] && !predicted) ++true_neg;
            }
        }
        f.auc = auc_roc(scores, labels);
        if (threshold) {
            if (f.positives > 0) f.sensitivity = static_cast<double>(true_pos) / static_cast<double>(f.positives);
            if (f.negatives > 0) f.specificity = static_cast<double>(true_neg) / static_cast<double>(f.negatives);
        }
        if (f.auc) {
            sum += *f.auc;
            ++defined;
        }
        report.findings.push_back(std::move(f));
    }
    if (defined > 0) report.macro_auc = sum / static_cast<double>(defined);
    return report;
}

std::size_t mlp_param_count(std::size_t feature_dim, std::size_t hidden, std::size_t findings) {
    return feature_dim * hidden + hidden * findings;
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fixed6(const std::optional<double>& v) { return v ? fixed6(*v) : std::string("undefined"); }

}  // namespace

void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows,
                       const std::vector<std::string>& finding_names, std::optional<double> threshold) {
    out << "id";
    for (const auto& name : finding_names) out << ',' << name;
    if (threshold) {
        for (const auto& name : finding_names) out << ',' << name << "_label";
    }
    out << '\n';
    for (const auto& row : rows) {
        if (row.probabilities.size() != finding_names.size()) throw ShapeError("prediction row has wrong width");
        out << row.image_id;
        for (double p : row.probabilities) out << ',' << fixed6(p);
        if (threshold) {
            for (int label : classify(row, *threshold)) out << ',' << label;
        }
        out << '\n';
    }
}

void write_report(std::ostream& out, const EvalReport& report, const std::string& config_echo) {
    out << "[config]\n" << config_echo;
    if (!config_echo.empty() && config_echo.back() != '\n') out << '\n';
    out << "\n[findings]\n";
    for (const auto& f : report.findings) {
        out << f.name << " = auc:" << fixed6(f.auc) << " positives:" << f.positives << " negatives:" << f.negatives;
        if (report.threshold) {
            out << " sensitivity:" << fixed6(f.sensitivity) << " specificity:" << fixed6(f.specificity);
        }
        out << '\n';
    }
    out << "\n[summary]\n";
    out << "images = " << report.images << '\n';
    out << "evaluated_findings = " << report.findings.size() << '\n';
    std::size_t defined = 0;
    for (const auto& f : report.findings) defined += f.auc.has_value();
    out << "defined_findings = " << defined << '\n';
    if (report.threshold) out << "threshold = " << fixed6(*report.threshold) << '\n';
    out << "macro_auc = " << fixed6(report.macro_auc) << '\n';
}

}  // namespace radkg
