#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radkg/encoders.hpp"
#include "radkg/kg_store.hpp"
#include "radkg/scoring.hpp"

namespace radkg {

struct PredictionRow {
    std::string image_id;
    std::vector<double> scores;         // raw psi per finding
    std::vector<double> probabilities;  // sigmoid(psi)
};

/// Scores (image, hasFinding, F_j) for every finding.
PredictionRow predict(const EmbeddingModel& model, std::span<const double> features, std::string image_id = {});

/// label_j = 1 iff p_j > tau. Throws when tau is outside (0, 1).
std::vector<int> classify(const PredictionRow& row, double tau);

/// Mann-Whitney AUC with midranks for ties; nullopt when either class is empty.
std::optional<double> auc_roc(std::span<const double> scores, std::span<const int> labels);

/// O(P*N) pairwise count of wins plus half ties. Verification oracle for auc_roc.
std::optional<double> auc_bruteforce(std::span<const double> scores, std::span<const int> labels);

struct FindingReport {
    std::string name;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::optional<double> auc;
    std::optional<double> sensitivity;  // set when a threshold is given
    std::optional<double> specificity;
};

struct EvalReport {
    std::vector<FindingReport> findings;
    std::optional<double> macro_auc;  // mean over findings with a defined AUC
    std::size_t images = 0;
    std::optional<double> threshold;

    bool defined() const { return macro_auc.has_value(); }
};

/// Per-finding AUC on raw scores against `truth` binarised under `policy`. `findings` selects a
/// subset of finding indices (all when empty). Rows of `predictions` align with `truth` rows.
EvalReport macro_auc(const std::vector<PredictionRow>& predictions, const AnnotationTable& truth,
                     UncertainPolicy policy, const std::vector<std::size_t>& findings = {},
                     std::optional<double> threshold = std::nullopt);

/// Parameter count of the two-layer perceptron reference (D x hidden + hidden x n).
std::size_t mlp_param_count(std::size_t feature_dim, std::size_t hidden, std::size_t findings);

/// `id,<finding...>` with probabilities to 6 decimals; with a threshold, `<finding>_label`
/// columns follow.
void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows,
                       const std::vector<std::string>& finding_names, std::optional<double> threshold = std::nullopt);

/// Sectioned key = value text. `config_echo` is copied verbatim under [config].
void write_report(std::ostream& out, const EvalReport& report, const std::string& config_echo);

}  // namespace radkg
