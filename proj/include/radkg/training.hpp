#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radkg/encoders.hpp"
#include "radkg/kg_store.hpp"
#include "radkg/scoring.hpp"

namespace radkg {

enum class OptimizerKind : std::uint8_t { Sgd, Adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view token);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    UncertainPolicy policy = UncertainPolicy::AsPositive;
    std::vector<RelationKind> relations = {RelationKind::HasFinding};
    std::size_t patience = 5;

    void validate() const;
};

/// Probability clamp used by bce_loss.
inline constexpr double kLossClamp = 1e-12;

/// -y log p - (1-y) log(1-p), p clamped to [1e-12, 1-1e-12].
double bce_loss(double p, double y);

/// One training query (subject, relation, ?) with closed-world targets over all findings.
/// Image subjects index feature rows; finding subjects (coOccurs) use the finding embedding.
struct TrainItem {
    EntityId subject;
    RelationKind relation = RelationKind::HasFinding;
    std::vector<double> targets;
};

/// Every trained (subject, relation) pair, shuffled deterministically per (seed, epoch).
/// `features` rows must align with the graph's image indices.
std::vector<TrainItem> make_batches(const KnowledgeGraph& kg, const FeatureTable& features,
                                    const TrainConfig& config, std::size_t epoch);

/// Mean BCE over the item's n targets.
double item_loss(const EmbeddingModel& model, const FeatureTable& features, const TrainItem& item);

/// Adds scale * d(item_loss)/d(params) to `grad`; returns the item loss.
double item_backward(const EmbeddingModel& model, const FeatureTable& features, const TrainItem& item, double scale,
                     ModelGrad& grad);

/// SGD or Adam over the model's parameter blocks. State persists across steps.
class Optimizer {
public:
    Optimizer(const TrainConfig& config, const EmbeddingModel& model);

    void step(EmbeddingModel& model, const ModelGrad& grad);
    std::size_t steps() const { return steps_; }

private:
    TrainConfig config_;
    std::size_t steps_ = 0;
    ModelGrad first_moment_;
    ModelGrad second_moment_;
};

/// One pass over `items` in minibatches; gradients are averaged over each minibatch in item
/// order. Returns the mean item loss. Throws NumericalError on a non-finite loss.
double train_epoch(EmbeddingModel& model, const std::vector<TrainItem>& items, const FeatureTable& features,
                   const TrainConfig& config, Optimizer& optimizer);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    std::optional<double> val_macro_auc;
    bool improved = false;
};

struct TrainResult {
    EmbeddingModel best;
    std::size_t best_epoch = 0;
    std::optional<double> best_val_macro_auc;
    std::vector<EpochRecord> history;
};

/// Validation data: features aligned to `truth` rows.
struct ValidationSet {
    const FeatureTable* features = nullptr;
    const AnnotationTable* truth = nullptr;
};

/// Runs epochs, keeps the model with the best validation macro-AUC and stops once `patience`
/// consecutive epochs bring no gain. With no defined validation AUC the last model is kept.
TrainResult train(EmbeddingModel model, const KnowledgeGraph& kg, const FeatureTable& features,
                  const ValidationSet& validation, const TrainConfig& config);

}  // namespace radkg
