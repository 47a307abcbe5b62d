#include "radkg/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "radkg/errors.hpp"
#include "radkg/eval.hpp"
#include "radkg/random.hpp"

namespace radkg {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view token) {
    if (token == "sgd") return OptimizerKind::Sgd;
    if (token == "adam") return OptimizerKind::Adam;
    throw Error("unknown optimizer '" + std::string(token) + "' (expected sgd|adam)");
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error("learning rate must be finite and >= 0");
    if (epochs == 0) throw Error("epochs must be at least 1");
    if (batch_size == 0) throw Error("batch size must be at least 1");
    if (relations.empty()) throw Error("at least one relation must be trained");
}

double bce_loss(double p, double y) {
    const double q = std::clamp(p, kLossClamp, 1.0 - kLossClamp);
    return -y * std::log(q) - (1.0 - y) * std::log(1.0 - q);
}

std::vector<TrainItem> make_batches(const KnowledgeGraph& kg, const FeatureTable& features,
                                    const TrainConfig& config, std::size_t epoch) {
    if (features.rows() < kg.images()) {
        throw Error("graph has " + std::to_string(kg.images()) + " images but only " +
                    std::to_string(features.rows()) + " feature rows");
    }
    std::vector<TrainItem> items;
    for (auto relation : config.relations) {
        if (relation == RelationKind::CoOccurs) {
            for (std::size_t i = 0; i < kg.findings(); ++i) {
                const auto subject = EntityId::finding(i);
                items.push_back({subject, relation, kg.targets(subject, relation)});
            }
        } else {
            for (std::size_t i = 0; i < kg.images(); ++i) {
                const auto subject = EntityId::image(i);
                items.push_back({subject, relation, kg.targets(subject, relation)});
            }
        }
    }
    Rng rng(mix_seed(config.seed, 0x5eed0000ULL + epoch));
    rng.shuffle(items);
    return items;
}

namespace {

std::vector<double> subject_embedding(const EmbeddingModel& model, const FeatureTable& features,
                                      EntityId subject) {
    if (subject.kind == EntityKind::Image) {
        if (subject.index >= features.rows()) {
            throw Error("image " + std::to_string(subject.index) + " has no feature code");
        }
        return embed_subject(model, features.code(subject.index));
    }
    const auto row = embed_object(model, subject.index);
    return {row.begin(), row.end()};
}

double mean_loss(std::span<const double> psi, std::span<const double> targets) {
    double total = 0.0;
    for (std::size_t j = 0; j < psi.size(); ++j) total += bce_loss(sigmoid(psi[j]), targets[j]);
    return total / static_cast<double>(psi.size());
}

}  // namespace

double item_loss(const EmbeddingModel& model, const FeatureTable& features, const TrainItem& item) {
    if (item.targets.size() != model.dims.findings) throw ShapeError("target vector has wrong width");
    const auto subject = subject_embedding(model, features, item.subject);
    return mean_loss(score_objects(model, subject, item.relation), item.targets);
}

double item_backward(const EmbeddingModel& model, const FeatureTable& features, const TrainItem& item, double scale,
                     ModelGrad& grad) {
    if (item.targets.size() != model.dims.findings) throw ShapeError("target vector has wrong width");
    const std::size_t n = model.dims.findings;
    const auto subject = subject_embedding(model, features, item.subject);
    const auto psi = score_objects(model, subject, item.relation);
    const double loss = mean_loss(psi, item.targets);

    // d BCE(sigmoid(psi), y) / d psi = sigmoid(psi) - y
    std::vector<double> upstream(n);
    for (std::size_t j = 0; j < n; ++j) {
        upstream[j] = scale * (sigmoid(psi[j]) - item.targets[j]) / static_cast<double>(n);
    }
    const auto g_subject = backward_objects(model, subject, item.relation, upstream, grad);
    if (item.subject.kind == EntityKind::Image) {
        const auto code = features.code(item.subject.index);
        auto& g_proj = grad.blocks[0];
        const std::size_t d = model.dims.embed_dim;
        for (std::size_t i = 0; i < code.size(); ++i) {
            if (code[i] == 0.0) continue;
            auto row = g_proj.row(i);
            for (std::size_t k = 0; k < d; ++k) row[k] += code[i] * g_subject[k];
        }
    } else {
        auto row = grad.blocks[1].row(item.subject.index);
        for (std::size_t k = 0; k < g_subject.size(); ++k) row[k] += g_subject[k];
    }
    return loss;
}

Optimizer::Optimizer(const TrainConfig& config, const EmbeddingModel& model)
    : config_(config), first_moment_(model), second_moment_(model) {}

void Optimizer::step(EmbeddingModel& model, const ModelGrad& grad) {
    ++steps_;
    auto blocks = model.blocks();
    const double lr = config_.learning_rate;
    if (config_.optimizer == OptimizerKind::Sgd) {
        for (std::size_t b = 0; b < kParameterBlocks; ++b) {
            auto& w = blocks[b]->values();
            const auto& g = grad.blocks[b].values();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        }
        return;
    }
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t b = 0; b < kParameterBlocks; ++b) {
        auto& w = blocks[b]->values();
        const auto& g = grad.blocks[b].values();
        auto& m = first_moment_.blocks[b].values();
        auto& v = second_moment_.blocks[b].values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

double train_epoch(EmbeddingModel& model, const std::vector<TrainItem>& items, const FeatureTable& features,
                   const TrainConfig& config, Optimizer& optimizer) {
    if (items.empty()) return 0.0;
    ModelGrad grad(model);
    double total = 0.0;
    for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
        const std::size_t stop = std::min(items.size(), start + config.batch_size);
        const double scale = 1.0 / static_cast<double>(stop - start);
        grad.clear();
        for (std::size_t i = start; i < stop; ++i) {
            const double loss = item_backward(model, features, items[i], scale, grad);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at item " << i << " (subject " << to_string(items[i].subject.kind) << ':'
                    << items[i].subject.index << ", relation " << to_string(items[i].relation) << ", optimizer step "
                    << optimizer.steps() << ")";
                throw NumericalError(msg.str());
            }
            total += loss;
        }
        optimizer.step(model, grad);
    }
    return total / static_cast<double>(items.size());
}

TrainResult train(EmbeddingModel model, const KnowledgeGraph& kg, const FeatureTable& features,
                  const ValidationSet& validation, const TrainConfig& config) {
    config.validate();
    for (auto r : config.relations) {
        if (static_cast<std::size_t>(r) >= model.dims.relations) {
            throw ShapeError("model has no embedding row for relation " + std::string(to_string(r)));
        }
    }
    TrainResult result;
    result.best = model;
    Optimizer optimizer(config, model);
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto items = make_batches(kg, features, config, epoch);
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = train_epoch(model, items, features, config, optimizer);

        if (validation.features != nullptr && validation.truth != nullptr) {
            std::vector<PredictionRow> rows;
            rows.reserve(validation.truth->rows());
            for (std::size_t i = 0; i < validation.truth->rows(); ++i) {
                rows.push_back(predict(model, validation.features->code(i)));
            }
            record.val_macro_auc = macro_auc(rows, *validation.truth, config.policy).macro_auc;
        }

        if (record.val_macro_auc) {
            if (!result.best_val_macro_auc || *record.val_macro_auc > *result.best_val_macro_auc) {
                record.improved = true;
                result.best = model;
                result.best_epoch = epoch;
                result.best_val_macro_auc = record.val_macro_auc;
                stale = 0;
            } else {
                ++stale;
            }
        } else if (!result.best_val_macro_auc) {
            record.improved = true;
            result.best = model;
            result.best_epoch = epoch;
        }
        result.history.push_back(record);
        if (record.val_macro_auc && stale >= config.patience) break;
        if (config.patience == 0) break;
    }
    return result;
}

}  // namespace radkg
