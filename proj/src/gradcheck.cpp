#include "radkg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "radkg/encoders.hpp"
#include "radkg/errors.hpp"
#include "radkg/random.hpp"
#include "radkg/tensor.hpp"
#include "radkg/training.hpp"

namespace radkg {

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t size, std::size_t limit, Rng& rng) {
    std::vector<std::size_t> out;
    if (size <= limit) {
        out.resize(size);
        for (std::size_t i = 0; i < size; ++i) out[i] = i;
        return out;
    }
    std::set<std::size_t> chosen;
    while (chosen.size() < limit) chosen.insert(static_cast<std::size_t>(rng.below(size)));
    return {chosen.begin(), chosen.end()};
}

bool near_kink(const EmbeddingModel& model, std::span<const double> subject, RelationKind relation, double margin) {
    if (model.kind != ScorerKind::ConvE) return false;
    const auto a = conve_forward(model, subject, relation_vector(model, relation));
    const auto close = [margin](double v) { return std::abs(v) <= margin; };
    return std::any_of(a.conv.values().begin(), a.conv.values().end(), close) ||
           std::any_of(a.projected.begin(), a.projected.end(), close);
}

struct Tracker {
    GradCheckResult& result;

    void compare(double analytic, double numeric, const std::string& where) {
        const double err = relative_error(analytic, numeric);
        ++result.coordinates_checked;
        if (err > result.max_relative_error || result.worst_location.empty()) {
            result.max_relative_error = std::max(err, result.max_relative_error);
            result.worst_location = where;
        }
    }
};

}  // namespace

GradCheckResult run_gradcheck(const GradCheckConfig& config) {
    GradCheckResult result;
    Tracker tracker{result};
    std::vector<ModelDims> geometries = config.geometries;
    if (geometries.empty()) geometries.push_back(ModelDims{});

    std::uint64_t attempt = 0;
    while (result.models_checked < config.models) {
        const std::uint64_t model_seed = mix_seed(config.seed, attempt++);
        if (result.models_redrawn > 100 * (config.models + 1)) {
            throw NumericalError("gradient check could not draw models away from ReLU kinks");
        }
        const auto& dims = geometries[result.models_checked % geometries.size()];
        Rng rng(model_seed);
        const EmbeddingModel model = init_model(dims, config.kind, model_seed);

        std::vector<double> code(dims.feature_dim);
        for (auto& v : code) v = rng.normal();
        FeatureTable features(dims.feature_dim, {"probe"}, code);

        TrainItem item;
        item.relation = static_cast<RelationKind>(rng.below(dims.relations));
        item.subject = item.relation == RelationKind::CoOccurs ? EntityId::finding(rng.below(dims.findings))
                                                                : EntityId::image(0);
        item.targets.resize(dims.findings);
        for (auto& y : item.targets) y = rng.uniform() < 0.3 ? 1.0 : 0.0;

        std::vector<double> subject;
        if (item.subject.kind == EntityKind::Image) {
            subject = embed_subject(model, code);
        } else {
            const auto row = embed_object(model, item.subject.index);
            subject.assign(row.begin(), row.end());
        }
        if (near_kink(model, subject, item.relation, config.kink_margin)) {
            ++result.models_redrawn;
            continue;
        }

        ModelGrad analytic(model);
        item_backward(model, features, item, 1.0, analytic);

        // Feature-code gradient through the subject projection.
        std::vector<double> feature_grad;
        if (item.subject.kind == EntityKind::Image) {
            const auto psi = score_all_objects(model, code, item.relation);
            std::vector<double> upstream(dims.findings);
            for (std::size_t j = 0; j < dims.findings; ++j) {
                upstream[j] = (sigmoid(psi[j]) - item.targets[j]) / static_cast<double>(dims.findings);
            }
            ModelGrad scratch(model);
            feature_grad = backward_all_objects(model, code, item.relation, upstream, scratch);
        }

        if (config.corrupt) {
            auto& g = analytic.blocks[2].values();
            const auto r = static_cast<std::size_t>(item.relation) * dims.embed_dim;
            g[r] += 1e-3 * (1.0 + std::abs(g[r]));
        }

        EmbeddingModel probe = model;
        const auto probe_blocks = probe.blocks();
        for (std::size_t b = 0; b < kParameterBlocks; ++b) {
            auto& values = probe_blocks[b]->values();
            if (values.empty()) continue;
            auto coords = pick_coordinates(values.size(), config.coordinates_per_block, rng);
            if (config.corrupt && b == 2) {
                const auto r = static_cast<std::size_t>(item.relation) * dims.embed_dim;
                if (std::find(coords.begin(), coords.end(), r) == coords.end()) coords.push_back(r);
            }
            std::vector<double> start(coords.size());
            for (std::size_t i = 0; i < coords.size(); ++i) start[i] = values[coords[i]];
            const auto numeric = finite_diff_grad(
                [&](std::span<const double> theta) {
                    for (std::size_t i = 0; i < coords.size(); ++i) values[coords[i]] = theta[i];
                    return item_loss(probe, features, item);
                },
                start, config.step);
            for (std::size_t i = 0; i < coords.size(); ++i) {
                values[coords[i]] = start[i];
                tracker.compare(analytic.blocks[b][coords[i]], numeric[i],
                                std::string(kBlockNames[b]) + "[" + std::to_string(coords[i]) + "] model " +
                                    std::to_string(result.models_checked));
            }
        }

        if (!feature_grad.empty()) {
            const auto coords = pick_coordinates(code.size(), config.coordinates_per_block, rng);
            std::vector<double> start(coords.size());
            for (std::size_t i = 0; i < coords.size(); ++i) start[i] = code[coords[i]];
            std::vector<double> perturbed = code;
            const auto numeric = finite_diff_grad(
                [&](std::span<const double> theta) {
                    for (std::size_t i = 0; i < coords.size(); ++i) perturbed[coords[i]] = theta[i];
                    return item_loss(model, FeatureTable(dims.feature_dim, {"probe"}, perturbed), item);
                },
                start, config.step);
            for (std::size_t i = 0; i < coords.size(); ++i) {
                tracker.compare(feature_grad[coords[i]], numeric[i],
                                "features[" + std::to_string(coords[i]) + "] model " +
                                    std::to_string(result.models_checked));
            }
        }
        ++result.models_checked;
    }
    result.passed = result.max_relative_error <= config.tolerance;
    return result;
}

}  // namespace radkg
