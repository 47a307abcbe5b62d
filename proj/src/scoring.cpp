#include "radkg/scoring.hpp"

#include <cmath>
#include <string>

#include "radkg/errors.hpp"
#include "radkg/random.hpp"

namespace radkg {

std::string_view to_string(ScorerKind k) { return k == ScorerKind::DistMult ? "distmult" : "conve"; }

ScorerKind parse_scorer(std::string_view token) {
    if (token == "distmult") return ScorerKind::DistMult;
    if (token == "conve") return ScorerKind::ConvE;
    throw Error("unknown scorer '" + std::string(token) + "' (expected distmult|conve)");
}

std::size_t square_side(std::size_t embed_dim) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(embed_dim))));
    return side * side == embed_dim ? side : 0;
}

void ModelDims::validate(ScorerKind kind) const {
    if (feature_dim == 0 || embed_dim == 0 || findings == 0 || relations == 0) {
        throw ShapeError("model dimensions must be positive");
    }
    if (relations > kRelationKindCount) throw ShapeError("more relation rows than relation kinds");
    if (kind == ScorerKind::ConvE) {
        if (channels == 0) throw ShapeError("ConvE needs at least one channel");
        if (reshape_rows * reshape_cols != embed_dim) {
            throw ShapeError("ConvE reshape " + std::to_string(reshape_rows) + "x" + std::to_string(reshape_cols) +
                             " does not hold d=" + std::to_string(embed_dim));
        }
        if (2 * reshape_rows < kConvKernelSide || reshape_cols < kConvKernelSide) {
            throw ShapeError("ConvE stacked input " + std::to_string(2 * reshape_rows) + "x" +
                             std::to_string(reshape_cols) + " is smaller than the 5x5 kernel");
        }
    }
}

EmbeddingModel EmbeddingModel::zeros(ScorerKind kind, const ModelDims& dims) {
    dims.validate(kind);
    EmbeddingModel m;
    m.kind = kind;
    m.dims = dims;
    m.subject_proj = Tensor({dims.feature_dim, dims.embed_dim});
    m.finding_emb = Tensor({dims.findings, dims.embed_dim});
    m.relation_emb = Tensor({dims.relations, dims.embed_dim});
    if (kind == ScorerKind::ConvE) {
        m.conv_kernels = Tensor({dims.channels, kConvKernelSide, kConvKernelSide});
        m.conv_proj = Tensor({dims.conv_flat(), dims.embed_dim});
    } else {
        m.conv_kernels = Tensor({0, kConvKernelSide, kConvKernelSide});
        m.conv_proj = Tensor({0, dims.embed_dim});
    }
    return m;
}

EmbeddingModel init_model(const ModelDims& dims, ScorerKind kind, std::uint64_t seed) {
    EmbeddingModel m = EmbeddingModel::zeros(kind, dims);
    const std::size_t k2 = kConvKernelSide * kConvKernelSide;
    const std::array<std::pair<std::size_t, std::size_t>, kParameterBlocks> fans = {{
        {dims.feature_dim, dims.embed_dim},
        {dims.findings, dims.embed_dim},
        {dims.relations, dims.embed_dim},
        {k2, dims.channels * k2},
        {dims.conv_flat(), dims.embed_dim},
    }};
    auto blocks = m.blocks();
    for (std::size_t b = 0; b < kParameterBlocks; ++b) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fans[b].first + fans[b].second));
        Rng rng(mix_seed(seed, b));
        for (auto& v : blocks[b]->values()) v = rng.uniform(-bound, bound);
    }
    return m;
}

std::size_t param_count(const EmbeddingModel& model) {
    std::size_t total = 0;
    for (const auto* b : model.blocks()) total += b->size();
    return total;
}

std::vector<double> embed_subject(const EmbeddingModel& model, std::span<const double> features) {
    if (features.size() != model.dims.feature_dim) {
        throw ShapeError("feature code has length " + std::to_string(features.size()) + ", model expects " +
                         std::to_string(model.dims.feature_dim));
    }
    return linear_fwd(features, model.subject_proj);
}

std::span<const double> embed_object(const EmbeddingModel& model, std::size_t finding) {
    if (finding >= model.dims.findings) throw BoundsError("finding index " + std::to_string(finding) + " out of range");
    return model.finding_emb.row(finding);
}

std::span<const double> relation_vector(const EmbeddingModel& model, RelationKind relation) {
    const auto r = static_cast<std::size_t>(relation);
    if (r >= model.dims.relations) {
        throw BoundsError("model has no embedding for relation " + std::string(to_string(relation)));
    }
    return model.relation_emb.row(r);
}

double score_distmult(std::span<const double> subject, std::span<const double> relation,
                      std::span<const double> object) {
    if (subject.size() != relation.size() || subject.size() != object.size()) {
        throw ShapeError("DistMult operands differ in length");
    }
    double acc = 0.0;
    // subject*object first so that swapping subject and object is exact in floating point
    for (std::size_t k = 0; k < subject.size(); ++k) acc += (subject[k] * object[k]) * relation[k];
    return acc;
}

ConvEActivations conve_forward(const EmbeddingModel& model, std::span<const double> subject,
                               std::span<const double> relation) {
    const auto& dims = model.dims;
    if (model.kind != ScorerKind::ConvE) throw ShapeError("model is not a ConvE model");
    if (subject.size() != dims.embed_dim || relation.size() != dims.embed_dim) {
        throw ShapeError("ConvE operands must have length d=" + std::to_string(dims.embed_dim));
    }
    if (model.conv_proj.extent(0) != dims.conv_flat()) throw ShapeError("ConvE projection inconsistent with channels");

    ConvEActivations a;
    std::vector<double> stacked(subject.begin(), subject.end());
    stacked.insert(stacked.end(), relation.begin(), relation.end());
    a.stacked = Tensor({2 * dims.reshape_rows, dims.reshape_cols}, std::move(stacked));
    a.conv = conv2d_fwd(a.stacked, model.conv_kernels);
    a.flat = relu(std::span<const double>(a.conv.values()));
    a.projected = linear_fwd(a.flat, model.conv_proj);
    a.hidden = relu(std::span<const double>(a.projected));
    return a;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
}

}  // namespace

double score_conve(const EmbeddingModel& model, std::span<const double> subject, std::span<const double> relation,
                   std::span<const double> object) {
    if (object.size() != model.dims.embed_dim) throw ShapeError("ConvE object must have length d");
    const auto a = conve_forward(model, subject, relation);
    return dot(a.hidden, object);
}

std::vector<double> score_objects(const EmbeddingModel& model, std::span<const double> subject,
                                  RelationKind relation) {
    const auto r = relation_vector(model, relation);
    const std::size_t n = model.dims.findings;
    std::vector<double> psi(n);
    if (model.kind == ScorerKind::DistMult) {
        if (subject.size() != model.dims.embed_dim) throw ShapeError("subject embedding must have length d");
        for (std::size_t j = 0; j < n; ++j) psi[j] = score_distmult(subject, r, model.finding_emb.row(j));
    } else {
        const auto a = conve_forward(model, subject, r);
        for (std::size_t j = 0; j < n; ++j) psi[j] = dot(a.hidden, model.finding_emb.row(j));
    }
    return psi;
}

std::vector<double> score_all_objects(const EmbeddingModel& model, std::span<const double> features,
                                      RelationKind relation) {
    return score_objects(model, embed_subject(model, features), relation);
}

ModelGrad::ModelGrad(const EmbeddingModel& model) {
    const auto src = model.blocks();
    for (std::size_t b = 0; b < kParameterBlocks; ++b) blocks[b] = Tensor(src[b]->shape());
}

void ModelGrad::clear() {
    for (auto& b : blocks) std::fill(b.values().begin(), b.values().end(), 0.0);
}

void ModelGrad::add_scaled(const ModelGrad& other, double scale) {
    for (std::size_t b = 0; b < kParameterBlocks; ++b) {
        auto& dst = blocks[b].values();
        const auto& src = other.blocks[b].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
    }
}

std::vector<double> backward_objects(const EmbeddingModel& model, std::span<const double> subject,
                                     RelationKind relation, std::span<const double> upstream, ModelGrad& grad) {
    const auto& dims = model.dims;
    const std::size_t d = dims.embed_dim;
    const std::size_t n = dims.findings;
    if (upstream.size() != n) throw ShapeError("upstream must hold one value per finding");
    if (subject.size() != d) throw ShapeError("subject embedding must have length d");
    const auto rel_index = static_cast<std::size_t>(relation);
    const auto r = relation_vector(model, relation);
    auto& g_finding = grad.blocks[1];
    auto& g_relation = grad.blocks[2];

    std::vector<double> g_subject(d, 0.0);
    if (model.kind == ScorerKind::DistMult) {
        auto g_r = g_relation.row(rel_index);
        for (std::size_t j = 0; j < n; ++j) {
            const double u = upstream[j];
            if (u == 0.0) continue;
            const auto o = model.finding_emb.row(j);
            auto g_o = g_finding.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                g_subject[k] += u * r[k] * o[k];
                g_r[k] += u * subject[k] * o[k];
                g_o[k] += u * subject[k] * r[k];
            }
        }
        return g_subject;
    }

    const auto a = conve_forward(model, subject, r);
    std::vector<double> g_hidden(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double u = upstream[j];
        if (u == 0.0) continue;
        const auto o = model.finding_emb.row(j);
        auto g_o = g_finding.row(j);
        for (std::size_t k = 0; k < d; ++k) {
            g_hidden[k] += u * o[k];
            g_o[k] += u * a.hidden[k];
        }
    }
    const auto g_projected = relu_bwd(a.projected, g_hidden);
    const auto lin = linear_bwd(a.flat, model.conv_proj, g_projected);
    auto& g_proj = grad.blocks[4].values();
    for (std::size_t i = 0; i < g_proj.size(); ++i) g_proj[i] += lin.weights[i];

    const Tensor g_flat(a.conv.shape(), lin.input);
    const auto g_conv = relu_bwd(a.conv, g_flat);
    const auto conv = conv2d_bwd(a.stacked, model.conv_kernels, g_conv);
    auto& g_kernels = grad.blocks[3].values();
    for (std::size_t i = 0; i < g_kernels.size(); ++i) g_kernels[i] += conv.kernels[i];

    auto g_r = g_relation.row(rel_index);
    for (std::size_t k = 0; k < d; ++k) {
        g_subject[k] = conv.input[k];
        g_r[k] += conv.input[d + k];
    }
    return g_subject;
}

std::vector<double> backward_all_objects(const EmbeddingModel& model, std::span<const double> features,
                                         RelationKind relation, std::span<const double> upstream,
                                         ModelGrad& grad) {
    const auto subject = embed_subject(model, features);
    const auto g_subject = backward_objects(model, subject, relation, upstream, grad);
    auto lin = linear_bwd(features, model.subject_proj, g_subject);
    auto& g_proj = grad.blocks[0].values();
    for (std::size_t i = 0; i < g_proj.size(); ++i) g_proj[i] += lin.weights[i];
    return std::move(lin.input);
}

ScoreGrad grad_score(const EmbeddingModel& model, std::span<const double> features, RelationKind relation,
                     std::size_t object, double upstream) {
    if (object >= model.dims.findings) throw BoundsError("object finding out of range");
    std::vector<double> up(model.dims.findings, 0.0);
    up[object] = upstream;
    ScoreGrad g{ModelGrad(model), {}};
    g.features = backward_all_objects(model, features, relation, up, g.params);
    return g;
}

}  // namespace radkg
