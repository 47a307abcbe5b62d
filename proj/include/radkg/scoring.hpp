#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "radkg/kg_store.hpp"
#include "radkg/tensor.hpp"

namespace radkg {

enum class ScorerKind : std::uint8_t { DistMult = 0, ConvE = 1 };

std::string_view to_string(ScorerKind k);
ScorerKind parse_scorer(std::string_view token);

/// Model geometry. For ConvE the embedding is reshaped to reshape_rows x reshape_cols
/// (reshape_rows * reshape_cols == embed_dim) and subject/relation are stacked vertically.
struct ModelDims {
    std::size_t feature_dim = 1024;
    std::size_t embed_dim = 100;
    std::size_t findings = 14;
    std::size_t channels = 8;
    std::size_t relations = 1;
    std::size_t reshape_rows = 10;
    std::size_t reshape_cols = 10;

    std::size_t conv_out_rows() const { return 2 * reshape_rows - kConvKernelSide + 1; }
    std::size_t conv_out_cols() const { return reshape_cols - kConvKernelSide + 1; }
    std::size_t conv_flat() const { return channels * conv_out_rows() * conv_out_cols(); }

    /// Throws ShapeError for zero extents or, under ConvE, a reshape that cannot hold a 5x5 kernel.
    void validate(ScorerKind kind) const;

    bool operator==(const ModelDims&) const = default;
};

/// Square reshape side for `embed_dim` when it is a perfect square, else 0.
std::size_t square_side(std::size_t embed_dim);

inline constexpr std::size_t kParameterBlocks = 5;

/// All learnable parameters. ConvE blocks are empty under DistMult.
struct EmbeddingModel {
    ScorerKind kind = ScorerKind::DistMult;
    ModelDims dims;
    Tensor subject_proj;   // [D, d]
    Tensor finding_emb;    // [n, d]
    Tensor relation_emb;   // [|R|, d]
    Tensor conv_kernels;   // [C, 5, 5]
    Tensor conv_proj;      // [C*(2*rows-4)*(cols-4), d]

    /// Fixed order shared by the optimizer and the checkpoint format.
    std::array<Tensor*, kParameterBlocks> blocks() {
        return {&subject_proj, &finding_emb, &relation_emb, &conv_kernels, &conv_proj};
    }
    std::array<const Tensor*, kParameterBlocks> blocks() const {
        return {&subject_proj, &finding_emb, &relation_emb, &conv_kernels, &conv_proj};
    }

    /// Zero-filled model of the right shapes.
    static EmbeddingModel zeros(ScorerKind kind, const ModelDims& dims);

    bool operator==(const EmbeddingModel&) const = default;
};

inline constexpr std::array<std::string_view, kParameterBlocks> kBlockNames = {
    "subject_proj", "finding_emb", "relation_emb", "conv_kernels", "conv_proj"};

/// Glorot-uniform per block, a = sqrt(6 / (fan_in + fan_out)); deterministic per seed.
EmbeddingModel init_model(const ModelDims& dims, ScorerKind kind, std::uint64_t seed);

std::size_t param_count(const EmbeddingModel& model);

std::vector<double> embed_subject(const EmbeddingModel& model, std::span<const double> features);
std::span<const double> embed_object(const EmbeddingModel& model, std::size_t finding);
std::span<const double> relation_vector(const EmbeddingModel& model, RelationKind relation);

double score_distmult(std::span<const double> subject, std::span<const double> relation,
                      std::span<const double> object);

/// Intermediate values of the ConvE pipeline up to (and excluding) the object dot product.
struct ConvEActivations {
    Tensor stacked;        // [2*rows, cols]
    Tensor conv;           // [C, 2*rows-4, cols-4], pre-activation
    std::vector<double> flat;  // relu(conv) vectorised
    std::vector<double> projected;  // flat . W, pre-activation
    std::vector<double> hidden;     // relu(projected)
};

ConvEActivations conve_forward(const EmbeddingModel& model, std::span<const double> subject,
                               std::span<const double> relation);

double score_conve(const EmbeddingModel& model, std::span<const double> subject, std::span<const double> relation,
                   std::span<const double> object);

/// psi for every finding as object, given an already embedded subject.
std::vector<double> score_objects(const EmbeddingModel& model, std::span<const double> subject,
                                  RelationKind relation);

/// psi(image, relation, F_j) for all j.
std::vector<double> score_all_objects(const EmbeddingModel& model, std::span<const double> features,
                                      RelationKind relation);

/// Same shapes as the model; accumulated by the backward functions.
struct ModelGrad {
    ModelGrad() = default;
    explicit ModelGrad(const EmbeddingModel& model);

    std::array<Tensor, kParameterBlocks> blocks;

    void clear();
    void add_scaled(const ModelGrad& other, double scale);
};

/// Backpropagates d(sum_j upstream_j * psi_j) from score_objects. Parameter gradients are
/// accumulated into `grad`; the gradient with respect to `subject` is returned.
std::vector<double> backward_objects(const EmbeddingModel& model, std::span<const double> subject,
                                     RelationKind relation, std::span<const double> upstream, ModelGrad& grad);

/// Backpropagates through score_all_objects including the subject projection; returns d/d features.
std::vector<double> backward_all_objects(const EmbeddingModel& model, std::span<const double> features,
                                         RelationKind relation, std::span<const double> upstream,
                                         ModelGrad& grad);

struct ScoreGrad {
    ModelGrad params;
    std::vector<double> features;
};

/// Gradient of upstream * psi(image, relation, F_object).
ScoreGrad grad_score(const EmbeddingModel& model, std::span<const double> features, RelationKind relation,
                     std::size_t object, double upstream);

}  // namespace radkg
