#include <doctest.h>

#include <cmath>
#include <numeric>

#include "radkg/errors.hpp"
#include "radkg/random.hpp"
#include "radkg/scoring.hpp"
#include "radkg/tensor.hpp"

using namespace radkg;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

double triple_loop(const std::vector<double>& s, const std::vector<double>& r, const std::vector<double>& o) {
    // sum_{i,j,k} s_i R_jk o_k with R = diag(r), i.e. only i == j == k survives
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < r.size(); ++j)
            for (std::size_t k = 0; k < o.size(); ++k)
                if (i == j && j == k) acc += s[i] * r[j] * o[k];
    return acc;
}

ModelDims small_dims(std::size_t D, std::size_t d, std::size_t n) {
    ModelDims dims;
    dims.feature_dim = D;
    dims.embed_dim = d;
    dims.findings = n;
    return dims;
}

}  // namespace

TEST_CASE("embed_subject") {
    auto model = EmbeddingModel::zeros(ScorerKind::DistMult, small_dims(3, 3, 2));
    const std::vector<double> c = {1.5, -2, 4};
    CHECK(embed_subject(model, c) == std::vector<double>{0, 0, 0});

    for (std::size_t i = 0; i < 3; ++i) model.subject_proj.at(i, i) = 1.0;
    CHECK(embed_subject(model, c) == c);

    Rng rng(11);
    auto m2 = init_model(small_dims(7, 5, 3), ScorerKind::DistMult, 2);
    const auto x = random_vec(rng, 7);
    const auto e = embed_subject(m2, x);
    for (std::size_t k = 0; k < 5; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 7; ++i) acc += x[i] * m2.subject_proj.at(i, k);
        CHECK(e[k] == doctest::Approx(acc).epsilon(1e-14));
    }
    CHECK_THROWS_AS(embed_subject(m2, std::vector<double>(6)), ShapeError);
}

TEST_CASE("embed_object is a row lookup") {
    auto model = EmbeddingModel::zeros(ScorerKind::DistMult, small_dims(2, 3, 2));
    model.finding_emb.values() = {1, 2, 3, 4, 5, 6};
    const auto e0 = embed_object(model, 0);
    CHECK(std::vector<double>(e0.begin(), e0.end()) == std::vector<double>{1, 2, 3});
    const auto e1 = embed_object(model, 1);
    CHECK(std::vector<double>(e1.begin(), e1.end()) != std::vector<double>(e0.begin(), e0.end()));
    CHECK_THROWS_AS(embed_object(model, 2), BoundsError);
}

TEST_CASE("DistMult examples") {
    const std::vector<double> ones = {1, 1, 1};
    CHECK(score_distmult(ones, ones, ones) == 3.0);
    const std::vector<double> s = {1, 2, -1};
    const std::vector<double> r = {0.5, 1, 2};
    const std::vector<double> o = {2, 0, 1};
    CHECK(score_distmult(s, r, o) == -1.0);
    CHECK(triple_loop(s, r, o) == -1.0);
    CHECK(score_distmult(s, std::vector<double>{0, 0, 0}, o) == 0.0);
    CHECK(sigmoid(score_distmult(s, std::vector<double>{0, 0, 0}, o)) == 0.5);
}

TEST_CASE("DistMult matches the triple loop, is symmetric and trilinear") {
    Rng rng(21);
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 1 + rng.below(20);
        const auto s = random_vec(rng, d);
        const auto r = random_vec(rng, d);
        const auto o = random_vec(rng, d);
        const double psi = score_distmult(s, r, o);
        CHECK(std::abs(psi - triple_loop(s, r, o)) <= 1e-12);
        CHECK(psi == score_distmult(o, r, s));

        const double a = rng.uniform(-3, 3);
        auto as = s;
        for (auto& v : as) v *= a;
        CHECK(std::abs(score_distmult(as, r, o) - a * psi) <= 1e-12 * (1 + std::abs(a * psi)));
    }
}

TEST_CASE("ConvE shape contract at d=100, C=8") {
    const auto dims = ModelDims{};
    const auto model = init_model(dims, ScorerKind::ConvE, 3);
    Rng rng(1);
    const auto s = random_vec(rng, 100);
    const auto act = conve_forward(model, s, relation_vector(model, RelationKind::HasFinding));
    CHECK(act.stacked.shape() == std::vector<std::size_t>{20, 10});
    CHECK(act.conv.shape() == std::vector<std::size_t>{8, 16, 6});
    CHECK(act.flat.size() == 768);
    CHECK(act.projected.size() == 100);
    CHECK(act.hidden.size() == 100);
    CHECK(dims.conv_flat() == 768);
    CHECK(model.conv_proj.shape() == std::vector<std::size_t>{768, 100});

    // subject on top, relation below
    CHECK(act.stacked.at(0, 0) == s[0]);
    CHECK(act.stacked.at(10, 0) == relation_vector(model, RelationKind::HasFinding)[0]);
}

TEST_CASE("ConvE zero cases") {
    const auto model = init_model(ModelDims{}, ScorerKind::ConvE, 4);
    Rng rng(2);
    const auto s = random_vec(rng, 100);
    const auto r = relation_vector(model, RelationKind::HasFinding);
    CHECK(score_conve(model, s, r, std::vector<double>(100, 0.0)) == 0.0);

    const auto zero = EmbeddingModel::zeros(ScorerKind::ConvE, ModelDims{});
    CHECK(score_conve(zero, s, r, random_vec(rng, 100)) == 0.0);
}

TEST_CASE("ConvE rejects geometries without room for the kernel") {
    ModelDims dims;
    dims.embed_dim = 16;
    dims.reshape_rows = 4;
    dims.reshape_cols = 4;
    CHECK_THROWS_AS(init_model(dims, ScorerKind::ConvE, 0), ShapeError);
    dims.embed_dim = 100;
    dims.reshape_rows = 20;
    dims.reshape_cols = 5;
    CHECK_NOTHROW(init_model(dims, ScorerKind::ConvE, 0));
    CHECK(square_side(100) == 10);
    CHECK(square_side(99) == 0);
}

TEST_CASE("score_all_objects equals per-triple scores exactly") {
    for (auto kind : {ScorerKind::DistMult, ScorerKind::ConvE}) {
        ModelDims dims = small_dims(12, 25, 6);
        dims.reshape_rows = 5;
        dims.reshape_cols = 5;
        dims.channels = 3;
        const auto model = init_model(dims, kind, 5);
        Rng rng(3);
        const auto x = random_vec(rng, 12);
        const auto all = score_all_objects(model, x, RelationKind::HasFinding);
        REQUIRE(all.size() == 6);
        const auto s = embed_subject(model, x);
        const auto r = relation_vector(model, RelationKind::HasFinding);
        for (std::size_t j = 0; j < 6; ++j) {
            const double single = kind == ScorerKind::DistMult ? score_distmult(s, r, embed_object(model, j))
                                                               : score_conve(model, s, r, embed_object(model, j));
            CHECK(all[j] == single);
        }
    }
    const auto one = init_model(small_dims(4, 3, 1), ScorerKind::DistMult, 1);
    CHECK(score_all_objects(one, std::vector<double>{1, 2, 3, 4}, RelationKind::HasFinding).size() == 1);
}

TEST_CASE("DistMult with identity finding embeddings returns e_s * r") {
    auto model = init_model(small_dims(5, 4, 4), ScorerKind::DistMult, 8);
    model.finding_emb = Tensor({4, 4});
    for (std::size_t j = 0; j < 4; ++j) model.finding_emb.at(j, j) = 1.0;
    const std::vector<double> x = {0.3, -1, 2, 0.5, 1};
    const auto s = embed_subject(model, x);
    const auto r = relation_vector(model, RelationKind::HasFinding);
    const auto all = score_all_objects(model, x, RelationKind::HasFinding);
    for (std::size_t k = 0; k < 4; ++k) CHECK(all[k] == s[k] * r[k]);
}

TEST_CASE("relation rows outside the model are rejected") {
    const auto model = init_model(small_dims(3, 3, 2), ScorerKind::DistMult, 0);
    CHECK_THROWS_AS(relation_vector(model, RelationKind::CoOccurs), BoundsError);
}

TEST_CASE("grad_score DistMult subject gradient") {
    auto model = EmbeddingModel::zeros(ScorerKind::DistMult, small_dims(3, 3, 1));
    for (std::size_t i = 0; i < 3; ++i) model.subject_proj.at(i, i) = 1.0;  // c_X = e_s
    model.relation_emb.values() = {0.5, 1, 2};
    model.finding_emb.values() = {2, 0, 1};
    const auto g = grad_score(model, std::vector<double>{1, 2, -1}, RelationKind::HasFinding, 0, 1.0);
    CHECK(g.features == std::vector<double>{1, 0, 2});
    // d psi / d r = e_s * e_o, d psi / d e_o = e_s * r
    CHECK(g.params.blocks[2].values() == std::vector<double>{2, 0, -1});
    CHECK(g.params.blocks[1].values() == std::vector<double>{0.5, 2, -2});

    const auto z = grad_score(model, std::vector<double>{1, 2, -1}, RelationKind::HasFinding, 0, 0.0);
    for (const auto& b : z.params.blocks)
        for (double v : b.values()) CHECK(v == 0.0);
    for (double v : z.features) CHECK(v == 0.0);
}

TEST_CASE("grad_score matches finite differences of psi") {
    for (auto kind : {ScorerKind::DistMult, ScorerKind::ConvE}) {
        ModelDims dims = small_dims(6, 25, 3);
        dims.reshape_rows = 5;
        dims.reshape_cols = 5;
        dims.channels = 2;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            auto model = init_model(dims, kind, seed);
            Rng rng(100 + seed);
            const auto x = random_vec(rng, 6);
            const std::size_t obj = rng.below(3);
            const auto g = grad_score(model, x, RelationKind::HasFinding, obj, 1.0);

            const auto psi = [&](const EmbeddingModel& m, std::span<const double> feats) {
                return score_all_objects(m, feats, RelationKind::HasFinding)[obj];
            };
            const auto fx = finite_diff_grad([&](std::span<const double> p) { return psi(model, p); }, x);
            for (std::size_t i = 0; i < x.size(); ++i) {
                CHECK(std::abs(fx[i] - g.features[i]) <= 1e-6 * std::max(1.0, std::abs(fx[i])));
            }
            for (std::size_t b = 0; b < kParameterBlocks; ++b) {
                auto* block = model.blocks()[b];
                const auto original = block->values();
                const auto fb = finite_diff_grad(
                    [&](std::span<const double> p) {
                        block->values().assign(p.begin(), p.end());
                        const double v = psi(model, x);
                        block->values() = original;
                        return v;
                    },
                    original);
                for (std::size_t i = 0; i < fb.size(); ++i) {
                    CHECK(std::abs(fb[i] - g.params.blocks[b][i]) <= 1e-6 * std::max(1.0, std::abs(fb[i])));
                }
            }
        }
    }
}

TEST_CASE("ConvE score is invariant under a consistent channel permutation") {
    ModelDims dims;
    dims.channels = 4;
    const auto model = init_model(dims, ScorerKind::ConvE, 12);
    auto permuted = model;
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    const std::size_t plane = dims.conv_out_rows() * dims.conv_out_cols();
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t t = 0; t < 25; ++t) permuted.conv_kernels[c * 25 + t] = model.conv_kernels[perm[c] * 25 + t];
        for (std::size_t p = 0; p < plane; ++p) {
            const auto dst = permuted.conv_proj.row(c * plane + p);
            const auto src = model.conv_proj.row(perm[c] * plane + p);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }
    Rng rng(5);
    const auto x = random_vec(rng, dims.feature_dim);
    const auto a = score_all_objects(model, x, RelationKind::HasFinding);
    const auto b = score_all_objects(permuted, x, RelationKind::HasFinding);
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::abs(a[j] - b[j]) <= 1e-12 * (1 + std::abs(a[j])));
}

TEST_CASE("init_model is deterministic and Glorot-bounded") {
    const auto dims = small_dims(64, 16, 14);
    const auto a = init_model(dims, ScorerKind::DistMult, 7);
    const auto b = init_model(dims, ScorerKind::DistMult, 7);
    CHECK(a == b);
    CHECK(!(a == init_model(dims, ScorerKind::DistMult, 8)));
    const double bound = std::sqrt(6.0 / (64 + 16));
    for (double v : a.subject_proj.values()) CHECK(std::abs(v) <= bound);
    CHECK(a.conv_kernels.empty());
    CHECK(a.conv_proj.empty());
}

TEST_CASE("parameter counts") {
    ModelDims dims;  // D=1024, d=100, n=14, |R|=1
    const auto model = EmbeddingModel::zeros(ScorerKind::DistMult, dims);
    CHECK(param_count(model) == 1024 * 100 + 14 * 100 + 1 * 100);
    CHECK(param_count(model) == 103900);
    dims.relations = 3;
    CHECK(param_count(EmbeddingModel::zeros(ScorerKind::DistMult, dims)) == 103900 + 200);

    const auto conve = EmbeddingModel::zeros(ScorerKind::ConvE, ModelDims{});
    CHECK(param_count(conve) == 103900 + 8 * 25 + 768 * 100);

    dims.embed_dim = 0;
    CHECK_THROWS_AS(EmbeddingModel::zeros(ScorerKind::DistMult, dims), ShapeError);
}
