#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "radkg/errors.hpp"
#include "radkg/kg_store.hpp"
#include "radkg/random.hpp"

using namespace radkg;

namespace {

AnnotationTable one_row(std::vector<LabelValue> row) {
    AnnotationTable t;
    for (std::size_t j = 0; j < row.size(); ++j) t.finding_names.push_back("F" + std::to_string(j));
    t.image_ids = {"x0"};
    t.labels = {std::move(row)};
    return t;
}

AnnotationTable random_table(Rng& rng, std::size_t m, std::size_t n) {
    AnnotationTable t;
    for (std::size_t j = 0; j < n; ++j) t.finding_names.push_back("F" + std::to_string(j));
    const LabelValue values[] = {LabelValue::Positive, LabelValue::Negative, LabelValue::Uncertain,
                                 LabelValue::Unmentioned};
    for (std::size_t i = 0; i < m; ++i) {
        t.image_ids.push_back("x" + std::to_string(i));
        std::vector<LabelValue> row(n);
        for (auto& v : row) v = values[rng.below(4)];
        t.labels.push_back(row);
    }
    return t;
}

Triple has(std::size_t i, std::size_t j) { return {EntityId::image(i), RelationKind::HasFinding, EntityId::finding(j)}; }

}  // namespace

TEST_CASE("build_radkg maps uncertain cells per policy") {
    const auto table = one_row({LabelValue::Positive, LabelValue::Uncertain, LabelValue::Negative});

    const auto pos = build_radkg(table, UncertainPolicy::AsPositive);
    CHECK(pos.triples() == std::set<Triple>{has(0, 0), has(0, 1)});

    const auto sep = build_radkg(table, UncertainPolicy::AsSeparateRelation);
    CHECK(sep.triples() ==
          std::set<Triple>{has(0, 0), {EntityId::image(0), RelationKind::ProbablyHasFinding, EntityId::finding(1)}});

    const auto neg = build_radkg(table, UncertainPolicy::AsNegative);
    CHECK(neg.triples() == std::set<Triple>{has(0, 0)});
}

TEST_CASE("unmentioned cells produce no triple") {
    const auto kg = build_radkg(one_row({LabelValue::Unmentioned, LabelValue::Positive}), UncertainPolicy::AsPositive);
    CHECK(kg.triples() == std::set<Triple>{has(0, 1)});
}

TEST_CASE("malformed table is rejected with the row") {
    auto t = one_row({LabelValue::Positive, LabelValue::Negative});
    t.image_ids.push_back("x1");
    t.labels.push_back({LabelValue::Positive});
    try {
        build_radkg(t, UncertainPolicy::AsPositive);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("negatives_for is the closed-world complement") {
    const KnowledgeGraph kg(1, 3, {has(0, 0)});
    CHECK(negatives_for(kg, EntityId::image(0), RelationKind::HasFinding) ==
          std::set<EntityId>{EntityId::finding(1), EntityId::finding(2)});

    const KnowledgeGraph full(1, 3, {has(0, 0), has(0, 1), has(0, 2)});
    CHECK(negatives_for(full, EntityId::image(0), RelationKind::HasFinding).empty());

    const KnowledgeGraph empty(1, 14, {});
    CHECK(negatives_for(empty, EntityId::image(0), RelationKind::HasFinding).size() == 14);

    CHECK_THROWS_AS(negatives_for(kg, EntityId::finding(0), RelationKind::HasFinding), InvalidEntityError);
}

TEST_CASE("graph rejects ill-typed or out-of-range triples") {
    CHECK_THROWS_AS(KnowledgeGraph(1, 2, {{EntityId::finding(0), RelationKind::HasFinding, EntityId::finding(1)}}),
                    InvalidEntityError);
    CHECK_THROWS_AS(KnowledgeGraph(1, 2, {{EntityId::image(0), RelationKind::CoOccurs, EntityId::finding(1)}}),
                    InvalidEntityError);
    CHECK_THROWS_AS(KnowledgeGraph(1, 2, {{EntityId::finding(1), RelationKind::CoOccurs, EntityId::finding(1)}}),
                    InvalidEntityError);
    CHECK_THROWS_AS(KnowledgeGraph(1, 2, {has(0, 2)}), BoundsError);
    CHECK_THROWS_AS(KnowledgeGraph(1, 2, {has(1, 0)}), BoundsError);
    CHECK(KnowledgeGraph(1, 2, {has(0, 1), has(0, 1)}).size() == 1);
}

TEST_CASE("round trip: triples plus negatives reconstruct the policy-mapped grid") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const auto table = random_table(rng, 1 + rng.below(30), 1 + rng.below(14));
        for (auto policy : {UncertainPolicy::AsPositive, UncertainPolicy::AsNegative,
                            UncertainPolicy::AsSeparateRelation}) {
            const auto kg = build_radkg(table, policy);
            for (std::size_t i = 0; i < table.rows(); ++i) {
                const auto negatives = negatives_for(kg, EntityId::image(i), RelationKind::HasFinding);
                for (std::size_t j = 0; j < table.findings(); ++j) {
                    const bool linked = kg.contains(has(i, j));
                    CHECK(linked == !negatives.contains(EntityId::finding(j)));
                    CHECK(linked == is_positive(table.labels[i][j], policy));
                    const bool probable =
                        kg.contains({EntityId::image(i), RelationKind::ProbablyHasFinding, EntityId::finding(j)});
                    CHECK(probable == (policy == UncertainPolicy::AsSeparateRelation &&
                                       table.labels[i][j] == LabelValue::Uncertain));
                }
            }
        }
    }
}

TEST_CASE("policy triple counts are ordered") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const auto table = random_table(rng, 1 + rng.below(40), 1 + rng.below(14));
        const auto pos = build_radkg(table, UncertainPolicy::AsPositive).size();
        const auto sep = build_radkg(table, UncertainPolicy::AsSeparateRelation).count(RelationKind::HasFinding);
        const auto neg = build_radkg(table, UncertainPolicy::AsNegative).size();
        CHECK(pos >= sep);
        CHECK(sep >= neg);
    }
}

TEST_CASE("co-occurrence probabilities match the counting example") {
    // F0 positive in rows 1,2,3; F1 in rows 2,3.
    AnnotationTable t;
    t.finding_names = {"F0", "F1", "F2"};
    const auto P = LabelValue::Positive;
    const auto N = LabelValue::Negative;
    t.image_ids = {"r0", "r1", "r2", "r3"};
    t.labels = {{N, N, P}, {P, N, N}, {P, P, N}, {P, P, N}};
    const auto m = cooccurrence_matrix(t, UncertainPolicy::AsPositive);
    CHECK(*m.at(0, 1) == 1.0);
    CHECK(*m.at(1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(*m.at(0, 0) == 1.0);
    CHECK(*m.at(2, 2) == 1.0);
    CHECK(*m.at(2, 0) == 0.0);  // F2 never with F0
    CHECK(*m.at(0, 2) == 0.0);
}

TEST_CASE("co-occurrence column of a never-positive finding is undefined") {
    auto t = one_row({LabelValue::Positive, LabelValue::Negative});
    const auto m = cooccurrence_matrix(t, UncertainPolicy::AsPositive);
    CHECK_FALSE(m.at(0, 1).has_value());
    CHECK_FALSE(m.at(1, 1).has_value());
    CHECK(m.at(1, 0).has_value());
    CHECK(*m.at(1, 0) == 0.0);

    const auto kg = add_cooccurrence(build_radkg(t, UncertainPolicy::AsPositive), m, 0.0);
    CHECK(kg.count(RelationKind::CoOccurs) == 0);
}

TEST_CASE("co-occurrence matrix equals an independent counting oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 40; ++trial) {
        const auto table = random_table(rng, 1 + rng.below(60), 1 + rng.below(14));
        for (auto policy : {UncertainPolicy::AsPositive, UncertainPolicy::AsNegative}) {
            const auto m = cooccurrence_matrix(table, policy);
            const auto n = table.findings();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    std::size_t both = 0, cond = 0;
                    for (const auto& row : table.labels) {
                        const bool pj = row[j] == LabelValue::Positive ||
                                        (policy == UncertainPolicy::AsPositive && row[j] == LabelValue::Uncertain);
                        const bool pi = row[i] == LabelValue::Positive ||
                                        (policy == UncertainPolicy::AsPositive && row[i] == LabelValue::Uncertain);
                        cond += pj;
                        both += pi && pj;
                    }
                    if (cond == 0) {
                        CHECK_FALSE(m.at(i, j).has_value());
                    } else {
                        REQUIRE(m.at(i, j).has_value());
                        CHECK(*m.at(i, j) == static_cast<double>(both) / static_cast<double>(cond));
                        CHECK(*m.at(i, j) >= 0.0);
                        CHECK(*m.at(i, j) <= 1.0);
                    }
                }
            }
        }
    }
}

TEST_CASE("add_cooccurrence uses a strict threshold and skips the diagonal") {
    CooccurrenceMatrix m(2);
    m.at(0, 0) = 1.0;
    m.at(1, 1) = 1.0;
    m.at(0, 1) = 1.0;
    m.at(1, 0) = 0.2;
    const KnowledgeGraph base(1, 2, {has(0, 0)});
    const auto kg = add_cooccurrence(base, m, 0.2);
    CHECK(kg.contains({EntityId::finding(0), RelationKind::CoOccurs, EntityId::finding(1)}));
    CHECK_FALSE(kg.contains({EntityId::finding(1), RelationKind::CoOccurs, EntityId::finding(0)}));
    CHECK(kg.count(RelationKind::CoOccurs) == 1);
    CHECK(kg.contains(has(0, 0)));

    CHECK_THROWS_AS(add_cooccurrence(KnowledgeGraph(1, 3, {}), m, 0.2), ShapeError);
}

TEST_CASE("add_cooccurrence is monotone in the threshold") {
    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const auto table = random_table(rng, 5 + rng.below(50), 2 + rng.below(12));
        const auto kg = build_radkg(table, UncertainPolicy::AsPositive);
        const auto m = cooccurrence_matrix(table, UncertainPolicy::AsPositive);
        const double hi = rng.uniform();
        const double lo = hi * rng.uniform();
        const auto a = add_cooccurrence(kg, m, lo);
        const auto b = add_cooccurrence(kg, m, hi);
        CHECK(std::includes(a.triples().begin(), a.triples().end(), b.triples().begin(), b.triples().end()));
    }
}

TEST_CASE("split of 100 ungrouped rows is exactly 70/10/20") {
    Rng rng(15);
    const auto table = random_table(rng, 100, 3);
    const auto s = split(table, {}, 42);
    CHECK(s.train().rows() == 70);
    CHECK(s.val().rows() == 10);
    CHECK(s.test().rows() == 20);
    CHECK(s.warnings.empty());
}

TEST_CASE("split keeps a group in one fold and warns when it is too large") {
    Rng rng(16);
    auto table = random_table(rng, 10, 2);
    table.groups.assign(10, "patient");
    const auto s = split(table, {}, 1);
    std::size_t non_empty = 0;
    for (const auto& f : s.folds) non_empty += f.rows() > 0;
    CHECK(non_empty == 1);
    CHECK(s.rows[0].size() + s.rows[1].size() + s.rows[2].size() == 10);
    CHECK_FALSE(s.warnings.empty());
}

TEST_CASE("split is a deterministic group-atomic partition") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 20 + rng.below(200);
        auto table = random_table(rng, m, 2);
        const std::size_t groups = 1 + rng.below(m);
        for (std::size_t i = 0; i < m; ++i) table.groups.push_back("g" + std::to_string(rng.below(groups)));
        const auto seed = rng.next();
        const auto a = split(table, {}, seed);
        const auto b = split(table, {}, seed);
        CHECK(a.rows == b.rows);

        std::vector<int> fold_of(m, -1);
        for (int k = 0; k < 3; ++k) {
            for (auto r : a.rows[k]) {
                CHECK(fold_of[r] == -1);
                fold_of[r] = k;
            }
        }
        CHECK(std::count(fold_of.begin(), fold_of.end(), -1) == 0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                if (table.groups[i] == table.groups[j]) CHECK(fold_of[i] == fold_of[j]);
            }
        }
    }
}

TEST_CASE("split rejects invalid ratios") {
    Rng rng(18);
    const auto table = random_table(rng, 10, 2);
    CHECK_THROWS(split(table, {0.5, 0.5, 0.0}, 1));
    CHECK_THROWS(split(table, {0.7, 0.2, 0.2}, 1));
}

TEST_CASE("annotation file parsing") {
    std::istringstream in(
        "# comment\n"
        "id,A,B,C,group\n"
        "x0,1.0,,-1.0,p1\n"
        "x1,0,1,0.0,p1\n"
        "x2,-1,0.0,1,p2\n");
    const auto t = read_annotations(in, "ann.csv");
    CHECK(t.finding_names == std::vector<std::string>{"A", "B", "C"});
    CHECK(t.rows() == 3);
    CHECK(t.labels[0] == std::vector<LabelValue>{LabelValue::Positive, LabelValue::Unmentioned, LabelValue::Uncertain});
    CHECK(t.labels[2][0] == LabelValue::Uncertain);
    CHECK(t.groups == std::vector<std::string>{"p1", "p1", "p2"});

    std::ostringstream out;
    write_annotations(out, t);
    std::istringstream again(out.str());
    const auto u = read_annotations(again);
    CHECK(u.labels == t.labels);
    CHECK(u.image_ids == t.image_ids);
    CHECK(u.groups == t.groups);
}

TEST_CASE("annotation parse errors carry the line") {
    std::istringstream bad_token("id,A\nx0,2.0\n");
    try {
        read_annotations(bad_token, "ann.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.source() == "ann.csv");
    }
    std::istringstream ragged("id,A,B\nx0,1\n");
    CHECK_THROWS_AS(read_annotations(ragged), ParseError);
    std::istringstream dup("id,A\nx0,1\nx0,0\n");
    CHECK_THROWS_AS(read_annotations(dup), ParseError);
}

TEST_CASE("serialized graph round trips") {
    const KnowledgeGraph kg(2, 3,
                            {has(0, 0), has(1, 2),
                             {EntityId::image(1), RelationKind::ProbablyHasFinding, EntityId::finding(1)},
                             {EntityId::finding(0), RelationKind::CoOccurs, EntityId::finding(2)}});
    std::ostringstream out;
    write_kg(out, kg);
    CHECK(out.str().find("image:0\thasFinding\tfinding:0\n") != std::string::npos);
    std::istringstream in(out.str());
    CHECK(read_kg(in, 2, 3).triples() == kg.triples());

    std::istringstream bad("image:0\tlikes\tfinding:0\n");
    CHECK_THROWS_AS(read_kg(bad, 1, 1), ParseError);
}
