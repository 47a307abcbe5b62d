#include "radkg/kg_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "radkg/errors.hpp"
#include "radkg/random.hpp"
#include "text_util.hpp"

namespace radkg {

std::string_view to_string(RelationKind r) {
    switch (r) {
        case RelationKind::HasFinding: return "hasFinding";
        case RelationKind::ProbablyHasFinding: return "probablyHasFinding";
        case RelationKind::CoOccurs: return "coOccurs";
    }
    return "?";
}

RelationKind parse_relation(std::string_view token) {
    for (auto r : kAllRelations) {
        if (token == to_string(r)) return r;
    }
    throw Error("unknown relation '" + std::string(token) + "'");
}

std::string_view to_string(EntityKind k) { return k == EntityKind::Image ? "image" : "finding"; }

std::optional<LabelValue> parse_label(std::string_view token) {
    if (token.empty()) return LabelValue::Unmentioned;
    if (token == "1" || token == "1.0") return LabelValue::Positive;
    if (token == "0" || token == "0.0") return LabelValue::Negative;
    if (token == "-1" || token == "-1.0") return LabelValue::Uncertain;
    return std::nullopt;
}

std::string_view label_token(LabelValue v) {
    switch (v) {
        case LabelValue::Positive: return "1.0";
        case LabelValue::Negative: return "0.0";
        case LabelValue::Uncertain: return "-1.0";
        case LabelValue::Unmentioned: return "";
    }
    return "";
}

std::string_view to_string(UncertainPolicy p) {
    switch (p) {
        case UncertainPolicy::AsPositive: return "positive";
        case UncertainPolicy::AsNegative: return "negative";
        case UncertainPolicy::AsSeparateRelation: return "separate";
    }
    return "?";
}

UncertainPolicy parse_policy(std::string_view token) {
    if (token == "positive") return UncertainPolicy::AsPositive;
    if (token == "negative") return UncertainPolicy::AsNegative;
    if (token == "separate") return UncertainPolicy::AsSeparateRelation;
    throw Error("unknown uncertain policy '" + std::string(token) + "' (expected positive|negative|separate)");
}

bool is_positive(LabelValue v, UncertainPolicy policy) {
    return v == LabelValue::Positive ||
           (v == LabelValue::Uncertain && policy == UncertainPolicy::AsPositive);
}

// ---------------------------------------------------------------------------
// AnnotationTable

void AnnotationTable::validate() const {
    if (labels.size() != image_ids.size()) {
        throw ParseError({}, 0, "label grid has " + std::to_string(labels.size()) + " rows for " +
                                    std::to_string(image_ids.size()) + " ids");
    }
    if (!groups.empty() && groups.size() != image_ids.size()) {
        throw ParseError({}, 0, "group column length does not match row count");
    }
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r].size() != finding_names.size()) {
            throw ParseError({}, r + 2, "row " + std::to_string(r) + " has " + std::to_string(labels[r].size()) +
                                            " labels, expected " + std::to_string(finding_names.size()));
        }
        if (!seen.insert(image_ids[r]).second) {
            throw ParseError({}, r + 2, "duplicate image id '" + image_ids[r] + "' at row " + std::to_string(r));
        }
    }
}

AnnotationTable AnnotationTable::subset(const std::vector<std::size_t>& rows) const {
    AnnotationTable out;
    out.finding_names = finding_names;
    out.image_ids.reserve(rows.size());
    out.labels.reserve(rows.size());
    for (auto r : rows) {
        out.image_ids.push_back(image_ids.at(r));
        out.labels.push_back(labels.at(r));
        if (!groups.empty()) out.groups.push_back(groups[r]);
    }
    return out;
}

AnnotationTable read_annotations(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    if (!detail::next_record(in, line, line_no)) throw ParseError(source, 0, "missing header row");

    const auto header = detail::split_csv(line);
    if (header.size() < 2 || header.front() != "id") {
        throw ParseError(source, line_no, "header must start with 'id' followed by finding names");
    }
    const bool has_group = header.back() == "group";
    const std::size_t n = header.size() - 1 - (has_group ? 1 : 0);
    if (n == 0) throw ParseError(source, line_no, "header names no findings");

    AnnotationTable table;
    for (std::size_t c = 1; c <= n; ++c) table.finding_names.emplace_back(header[c]);

    std::unordered_set<std::string> seen;
    std::size_t row = 0;
    while (detail::next_record(in, line, line_no)) {
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size()) {
            throw ParseError(source, line_no, "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                                  " cells, expected " + std::to_string(header.size()));
        }
        std::string id(cells[0]);
        if (id.empty()) throw ParseError(source, line_no, "row " + std::to_string(row) + " has an empty id");
        if (!seen.insert(id).second) {
            throw ParseError(source, line_no, "row " + std::to_string(row) + ": duplicate image id '" + id + "'");
        }
        std::vector<LabelValue> values;
        values.reserve(n);
        for (std::size_t c = 1; c <= n; ++c) {
            const auto v = parse_label(cells[c]);
            if (!v) {
                throw ParseError(source, line_no, "row " + std::to_string(row) + ", column '" +
                                                      table.finding_names[c - 1] + "': invalid label token '" +
                                                      std::string(cells[c]) + "'");
            }
            values.push_back(*v);
        }
        table.image_ids.push_back(std::move(id));
        table.labels.push_back(std::move(values));
        if (has_group) table.groups.emplace_back(cells.back());
        ++row;
    }
    return table;
}

AnnotationTable load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open annotation file");
    return read_annotations(in, path);
}

void write_annotations(std::ostream& out, const AnnotationTable& table) {
    out << "id";
    for (const auto& name : table.finding_names) out << ',' << name;
    if (!table.groups.empty()) out << ",group";
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        out << table.image_ids[r];
        for (auto v : table.labels[r]) out << ',' << label_token(v);
        if (!table.groups.empty()) out << ',' << table.groups[r];
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

KnowledgeGraph::KnowledgeGraph(std::size_t images, std::size_t findings, const std::vector<Triple>& triples)
    : images_(images), findings_(findings) {
    for (const auto& t : triples) {
        check(t);
        triples_.insert(t);
    }
}

void KnowledgeGraph::check(const Triple& t) const {
    const auto in_bounds = [this](EntityId e) {
        return e.kind == EntityKind::Image ? e.index < images_ : e.index < findings_;
    };
    if (!in_bounds(t.subject) || !in_bounds(t.object)) throw BoundsError("triple references an entity out of range");
    if (t.relation == RelationKind::CoOccurs) {
        if (t.subject.kind != EntityKind::Finding || t.object.kind != EntityKind::Finding) {
            throw InvalidEntityError("coOccurs links findings to findings");
        }
        if (t.subject == t.object) throw InvalidEntityError("coOccurs self-loop");
    } else if (t.subject.kind != EntityKind::Image || t.object.kind != EntityKind::Finding) {
        throw InvalidEntityError(std::string(to_string(t.relation)) + " links images to findings");
    }
}

std::size_t KnowledgeGraph::count(RelationKind r) const {
    return static_cast<std::size_t>(
        std::count_if(triples_.begin(), triples_.end(), [r](const Triple& t) { return t.relation == r; }));
}

std::vector<double> KnowledgeGraph::targets(EntityId subject, RelationKind relation) const {
    std::vector<double> y(findings_, 0.0);
    // Triples are ordered by subject first, so the matching range is contiguous.
    const Triple lo{subject, relation, EntityId::image(0)};
    for (auto it = triples_.lower_bound(lo); it != triples_.end(); ++it) {
        if (it->subject != subject || it->relation != relation) break;
        if (it->object.kind == EntityKind::Finding) y[it->object.index] = 1.0;
    }
    return y;
}

KnowledgeGraph KnowledgeGraph::with(const std::vector<Triple>& extra) const {
    KnowledgeGraph out = *this;
    for (const auto& t : extra) {
        out.check(t);
        out.triples_.insert(t);
    }
    return out;
}

KnowledgeGraph build_radkg(const AnnotationTable& annotations, UncertainPolicy policy) {
    annotations.validate();
    std::vector<Triple> triples;
    for (std::size_t i = 0; i < annotations.rows(); ++i) {
        for (std::size_t j = 0; j < annotations.findings(); ++j) {
            const auto v = annotations.labels[i][j];
            if (v == LabelValue::Positive ||
                (v == LabelValue::Uncertain && policy == UncertainPolicy::AsPositive)) {
                triples.push_back({EntityId::image(i), RelationKind::HasFinding, EntityId::finding(j)});
            } else if (v == LabelValue::Uncertain && policy == UncertainPolicy::AsSeparateRelation) {
                triples.push_back({EntityId::image(i), RelationKind::ProbablyHasFinding, EntityId::finding(j)});
            }
        }
    }
    return KnowledgeGraph(annotations.rows(), annotations.findings(), triples);
}

std::set<EntityId> negatives_for(const KnowledgeGraph& kg, EntityId image, RelationKind relation) {
    if (image.kind != EntityKind::Image) throw InvalidEntityError("negatives_for expects an image entity");
    if (image.index >= kg.images()) throw BoundsError("image index out of range");
    if (relation == RelationKind::CoOccurs) throw InvalidEntityError("coOccurs has no image subjects");
    std::set<EntityId> out;
    const auto y = kg.targets(image, relation);
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (y[j] == 0.0) out.insert(EntityId::finding(j));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Co-occurrence

CooccurrenceMatrix cooccurrence_matrix(const AnnotationTable& annotations, UncertainPolicy policy) {
    annotations.validate();
    const std::size_t n = annotations.findings();
    std::vector<std::size_t> single(n, 0);
    std::vector<std::size_t> joint(n * n, 0);
    std::vector<std::size_t> active;
    for (const auto& row : annotations.labels) {
        active.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (is_positive(row[j], policy)) active.push_back(j);
        }
        for (auto j : active) {
            ++single[j];
            for (auto i : active) ++joint[i * n + j];
        }
    }
    CooccurrenceMatrix m(n);
    for (std::size_t j = 0; j < n; ++j) {
        if (single[j] == 0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            m.at(i, j) = static_cast<double>(joint[i * n + j]) / static_cast<double>(single[j]);
        }
    }
    return m;
}

KnowledgeGraph add_cooccurrence(const KnowledgeGraph& kg, const CooccurrenceMatrix& matrix, double threshold) {
    if (matrix.size() != kg.findings()) {
        throw ShapeError("co-occurrence matrix is " + std::to_string(matrix.size()) + "x" +
                         std::to_string(matrix.size()) + " for " + std::to_string(kg.findings()) + " findings");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("co-occurrence threshold must lie in [0, 1]");
    std::vector<Triple> extra;
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        for (std::size_t j = 0; j < matrix.size(); ++j) {
            const auto& p = matrix.at(i, j);
            if (i != j && p && *p > threshold) {
                extra.push_back({EntityId::finding(i), RelationKind::CoOccurs, EntityId::finding(j)});
            }
        }
    }
    return kg.with(extra);
}

// ---------------------------------------------------------------------------
// Split

Split split(const AnnotationTable& annotations, const SplitRatios& ratios, std::uint64_t seed) {
    annotations.validate();
    const std::array<double, 3> r = {ratios.train, ratios.val, ratios.test};
    for (double x : r) {
        if (!(x > 0.0)) throw Error("split ratios must be positive");
    }
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw Error("split ratios must sum to 1");

    const std::size_t m = annotations.rows();

    // Groups in first-appearance order; ungrouped rows are singletons.
    std::vector<std::vector<std::size_t>> groups;
    std::unordered_map<std::string, std::size_t> group_of;
    for (std::size_t row = 0; row < m; ++row) {
        if (annotations.groups.empty() || annotations.groups[row].empty()) {
            groups.push_back({row});
            continue;
        }
        const auto [it, inserted] = group_of.emplace(annotations.groups[row], groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(row);
    }

    Split out;
    const double largest = *std::max_element(r.begin(), r.end());
    for (const auto& g : groups) {
        if (m > 0 && static_cast<double>(g.size()) > largest * static_cast<double>(m)) {
            out.warnings.push_back("group of " + std::to_string(g.size()) + " rows exceeds the largest fold target; split is best-effort");
        }
    }

    // Integer targets by largest remainder so they sum to m.
    std::array<std::size_t, 3> target{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = r[k] * static_cast<double>(m);
        target[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[k] = exact - static_cast<double>(target[k]);
        assigned += target[k];
    }
    while (assigned < m) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < 3; ++k) {
            if (remainder[k] > remainder[best]) best = k;
        }
        ++target[best];
        remainder[best] = -1.0;
        ++assigned;
    }

    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    std::array<std::size_t, 3> filled{};
    for (auto gi : order) {
        // Fold with the largest remaining deficit; ties to the earlier fold.
        std::size_t best = 0;
        long long best_deficit = static_cast<long long>(target[0]) - static_cast<long long>(filled[0]);
        for (std::size_t k = 1; k < 3; ++k) {
            const long long deficit = static_cast<long long>(target[k]) - static_cast<long long>(filled[k]);
            if (deficit > best_deficit) {
                best = k;
                best_deficit = deficit;
            }
        }
        filled[best] += groups[gi].size();
        out.rows[best].insert(out.rows[best].end(), groups[gi].begin(), groups[gi].end());
    }
    for (std::size_t k = 0; k < 3; ++k) {
        std::sort(out.rows[k].begin(), out.rows[k].end());
        out.folds[k] = annotations.subset(out.rows[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// KG text form

namespace {

std::string entity_token(EntityId e) { return std::string(to_string(e.kind)) + ":" + std::to_string(e.index); }

EntityId parse_entity(std::string_view token, const std::string& source, std::size_t line_no) {
    const auto colon = token.find(':');
    if (colon == std::string_view::npos) throw ParseError(source, line_no, "entity '" + std::string(token) + "' lacks kind prefix");
    const auto kind = token.substr(0, colon);
    const auto idx = token.substr(colon + 1);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), value);
    if (ec != std::errc{} || ptr != idx.data() + idx.size() || idx.empty()) {
        throw ParseError(source, line_no, "bad entity index in '" + std::string(token) + "'");
    }
    if (kind == "image") return EntityId::image(value);
    if (kind == "finding") return EntityId::finding(value);
    throw ParseError(source, line_no, "unknown entity kind '" + std::string(kind) + "'");
}

}  // namespace

void write_kg(std::ostream& out, const KnowledgeGraph& kg) {
    for (const auto& t : kg.triples()) {
        out << entity_token(t.subject) << '\t' << to_string(t.relation) << '\t' << entity_token(t.object) << '\n';
    }
}

KnowledgeGraph read_kg(std::istream& in, std::size_t images, std::size_t findings, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<Triple> triples;
    while (detail::next_record(in, line, line_no)) {
        const auto parts = detail::split_csv(line, '\t');
        if (parts.size() != 3) throw ParseError(source, line_no, "expected 3 tab-separated fields");
        Triple t;
        t.subject = parse_entity(parts[0], source, line_no);
        try {
            t.relation = parse_relation(parts[1]);
        } catch (const Error& e) {
            throw ParseError(source, line_no, e.what());
        }
        t.object = parse_entity(parts[2], source, line_no);
        triples.push_back(t);
    }
    return KnowledgeGraph(images, findings, triples);
}

}  // namespace radkg
