#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace radkg {

enum class EntityKind : std::uint8_t { Image = 0, Finding = 1 };

struct EntityId {
    EntityKind kind = EntityKind::Image;
    std::size_t index = 0;

    static constexpr EntityId image(std::size_t i) { return {EntityKind::Image, i}; }
    static constexpr EntityId finding(std::size_t j) { return {EntityKind::Finding, j}; }

    auto operator<=>(const EntityId&) const = default;
};

/// Relation ordinals double as rows of the relation embedding table.
enum class RelationKind : std::uint8_t { HasFinding = 0, ProbablyHasFinding = 1, CoOccurs = 2 };

inline constexpr std::size_t kRelationKindCount = 3;
inline constexpr std::array<RelationKind, kRelationKindCount> kAllRelations = {
    RelationKind::HasFinding, RelationKind::ProbablyHasFinding, RelationKind::CoOccurs};

std::string_view to_string(RelationKind r);
RelationKind parse_relation(std::string_view token);
std::string_view to_string(EntityKind k);

struct Triple {
    EntityId subject;
    RelationKind relation = RelationKind::HasFinding;
    EntityId object;

    auto operator<=>(const Triple&) const = default;
};

enum class LabelValue : std::uint8_t { Positive, Negative, Uncertain, Unmentioned };

/// Accepts exactly `1`, `1.0`, `0`, `0.0`, `-1`, `-1.0` and the empty token.
std::optional<LabelValue> parse_label(std::string_view token);
std::string_view label_token(LabelValue v);

enum class UncertainPolicy : std::uint8_t { AsPositive, AsNegative, AsSeparateRelation };

std::string_view to_string(UncertainPolicy p);
UncertainPolicy parse_policy(std::string_view token);

/// Binary "has finding" value of a cell under a policy. Unmentioned counts as negative;
/// under AsSeparateRelation an uncertain cell is not a HasFinding positive.
bool is_positive(LabelValue v, UncertainPolicy policy);

/// Per-image label grid. `groups` is empty or has one key per row.
struct AnnotationTable {
    std::vector<std::string> finding_names;
    std::vector<std::string> image_ids;
    std::vector<std::vector<LabelValue>> labels;
    std::vector<std::string> groups;

    std::size_t rows() const { return image_ids.size(); }
    std::size_t findings() const { return finding_names.size(); }

    /// Throws ParseError (line = row + 2, i.e. the file line) on ragged rows, duplicate ids
    /// or a group column of the wrong length.
    void validate() const;

    /// Rows selected by index, in the given order.
    AnnotationTable subset(const std::vector<std::size_t>& rows) const;
};

AnnotationTable read_annotations(std::istream& in, const std::string& source = {});
AnnotationTable load_annotations(const std::string& path);
void write_annotations(std::ostream& out, const AnnotationTable& table);

/// Immutable typed triple set over m images and n findings.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Validates endpoint kinds, bounds and finding self-loops; duplicates collapse.
    KnowledgeGraph(std::size_t images, std::size_t findings, const std::vector<Triple>& triples);

    std::size_t images() const { return images_; }
    std::size_t findings() const { return findings_; }
    const std::set<Triple>& triples() const { return triples_; }
    std::size_t size() const { return triples_.size(); }

    bool contains(const Triple& t) const { return triples_.contains(t); }
    std::size_t count(RelationKind r) const;

    /// Object indicator over all findings for (subject, relation, ?).
    std::vector<double> targets(EntityId subject, RelationKind relation) const;

    /// Copy with extra triples appended.
    KnowledgeGraph with(const std::vector<Triple>& extra) const;

private:
    void check(const Triple& t) const;

    std::size_t images_ = 0;
    std::size_t findings_ = 0;
    std::set<Triple> triples_;
};

KnowledgeGraph build_radkg(const AnnotationTable& annotations, UncertainPolicy policy);

/// Findings not linked to `image` under `relation` (closed world).
std::set<EntityId> negatives_for(const KnowledgeGraph& kg, EntityId image, RelationKind relation);

/// Directional conditional probabilities P(F_i | F_j). Entries of a column j whose finding
/// never occurs are undefined.
class CooccurrenceMatrix {
public:
    CooccurrenceMatrix() = default;
    explicit CooccurrenceMatrix(std::size_t n) : n_(n), values_(n * n) {}

    std::size_t size() const { return n_; }
    const std::optional<double>& at(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
    std::optional<double>& at(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }

private:
    std::size_t n_ = 0;
    std::vector<std::optional<double>> values_;
};

CooccurrenceMatrix cooccurrence_matrix(const AnnotationTable& annotations, UncertainPolicy policy);

inline constexpr double kDefaultCooccurrenceThreshold = 0.2;

/// Adds (F_i, CoOccurs, F_j) for every defined off-diagonal entry strictly above `threshold`.
KnowledgeGraph add_cooccurrence(const KnowledgeGraph& kg, const CooccurrenceMatrix& matrix,
                                double threshold = kDefaultCooccurrenceThreshold);

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct Split {
    std::array<AnnotationTable, 3> folds;       // train, val, test
    std::array<std::vector<std::size_t>, 3> rows;  // source row indices, ascending
    std::vector<std::string> warnings;

    const AnnotationTable& train() const { return folds[0]; }
    const AnnotationTable& val() const { return folds[1]; }
    const AnnotationTable& test() const { return folds[2]; }
};

/// Group-atomic deterministic partition. Rows without a group key are their own group.
Split split(const AnnotationTable& annotations, const SplitRatios& ratios, std::uint64_t seed);

void write_kg(std::ostream& out, const KnowledgeGraph& kg);
/// Reads the line format written by write_kg. `#` lines are skipped. m and n are supplied
/// by the caller because the text form does not carry isolated entities.
KnowledgeGraph read_kg(std::istream& in, std::size_t images, std::size_t findings,
                       const std::string& source = {});

}  // namespace radkg
