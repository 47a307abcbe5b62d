#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "radkg/kg_store.hpp"

namespace radkg {

/// One-hot code of finding `j` among `n`. Throws BoundsError when j >= n.
std::vector<double> encode_finding(std::size_t j, std::size_t n);

/// Per-image feature codes, row-major m x D. Codes are consumed as-is, never rescaled.
class FeatureTable {
public:
    FeatureTable() = default;
    FeatureTable(std::size_t dim, std::vector<std::string> ids, std::vector<double> values);

    std::size_t rows() const { return ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<double>& values() const { return values_; }

    std::span<const double> code(std::size_t row) const {
        return {values_.data() + row * dim_, dim_};
    }

    /// Row of `id`, or rows() when absent.
    std::size_t find(const std::string& id) const;

    /// Rows reordered to follow `ids`. Throws ParseError listing every missing id.
    FeatureTable aligned_to(const std::vector<std::string>& ids) const;

    bool operator==(const FeatureTable&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<double> values_;
};

FeatureTable read_features(std::istream& in, const std::string& source = {});
FeatureTable load_features(const std::string& path);
/// Shortest round-trip decimal form; read_features(write_features(t)) == t bit for bit.
void write_features(std::ostream& out, const FeatureTable& table);

struct SyntheticSpec {
    std::size_t images = 500;
    std::size_t findings = 14;
    std::size_t feature_dim = 64;
    double prototype_scale = 1.0;
    double noise_scale = 0.5;
    double sparsity = 0.2;          // per-cell positive probability
    double uncertain_fraction = 0.0;  // share of positive cells downgraded to Uncertain
    std::uint64_t seed = 1;

    void validate() const;
};

/// Planted-structure dataset: code = sum of the prototypes of the image's positive
/// findings + N(0, noise_scale^2) noise. Every image has at least one positive finding.
/// Image ids are `img<row>`, finding names `F<j>`.
std::pair<FeatureTable, AnnotationTable> synth_dataset(const SyntheticSpec& spec);

}  // namespace radkg
