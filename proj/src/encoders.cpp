#include "radkg/encoders.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "radkg/errors.hpp"
#include "radkg/random.hpp"
#include "text_util.hpp"

namespace radkg {

std::vector<double> encode_finding(std::size_t j, std::size_t n) {
    if (j >= n) throw BoundsError("finding index " + std::to_string(j) + " out of range for n=" + std::to_string(n));
    std::vector<double> code(n, 0.0);
    code[j] = 1.0;
    return code;
}

FeatureTable::FeatureTable(std::size_t dim, std::vector<std::string> ids, std::vector<double> values)
    : dim_(dim), ids_(std::move(ids)), values_(std::move(values)) {
    if (values_.size() != ids_.size() * dim_) throw ShapeError("feature table value count does not match rows x dim");
    for (double v : values_) {
        if (!std::isfinite(v)) throw NumericalError("feature table contains a non-finite value");
    }
}

std::size_t FeatureTable::find(const std::string& id) const {
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        if (ids_[r] == id) return r;
    }
    return ids_.size();
}

FeatureTable FeatureTable::aligned_to(const std::vector<std::string>& ids) const {
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) index.emplace(ids_[r], r);

    std::vector<double> values;
    values.reserve(ids.size() * dim_);
    std::string missing;
    std::size_t missing_count = 0;
    for (const auto& id : ids) {
        const auto it = index.find(id);
        if (it == index.end()) {
            if (missing_count++ < 20) missing += (missing.empty() ? "" : ", ") + id;
            continue;
        }
        const auto c = code(it->second);
        values.insert(values.end(), c.begin(), c.end());
    }
    if (missing_count > 0) {
        if (missing_count > 20) missing += ", ...";
        throw ParseError({}, 0, std::to_string(missing_count) + " image(s) lack feature codes: " + missing);
    }
    return FeatureTable(dim_, ids, std::move(values));
}

FeatureTable read_features(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    if (!detail::next_record(in, line, line_no)) throw ParseError(source, 0, "missing header row");
    const auto header = detail::split_csv(line);
    if (header.empty() || header.front() != "id") throw ParseError(source, line_no, "header must start with 'id'");
    const std::size_t dim = header.size() - 1;
    if (dim == 0) throw ParseError(source, line_no, "header declares no feature columns");

    std::vector<std::string> ids;
    std::vector<double> values;
    std::unordered_set<std::string> seen;
    while (detail::next_record(in, line, line_no)) {
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size()) {
            throw ParseError(source, line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                                  std::to_string(cells.size()));
        }
        std::string id(cells[0]);
        if (id.empty()) throw ParseError(source, line_no, "empty id");
        if (!seen.insert(id).second) throw ParseError(source, line_no, "duplicate id '" + id + "'");
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const auto v = detail::parse_double(cells[c]);
            if (!v) {
                throw ParseError(source, line_no, "column " + std::to_string(c) + ": non-numeric cell '" +
                                                      std::string(cells[c]) + "'");
            }
            if (!std::isfinite(*v)) {
                throw ParseError(source, line_no, "column " + std::to_string(c) + ": non-finite value '" +
                                                      std::string(cells[c]) + "'");
            }
            values.push_back(*v);
        }
        ids.push_back(std::move(id));
    }
    return FeatureTable(dim, std::move(ids), std::move(values));
}

FeatureTable load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open feature file");
    return read_features(in, path);
}

void write_features(std::ostream& out, const FeatureTable& table) {
    out << "id";
    for (std::size_t k = 0; k < table.dim(); ++k) out << ",f" << k;
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        out << table.ids()[r];
        for (double v : table.code(r)) out << ',' << detail::format_double(v);
        out << '\n';
    }
}

void SyntheticSpec::validate() const {
    if (findings == 0 || feature_dim == 0) throw Error("synthetic spec needs at least one finding and one feature");
    if (!(prototype_scale >= 0.0) || !(noise_scale >= 0.0)) throw Error("synthetic scales must be non-negative");
    if (!(sparsity > 0.0 && sparsity < 1.0)) throw Error("synthetic sparsity must lie in (0, 1)");
    if (!(uncertain_fraction >= 0.0 && uncertain_fraction < 1.0)) {
        throw Error("synthetic uncertain fraction must lie in [0, 1)");
    }
}

std::pair<FeatureTable, AnnotationTable> synth_dataset(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.findings;
    const std::size_t dim = spec.feature_dim;

    // Independent streams so changing one knob does not reshuffle the others.
    Rng proto_rng(mix_seed(spec.seed, 0));
    Rng label_rng(mix_seed(spec.seed, 1));
    Rng noise_rng(mix_seed(spec.seed, 2));
    Rng uncertain_rng(mix_seed(spec.seed, 3));

    std::vector<double> prototypes(n * dim);
    for (auto& p : prototypes) p = spec.prototype_scale * proto_rng.normal();

    AnnotationTable table;
    for (std::size_t j = 0; j < n; ++j) table.finding_names.push_back("F" + std::to_string(j));

    std::vector<std::string> ids;
    std::vector<double> values(spec.images * dim, 0.0);
    for (std::size_t i = 0; i < spec.images; ++i) {
        std::vector<LabelValue> row(n, LabelValue::Negative);
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (label_rng.uniform() < spec.sparsity) {
                row[j] = LabelValue::Positive;
                any = true;
            }
        }
        if (!any) row[label_rng.below(n)] = LabelValue::Positive;

        double* code = values.data() + i * dim;
        for (std::size_t j = 0; j < n; ++j) {
            if (row[j] != LabelValue::Positive) continue;
            for (std::size_t k = 0; k < dim; ++k) code[k] += prototypes[j * dim + k];
        }
        for (std::size_t k = 0; k < dim; ++k) {
            const double z = noise_rng.normal();
            if (spec.noise_scale > 0.0) code[k] += spec.noise_scale * z;
        }
        // Downgrade after the code is fixed: the image still carries the finding's signal.
        for (std::size_t j = 0; j < n; ++j) {
            if (row[j] == LabelValue::Positive && uncertain_rng.uniform() < spec.uncertain_fraction) {
                row[j] = LabelValue::Uncertain;
            }
        }
        ids.push_back("img" + std::to_string(i));
        table.image_ids.push_back(ids.back());
        table.labels.push_back(std::move(row));
    }
    return {FeatureTable(dim, std::move(ids), std::move(values)), std::move(table)};
}

}  // namespace radkg
