#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "radkg/scoring.hpp"

namespace radkg {

/// Checkpoint layout, all integers little-endian:
///
///   "RKG1"                         magic
///   u32 version                    kCheckpointVersion
///   u32 scorer                     0 = DistMult, 1 = ConvE
///   u64 x 7                        D, d, n, C, |R|, reshape rows, reshape cols
///   5 x (u64 count, count x f64)   subject_proj, finding_emb, relation_emb, conv_kernels, conv_proj
///   u64 length, bytes              UTF-8 metadata, one `key=value` per line
///
/// Nothing may follow the metadata block.
inline constexpr char kCheckpointMagic[4] = {'R', 'K', 'G', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
    EmbeddingModel model;
    Metadata metadata;

    /// Value of `key`, or empty.
    std::string get(const std::string& key) const;
};

void write_checkpoint(std::ostream& out, const EmbeddingModel& model, const Metadata& metadata = {});
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const EmbeddingModel& model, const Metadata& metadata = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace radkg
