#include "radkg/checkpoint.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "radkg/errors.hpp"

namespace radkg {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b;
    for (std::size_t i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(b.data(), b.size());
}

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b;
    for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t count, const char* what) {
        in_.read(dst, static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in_.gcount()) != count) {
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
        }
    }

    std::uint64_t u64(const char* what) {
        std::array<unsigned char, 8> b;
        bytes(reinterpret_cast<char*>(b.data()), b.size(), what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    std::uint32_t u32(const char* what) {
        std::array<unsigned char, 4> b;
        bytes(reinterpret_cast<char*>(b.data()), b.size(), what);
        std::uint32_t v = 0;
        for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
};

}  // namespace

std::string Checkpoint::get(const std::string& key) const {
    for (const auto& [k, v] : metadata) {
        if (k == key) return v;
    }
    return {};
}

void write_checkpoint(std::ostream& out, const EmbeddingModel& model, const Metadata& metadata) {
    out.write(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(model.kind));
    const auto& d = model.dims;
    for (std::size_t v : {d.feature_dim, d.embed_dim, d.findings, d.channels, d.relations, d.reshape_rows,
                          d.reshape_cols}) {
        put_u64(out, v);
    }
    for (const auto* block : model.blocks()) {
        put_u64(out, block->size());
        for (double v : block->values()) put_f64(out, v);
    }
    std::string text;
    for (const auto& [k, v] : metadata) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw CheckpointError("metadata key '" + k + "' or its value contains a reserved character");
        }
        text += k + "=" + v + "\n";
    }
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw CheckpointError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
    Reader r(in);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("not a checkpoint (bad magic)");
    const auto version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto kind_raw = r.u32("scorer kind");
    if (kind_raw > 1) throw CheckpointError("unknown scorer kind " + std::to_string(kind_raw));
    const auto kind = static_cast<ScorerKind>(kind_raw);

    ModelDims dims;
    for (std::size_t* field : {&dims.feature_dim, &dims.embed_dim, &dims.findings, &dims.channels,
                               &dims.relations, &dims.reshape_rows, &dims.reshape_cols}) {
        *field = static_cast<std::size_t>(r.u64("dimensions"));
    }
    // Guard against absurd headers before allocating.
    constexpr std::uint64_t kMaxBlock = std::uint64_t{1} << 32;
    Checkpoint cp;
    try {
        if (dims.feature_dim > kMaxBlock || dims.embed_dim > kMaxBlock || dims.findings > kMaxBlock ||
            dims.channels > kMaxBlock) {
            throw ShapeError("dimension too large");
        }
        cp.model = EmbeddingModel::zeros(kind, dims);
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("invalid checkpoint dimensions: ") + e.what());
    }
    auto blocks = cp.model.blocks();
    for (std::size_t b = 0; b < kParameterBlocks; ++b) {
        const auto count = r.u64("block length");
        if (count != blocks[b]->size()) {
            throw CheckpointError("block " + std::string(kBlockNames[b]) + " holds " + std::to_string(count) +
                                  " values, dimensions require " + std::to_string(blocks[b]->size()));
        }
        for (auto& v : blocks[b]->values()) {
            v = std::bit_cast<double>(r.u64(kBlockNames[b].data()));
            if (!std::isfinite(v)) throw CheckpointError("non-finite parameter in " + std::string(kBlockNames[b]));
        }
    }
    const auto length = r.u64("metadata length");
    if (length > kMaxBlock) throw CheckpointError("metadata block too large");
    std::string text(length, '\0');
    r.bytes(text.data(), text.size(), "metadata");
    if (!r.at_end()) throw CheckpointError("trailing bytes after metadata block");

    std::size_t start = 0;
    while (start < text.size()) {
        auto stop = text.find('\n', start);
        if (stop == std::string::npos) throw CheckpointError("metadata line lacks terminator");
        const auto line = text.substr(start, stop - start);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CheckpointError("metadata line without '='");
        cp.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        start = stop + 1;
    }
    return cp;
}

void save_checkpoint(const std::string& path, const EmbeddingModel& model, const Metadata& metadata) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
    write_checkpoint(out, model, metadata);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    return read_checkpoint(in);
}

}  // namespace radkg
