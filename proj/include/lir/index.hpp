#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lir/core.hpp"
#include "lir/scoring.hpp"

namespace lir {

// ---------------------------------------------------------------------------
// Little-endian binary IO
// ---------------------------------------------------------------------------

namespace io {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

template <typename T>
inline void put_le(std::string& out, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

inline void put_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_le<std::uint32_t>(out, bits);
}

/// Byte-stream reader with truncation checks.
struct Reader {
    std::string_view data;
    std::size_t pos = 0;
    std::string context;

    explicit Reader(std::string_view d, std::string ctx = "file")
        : data(d), context(std::move(ctx)) {}

    void need(std::size_t n) const {
        if (pos + n > data.size()) throw Error(context + ": truncated file");
    }

    template <typename T>
    T get_le() {
        static_assert(std::is_integral_v<T>);
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += sizeof(T);
        return static_cast<T>(v);
    }

    float get_f32_le() {
        std::uint32_t bits = get_le<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s(data.substr(pos, n));
        pos += n;
        return s;
    }

    bool at_end() const { return pos == data.size(); }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::string& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed: " + path);
}

// Token values are serialized in the storage dtype, little-endian, row-major.
inline void put_values(std::string& out, const TokenMatrix& m, Dtype dtype) {
    if (dtype == Dtype::f32) {
        for (double v : m.values) put_f32_le(out, static_cast<float>(v));
    } else {
        for (double v : m.values) put_le<std::uint16_t>(out, fp16_encode(v));
    }
}

inline TokenMatrix get_values(Reader& r, std::size_t rows, std::size_t dim, Dtype dtype) {
    TokenMatrix m(rows, dim);
    if (dtype == Dtype::f32) {
        for (auto& v : m.values) v = static_cast<double>(r.get_f32_le());
    } else {
        for (auto& v : m.values) v = fp16_decode(r.get_le<std::uint16_t>());
    }
    return m;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Embedding files ("MVE1")
// ---------------------------------------------------------------------------
//
// magic "MVE1" | u8 dtype | u16 LE dim | u64 LE item count | per record:
// u32 LE id length, id bytes, u32 LE row count, rows*dim values in dtype.
// Records may appear in any order.

struct EmbeddingFile {
    Dtype dtype = Dtype::f32;
    std::uint16_t dim = 0;
    std::vector<std::pair<std::string, TokenMatrix>> items;
};

inline void write_embeddings(const std::string& path, const EmbeddingFile& file) {
    if (file.dim == 0) throw Error("write_embeddings: dim must be >= 1");
    std::string out;
    out.append("MVE1");
    io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(file.dtype));
    io::put_le<std::uint16_t>(out, file.dim);
    io::put_le<std::uint64_t>(out, file.items.size());
    for (const auto& [id, mat] : file.items) {
        check_id(id);
        mat.check(("embedding " + id).c_str());
        if (mat.dim != file.dim) throw Error("write_embeddings: dim mismatch for id " + id);
        io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        io::put_bytes(out, id.data(), id.size());
        io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mat.rows));
        io::put_values(out, mat, file.dtype);
    }
    io::write_file(path, out);
}

inline EmbeddingFile read_embeddings(const std::string& path) {
    std::string data = io::read_file(path);
    io::Reader r(data, path);
    if (data.size() < 4 || r.get_bytes(4) != "MVE1") throw Error(path + ": bad magic");
    EmbeddingFile file;
    auto dtype_code = r.get_le<std::uint8_t>();
    if (dtype_code > 1) throw Error(path + ": invalid dtype code");
    file.dtype = static_cast<Dtype>(dtype_code);
    file.dim = r.get_le<std::uint16_t>();
    if (file.dim == 0) throw Error(path + ": header dim must be >= 1");
    auto count = r.get_le<std::uint64_t>();
    file.items.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto id_len = r.get_le<std::uint32_t>();
        std::string id = r.get_bytes(id_len);
        check_id(id);
        auto rows = r.get_le<std::uint32_t>();
        if (rows == 0) throw Error(path + ": zero-row record for id " + id);
        file.items.emplace_back(std::move(id), io::get_values(r, rows, file.dim, file.dtype));
    }
    if (!r.at_end()) throw Error(path + ": trailing bytes");
    return file;
}

// ---------------------------------------------------------------------------
// Multi-vector index
// ---------------------------------------------------------------------------

/// Persistent multi-vector store. Entries hold values exactly as the storage
/// dtype represents them (fp16 entries are the decode of their encoding), so
/// scoring and persistence always agree.
struct MultiVectorIndex {
    std::uint16_t dim = 0;
    Dtype dtype = Dtype::f32;
    Similarity sim = Similarity::cosine;
    std::map<DocId, TokenMatrix> entries;
    std::map<std::string, std::string> metadata;
};

constexpr std::uint32_t kIndexVersion = 1;

/// Builds an index from (id, matrix) pairs. For cosine similarity rows are
/// normalized before dtype conversion, so stored rows are unit-norm up to
/// storage precision.
inline MultiVectorIndex build_index(const std::vector<std::pair<DocId, TokenMatrix>>& embeddings,
                                    std::uint16_t dim, Dtype dtype, Similarity sim,
                                    std::map<std::string, std::string> metadata = {}) {
    if (embeddings.empty()) throw Error("build_index: empty embedding stream");
    if (dim == 0) throw Error("build_index: dim must be >= 1");
    MultiVectorIndex index;
    index.dim = dim;
    index.dtype = dtype;
    index.sim = sim;
    index.metadata = std::move(metadata);
    for (const auto& [id, mat] : embeddings) {
        check_id(id, "doc id");
        mat.check(("embedding " + id).c_str());
        if (mat.dim != dim) throw Error("build_index: dim mismatch for id " + id);
        TokenMatrix stored = sim == Similarity::cosine ? normalize_rows(mat) : mat;
        if (dtype == Dtype::f16) {
            for (auto& v : stored.values) v = fp16_round_trip(v);
        } else {
            for (auto& v : stored.values) v = static_cast<double>(static_cast<float>(v));
        }
        auto [it, inserted] = index.entries.emplace(id, std::move(stored));
        (void)it;
        if (!inserted) throw Error("build_index: duplicate doc id " + id);
    }
    return index;
}

namespace detail {

// Metadata is serialized as compact JSON with sorted keys, which keeps
// persistence byte-deterministic.
inline std::string metadata_json(const std::map<std::string, std::string>& metadata) {
    return nlohmann::json(metadata).dump();
}

}  // namespace detail

inline void save_index(const MultiVectorIndex& index, const std::string& path) {
    if (index.dim == 0) throw Error("save_index: dim must be >= 1");
    std::string out;
    out.append("MVIX");
    io::put_le<std::uint32_t>(out, kIndexVersion);
    io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(index.dtype));
    io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(index.sim));
    io::put_le<std::uint16_t>(out, index.dim);
    io::put_le<std::uint64_t>(out, index.entries.size());
    std::string meta = detail::metadata_json(index.metadata);
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
    io::put_bytes(out, meta.data(), meta.size());
    for (const auto& [id, mat] : index.entries) {  // std::map: ascending byte order
        io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        io::put_bytes(out, id.data(), id.size());
        io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mat.rows));
        io::put_values(out, mat, index.dtype);
    }
    io::write_file(path, out);
}

inline MultiVectorIndex load_index(const std::string& path) {
    std::string data = io::read_file(path);
    io::Reader r(data, path);
    if (data.size() < 4 || r.get_bytes(4) != "MVIX") throw Error(path + ": bad magic");
    auto version = r.get_le<std::uint32_t>();
    if (version != kIndexVersion)
        throw Error(path + ": unsupported version " + std::to_string(version));
    MultiVectorIndex index;
    auto dtype_code = r.get_le<std::uint8_t>();
    if (dtype_code > 1) throw Error(path + ": invalid dtype code");
    index.dtype = static_cast<Dtype>(dtype_code);
    auto sim_code = r.get_le<std::uint8_t>();
    if (sim_code > 1) throw Error(path + ": invalid similarity code");
    index.sim = static_cast<Similarity>(sim_code);
    index.dim = r.get_le<std::uint16_t>();
    if (index.dim == 0) throw Error(path + ": header dim must be >= 1");
    auto count = r.get_le<std::uint64_t>();
    auto meta_len = r.get_le<std::uint32_t>();
    std::string meta = r.get_bytes(meta_len);
    try {
        auto parsed = nlohmann::json::parse(meta);
        index.metadata = parsed.get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception&) {
        throw Error(path + ": invalid metadata JSON");
    }
    std::string prev_id;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto id_len = r.get_le<std::uint32_t>();
        std::string id = r.get_bytes(id_len);
        check_id(id, "doc id");
        if (i > 0 && !(prev_id < id)) throw Error(path + ": entries not sorted by doc id");
        auto rows = r.get_le<std::uint32_t>();
        if (rows == 0) throw Error(path + ": zero-row record for id " + id);
        TokenMatrix mat = io::get_values(r, rows, index.dim, index.dtype);
        mat.check(("entry " + id).c_str());
        if (index.sim == Similarity::cosine) {
            for (std::size_t row = 0; row < mat.rows; ++row) {
                double sq = 0.0;
                for (std::size_t c = 0; c < mat.dim; ++c) sq += mat.at(row, c) * mat.at(row, c);
                if (std::fabs(std::sqrt(sq) - 1.0) > 0x1p-10)
                    throw Error(path + ": non-unit row in cosine index, id " + id);
            }
        }
        prev_id = id;
        index.entries.emplace(std::move(id), std::move(mat));
    }
    if (!r.at_end()) throw Error(path + ": trailing bytes");
    return index;
}

/// Exact search: identical to maxsim_batch over the decoded entries.
inline std::vector<ScoredDoc> search(const MultiVectorIndex& index, const TokenMatrix& query,
                                     std::size_t k, unsigned threads = 1) {
    if (query.dim != index.dim)
        throw Error("search: query dim " + std::to_string(query.dim) + " != index dim " +
                    std::to_string(index.dim));
    std::map<QueryId, TokenMatrix> q{{"q", query}};
    auto result = maxsim_batch(q, index.entries, index.sim, k, threads);
    return result.at("q");
}

struct CandidateList {
    QueryId query;
    std::vector<DocId> docs;
};

/// Reranks an externally supplied candidate list; equals search restricted to
/// the candidate set.
inline std::vector<ScoredDoc> rerank(const MultiVectorIndex& index, const TokenMatrix& query,
                                     const CandidateList& candidates) {
    std::map<DocId, TokenMatrix> restricted;
    for (const auto& id : candidates.docs) {
        auto it = index.entries.find(id);
        if (it == index.entries.end()) throw Error("rerank: unknown doc id " + id);
        if (!restricted.emplace(id, it->second).second)
            throw Error("rerank: duplicate candidate id " + id);
    }
    if (restricted.empty()) throw Error("rerank: empty candidate list");
    if (query.dim != index.dim)
        throw Error("rerank: query dim " + std::to_string(query.dim) + " != index dim " +
                    std::to_string(index.dim));
    std::map<QueryId, TokenMatrix> q{{"q", query}};
    auto result = maxsim_batch(q, restricted, index.sim, restricted.size());
    return result.at("q");
}

}  // namespace lir
