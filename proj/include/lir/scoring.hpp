#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <thread>
#include <vector>

#include "lir/core.hpp"

namespace lir {

enum class Similarity : std::uint8_t { dot = 0, cosine = 1 };

inline const char* similarity_name(Similarity s) { return s == Similarity::dot ? "dot" : "cosine"; }

inline Similarity parse_similarity(std::string_view s) {
    if (s == "dot") return Similarity::dot;
    if (s == "cosine" || s == "cos") return Similarity::cosine;
    throw Error("unknown similarity: " + std::string(s));
}

struct ScoredDoc {
    DocId doc;
    double score = 0.0;
};

/// Ranking order used everywhere: score descending, ties by ascending DocId
/// byte order. This keeps every ranking deterministic.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
}

/// Divides each row by its Euclidean norm. Rows with norm <= 1e-12 are
/// rejected, naming the row.
inline TokenMatrix normalize_rows(const TokenMatrix& x) {
    x.check("normalize_rows input");
    TokenMatrix out = x;
    for (std::size_t r = 0; r < x.rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < x.dim; ++c) sq += x.at(r, c) * x.at(r, c);
        double norm = std::sqrt(sq);
        if (norm <= 1e-12)
            throw Error("normalize_rows: zero-norm row at index " + std::to_string(r));
        for (std::size_t c = 0; c < x.dim; ++c) out.at(r, c) = x.at(r, c) / norm;
    }
    return out;
}

namespace detail {

// Dot-product MaxSim over raw rows: sum over query tokens of the max dot
// against all document tokens. 64-bit accumulation throughout.
inline double maxsim_dot(const TokenMatrix& q, const TokenMatrix& d) {
    double total = 0.0;
    for (std::size_t i = 0; i < q.rows; ++i) {
        const double* qi = q.row(i);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.rows; ++j) {
            const double* dj = d.row(j);
            double dot = 0.0;
            for (std::size_t c = 0; c < q.dim; ++c) dot += qi[c] * dj[c];
            if (dot > best) best = dot;
        }
        total += best;
    }
    return total;
}

}  // namespace detail

/// Late-interaction score: sum over query tokens of the maximum similarity
/// against all document tokens. For cosine, rows are normalized internally,
/// so the score is bounded by the query token count.
inline double maxsim(const TokenMatrix& q, const TokenMatrix& d, Similarity sim) {
    q.check("maxsim query");
    d.check("maxsim document");
    if (q.dim != d.dim)
        throw Error("maxsim: dimension mismatch (" + std::to_string(q.dim) + " vs " +
                    std::to_string(d.dim) + ")");
    if (sim == Similarity::cosine) return detail::maxsim_dot(normalize_rows(q), normalize_rows(d));
    return detail::maxsim_dot(q, d);
}

/// Brute-force top-k retrieval for a batch of queries. Results are exact and
/// deterministic: score descending, ties by ascending DocId byte order.
/// Parallelism (if threads > 1) splits across queries and never changes the
/// output.
inline std::map<QueryId, std::vector<ScoredDoc>> maxsim_batch(
    const std::map<QueryId, TokenMatrix>& queries, const std::map<DocId, TokenMatrix>& docs,
    Similarity sim, std::size_t k, unsigned threads = 1) {
    if (k < 1) throw Error("maxsim_batch: k must be >= 1");
    if (docs.empty()) throw Error("maxsim_batch: empty document collection");

    const std::size_t dim = docs.begin()->second.dim;

    // Normalize once up front for cosine; scoring below is then plain dot.
    std::vector<std::pair<const DocId*, TokenMatrix>> prepared;
    prepared.reserve(docs.size());
    for (const auto& [id, mat] : docs) {
        if (mat.dim != dim) throw Error("maxsim_batch: document dimension mismatch for id " + id);
        prepared.emplace_back(&id, sim == Similarity::cosine ? normalize_rows(mat) : mat);
    }

    std::vector<const QueryId*> qids;
    std::vector<TokenMatrix> qmats;
    qids.reserve(queries.size());
    for (const auto& [qid, mat] : queries) {
        if (mat.dim != dim) throw Error("maxsim_batch: query dimension mismatch for id " + qid);
        qids.push_back(&qid);
        qmats.push_back(sim == Similarity::cosine ? normalize_rows(mat) : mat);
    }

    std::vector<std::vector<ScoredDoc>> results(qids.size());
    auto score_query = [&](std::size_t qi) {
        std::vector<ScoredDoc> scored;
        scored.reserve(prepared.size());
        for (const auto& [did, dmat] : prepared)
            scored.push_back(ScoredDoc{*did, detail::maxsim_dot(qmats[qi], dmat)});
        std::size_t keep = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), ranks_before);
        scored.resize(keep);
        results[qi] = std::move(scored);
    };

    if (threads <= 1 || qids.size() <= 1) {
        for (std::size_t i = 0; i < qids.size(); ++i) score_query(i);
    } else {
        unsigned n_workers = std::min<unsigned>(threads, qids.size());
        std::vector<std::thread> workers;
        workers.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t i = w; i < qids.size(); i += n_workers) score_query(i);
            });
        }
        for (auto& t : workers) t.join();
    }

    std::map<QueryId, std::vector<ScoredDoc>> out;
    for (std::size_t i = 0; i < qids.size(); ++i) out.emplace(*qids[i], std::move(results[i]));
    return out;
}

}  // namespace lir
