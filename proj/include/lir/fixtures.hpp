#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lir/core.hpp"
#include "lir/eval.hpp"
#include "lir/mining.hpp"
#include "lir/scoring.hpp"

namespace lir {

// ---------------------------------------------------------------------------
// Deterministic synthetic corpora
// ---------------------------------------------------------------------------
//
// Every query gets a latent unit direction. Relevant documents carry one
// token drawn near that direction (exactly equal at noise_scale 0), padded
// with random filler tokens; irrelevant documents are all filler. Teacher
// scores are the cosine MaxSim of the generated embeddings, and texts share
// query-specific terms with the relevant documents so BM25 mining has
// lexical signal. Everything derives from SplitMix64 streams keyed by
// (seed, item index), so output is identical across runs and platforms.

struct SyntheticSpec {
    std::size_t n_queries = 8;
    std::size_t n_docs = 64;
    std::size_t tokens_per_doc = 6;
    std::size_t query_tokens = 4;
    std::size_t dim = 16;
    std::size_t relevant_per_query = 1;
    double noise_scale = 0.0;
    Seed seed = 0;

    void check() const {
        if (n_queries == 0 || n_docs == 0 || tokens_per_doc == 0 || query_tokens == 0 || dim == 0)
            throw Error("synthetic spec: counts must be positive");
        if (relevant_per_query > n_docs)
            throw Error("synthetic spec: relevant_per_query must be <= n_docs");
        if (!(noise_scale >= 0.0)) throw Error("synthetic spec: noise_scale must be >= 0");
    }
};

struct SyntheticCorpus {
    std::vector<std::pair<DocId, TokenMatrix>> doc_embeddings;      // ascending id order
    std::vector<std::pair<QueryId, TokenMatrix>> query_embeddings;  // ascending id order
    TextCorpus texts;
    Qrels qrels;
    TeacherScores teacher;
};

namespace detail {

inline std::string padded_id(char prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%05zu", prefix, i);
    return std::string(buf);
}

inline void random_unit_row(SplitMix64& rng, double* row, std::size_t dim) {
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            row[c] = rng.next_gaussian();
            norm_sq += row[c] * row[c];
        }
    } while (norm_sq < 1e-12);
    double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t c = 0; c < dim; ++c) row[c] *= inv;
}

// Unit vector at controlled distance from `latent`: latent + m*g with a
// random unit direction g and m <= noise_scale, then renormalized. At
// noise_scale 0 this is the latent direction itself.
inline void perturbed_row(SplitMix64& rng, const std::vector<double>& latent, double noise_scale,
                          double* row, std::size_t dim) {
    if (noise_scale == 0.0) {
        for (std::size_t c = 0; c < dim; ++c) row[c] = latent[c];
        return;
    }
    std::vector<double> g(dim);
    random_unit_row(rng, g.data(), dim);
    double m = noise_scale * rng.next_double();
    double norm_sq = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
        row[c] = latent[c] + m * g[c];
        norm_sq += row[c] * row[c];
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t c = 0; c < dim; ++c) row[c] *= inv;
}

}  // namespace detail

inline SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
    spec.check();
    SyntheticCorpus out;

    // Latent directions and query embeddings/texts.
    std::vector<std::vector<double>> latents(spec.n_queries, std::vector<double>(spec.dim));
    for (std::size_t i = 0; i < spec.n_queries; ++i) {
        SplitMix64 rng(derive_seed(spec.seed, 1, i));
        detail::random_unit_row(rng, latents[i].data(), spec.dim);
        TokenMatrix q(spec.query_tokens, spec.dim);
        for (std::size_t t = 0; t < spec.query_tokens; ++t)
            detail::perturbed_row(rng, latents[i], spec.noise_scale, q.row(t), spec.dim);
        QueryId qid = detail::padded_id('q', i);
        out.query_embeddings.emplace_back(qid, std::move(q));
        out.texts.queries.emplace(qid, "q" + std::to_string(i) + "x q" + std::to_string(i) + "y");
    }

    // Documents: index j is relevant to query (j mod n_queries) while
    // j < n_queries * relevant_per_query.
    const std::size_t n_relevant =
        std::min(spec.n_docs, spec.n_queries * spec.relevant_per_query);
    const std::size_t vocab = std::max<std::size_t>(16, spec.n_docs);
    for (std::size_t j = 0; j < spec.n_docs; ++j) {
        SplitMix64 rng(derive_seed(spec.seed, 2, j));
        TokenMatrix d(spec.tokens_per_doc, spec.dim);
        std::string text;
        bool relevant = j < n_relevant;
        std::size_t owner = j % spec.n_queries;
        std::size_t first_filler = 0;
        if (relevant) {
            detail::perturbed_row(rng, latents[owner], spec.noise_scale, d.row(0), spec.dim);
            text = "q" + std::to_string(owner) + "x q" + std::to_string(owner) + "y";
            first_filler = 1;
        }
        for (std::size_t t = first_filler; t < spec.tokens_per_doc; ++t)
            detail::random_unit_row(rng, d.row(t), spec.dim);
        for (std::size_t w = 0; w < 3; ++w) {
            if (!text.empty()) text += " ";
            text += "w" + std::to_string(rng.next_below(vocab));
        }
        DocId did = detail::padded_id('d', j);
        if (relevant) out.qrels.judgments[detail::padded_id('q', owner)][did] = 1;
        out.texts.docs.emplace(did, std::move(text));
        out.doc_embeddings.emplace_back(did, std::move(d));
    }

    // Teacher scores: cosine MaxSim of the generated embeddings, all pairs.
    for (const auto& [qid, qmat] : out.query_embeddings) {
        auto& per_doc = out.teacher.scores[qid];
        for (const auto& [did, dmat] : out.doc_embeddings)
            per_doc.emplace(did, maxsim(qmat, dmat, Similarity::cosine));
    }
    return out;
}

}  // namespace lir
