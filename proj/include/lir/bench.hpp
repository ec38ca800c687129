#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lir/core.hpp"
#include "lir/index.hpp"
#include "lir/scoring.hpp"

namespace lir {

// ---------------------------------------------------------------------------
// Memory model
// ---------------------------------------------------------------------------

struct MemorySpec {
    std::uint64_t n_docs = 0;
    std::uint64_t tokens_per_doc = 0;
    std::uint64_t dim = 0;
    Dtype dtype = Dtype::f16;

    void check() const {
        if (n_docs == 0 || tokens_per_doc == 0 || dim == 0)
            throw Error("memory spec: all counts must be positive");
    }
};

/// Exact value-region size: n_docs * tokens_per_doc * dim * dtype_size bytes.
inline std::uint64_t memory_bytes(const MemorySpec& spec) {
    spec.check();
    unsigned __int128 total = spec.n_docs;
    total *= spec.tokens_per_doc;
    total *= spec.dim;
    total *= dtype_size(spec.dtype);
    if (total > (static_cast<unsigned __int128>(1) << 63))
        throw Error("memory_bytes: size exceeds 2^63 bytes");
    return static_cast<std::uint64_t>(total);
}

/// Bytes rounded to the nearest MiB (2^20 bytes), ties away from zero.
inline std::uint64_t memory_mib(const MemorySpec& spec) {
    return (memory_bytes(spec) + (1u << 19)) >> 20;
}

// ---------------------------------------------------------------------------
// Timing harness
// ---------------------------------------------------------------------------

struct TimingReport {
    double encode_load_s = 0.0;  // index + query deserialization
    double search_s = 0.0;       // top-k retrieval over all queries
    double score_s = 0.0;        // exhaustive query x doc scoring
    double docs_per_s = 0.0;     // (n_docs * n_queries) / score_s
    double queries_per_s = 0.0;  // n_queries / search_s
    int repeats = 0;
    unsigned threads = 1;
    std::string environment;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::string environment_string(unsigned threads) {
    std::string env = "cpu-threads=" + std::to_string(std::thread::hardware_concurrency()) +
                      " run-threads=" + std::to_string(threads);
#if defined(__VERSION__)
    env += " compiler=" + std::string(__VERSION__);
#endif
    return env;
}

}  // namespace detail

/// Times index+query loading, top-k search, and exhaustive scoring on the
/// local machine: one untimed warm-up run, then the mean over `repeats`.
/// Numbers are environment-specific and reported as measured.
inline TimingReport time_run(const std::string& index_path, const std::string& queries_path,
                             std::size_t k, int repeats, unsigned threads = 1) {
    if (repeats < 1) throw Error("time_run: repeats must be >= 1");

    TimingReport report;
    report.repeats = repeats;
    report.threads = threads;
    report.environment = detail::environment_string(threads);

    MultiVectorIndex index;
    std::map<QueryId, TokenMatrix> queries;
    std::size_t n_queries = 0;

    for (int r = -1; r < repeats; ++r) {  // r == -1 is the warm-up
        auto t0 = std::chrono::steady_clock::now();
        index = load_index(index_path);
        EmbeddingFile qfile = read_embeddings(queries_path);
        queries.clear();
        for (auto& [id, mat] : qfile.items) queries.emplace(id, std::move(mat));
        n_queries = queries.size();
        double load_s = detail::seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        auto ranked = maxsim_batch(queries, index.entries, index.sim, k, threads);
        double search_s = detail::seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        auto full = maxsim_batch(queries, index.entries, index.sim,
                                 index.entries.size(), threads);
        double score_s = detail::seconds_since(t0);
        (void)ranked;
        (void)full;

        if (r >= 0) {
            report.encode_load_s += load_s;
            report.search_s += search_s;
            report.score_s += score_s;
        }
    }
    report.encode_load_s /= repeats;
    report.search_s /= repeats;
    report.score_s /= repeats;
    if (report.search_s > 0.0)
        report.queries_per_s = static_cast<double>(n_queries) / report.search_s;
    if (report.score_s > 0.0)
        report.docs_per_s =
            static_cast<double>(index.entries.size() * n_queries) / report.score_s;
    return report;
}

// ---------------------------------------------------------------------------
// JSON reports (fixed key order: spec, bytes, mib, phases, environment)
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json memory_report(const MemorySpec& spec) {
    nlohmann::ordered_json report;
    report["spec"] = {{"n_docs", spec.n_docs},
                      {"tokens_per_doc", spec.tokens_per_doc},
                      {"dim", spec.dim},
                      {"dtype", dtype_name(spec.dtype)}};
    report["bytes"] = memory_bytes(spec);
    report["mib"] = memory_mib(spec);
    return report;
}

inline nlohmann::ordered_json timing_report_json(const TimingReport& r, std::size_t n_docs,
                                                 std::size_t n_queries, std::size_t k) {
    nlohmann::ordered_json report;
    report["spec"] = {{"n_docs", n_docs}, {"n_queries", n_queries}, {"k", k},
                      {"repeats", r.repeats}, {"threads", r.threads}};
    report["phases"] = {{"encode_load_s", r.encode_load_s},
                        {"search_s", r.search_s},
                        {"score_s", r.score_s},
                        {"docs_per_s", r.docs_per_s},
                        {"queries_per_s", r.queries_per_s}};
    report["environment"] = r.environment;
    return report;
}

}  // namespace lir
