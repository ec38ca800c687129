#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lir/core.hpp"
#include "lir/index.hpp"
#include "lir/scoring.hpp"

namespace lir {

// ---------------------------------------------------------------------------
// TREC-style relevance data
// ---------------------------------------------------------------------------

/// Relevance judgments: (query, doc) -> integer relevance >= 0.
struct Qrels {
    std::map<QueryId, std::map<DocId, int>> judgments;

    int relevance(const QueryId& q, const DocId& d) const {
        auto qit = judgments.find(q);
        if (qit == judgments.end()) return 0;
        auto dit = qit->second.find(d);
        return dit == qit->second.end() ? 0 : dit->second;
    }

    bool has_positive(const QueryId& q) const {
        auto qit = judgments.find(q);
        if (qit == judgments.end()) return false;
        for (const auto& [d, rel] : qit->second)
            if (rel > 0) return true;
        return false;
    }
};

/// Ranked retrieval results per query, best first. Scores must be
/// non-increasing within a query and doc ids unique.
struct Run {
    std::map<QueryId, std::vector<ScoredDoc>> rankings;
    std::string tag = "lir";
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) fields.push_back(tok);
    return fields;
}

/// Shortest decimal form that round-trips, via std::to_chars.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what, std::size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(what + ": bad number \"" + s + "\" at line " + std::to_string(line_no));
    return v;
}

inline long parse_int(const std::string& s, const std::string& what, std::size_t line_no) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(what + ": bad integer \"" + s + "\" at line " + std::to_string(line_no));
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------
//
// Qrels: `qid 0 docid rel` (second column ignored on read, written as 0).
// Run:   `qid Q0 docid rank score tag`, rank 1-based, LF line endings.

inline Qrels read_qrels(const std::string& path) {
    std::string data = io::read_file(path);
    std::istringstream in(data);
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_ws(line);
        if (fields.size() != 4)
            throw Error(path + ": expected 4 fields at line " + std::to_string(line_no));
        check_id(fields[0], "query id");
        check_id(fields[2], "doc id");
        long rel = detail::parse_int(fields[3], path, line_no);
        if (rel < 0)
            throw Error(path + ": negative relevance at line " + std::to_string(line_no));
        auto [it, inserted] = qrels.judgments[fields[0]].emplace(fields[2], static_cast<int>(rel));
        (void)it;
        if (!inserted)
            throw Error(path + ": duplicate judgment at line " + std::to_string(line_no));
    }
    return qrels;
}

inline void write_qrels(const Qrels& qrels, const std::string& path) {
    std::string out;
    for (const auto& [qid, docs] : qrels.judgments)
        for (const auto& [did, rel] : docs)
            out += qid + " 0 " + did + " " + std::to_string(rel) + "\n";
    io::write_file(path, out);
}

inline Run read_run(const std::string& path) {
    std::string data = io::read_file(path);
    std::istringstream in(data);
    Run run;
    bool tag_seen = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_ws(line);
        if (fields.size() != 6)
            throw Error(path + ": expected 6 fields at line " + std::to_string(line_no));
        check_id(fields[0], "query id");
        check_id(fields[2], "doc id");
        detail::parse_int(fields[3], path, line_no);  // rank column, informational
        double score = detail::parse_double(fields[4], path, line_no);
        if (!std::isfinite(score))
            throw Error(path + ": non-finite score at line " + std::to_string(line_no));
        auto& ranking = run.rankings[fields[0]];
        for (const auto& sd : ranking)
            if (sd.doc == fields[2])
                throw Error(path + ": duplicate doc for query " + fields[0] + " at line " +
                            std::to_string(line_no));
        if (!ranking.empty() && ranking.back().score < score)
            throw Error(path + ": scores increase for query " + fields[0] + " at line " +
                        std::to_string(line_no));
        ranking.push_back(ScoredDoc{fields[2], score});
        if (!tag_seen) {
            run.tag = fields[5];
            tag_seen = true;
        }
    }
    return run;
}

inline void write_run(const Run& run, const std::string& path) {
    std::string out;
    for (const auto& [qid, ranking] : run.rankings) {
        std::size_t rank = 0;
        for (const auto& sd : ranking) {
            ++rank;
            out += qid + " Q0 " + sd.doc + " " + std::to_string(rank) + " " +
                   detail::format_double(sd.score) + " " + run.tag + "\n";
        }
    }
    io::write_file(path, out);
}

// ---------------------------------------------------------------------------
// NDCG
// ---------------------------------------------------------------------------

enum class Gain { linear, exponential };

struct NdcgResult {
    std::map<QueryId, double> per_query;
    double mean = 0.0;
};

namespace detail {

inline double gain_of(int rel, Gain gain) {
    if (gain == Gain::linear) return static_cast<double>(rel);
    return std::pow(2.0, static_cast<double>(rel)) - 1.0;
}

}  // namespace detail

/// NDCG@k with the trec_eval convention: gain/log2(rank+1) discount, ideal
/// ranking over all judged documents. Queries judged but absent from the run
/// score 0 and stay in the mean; queries with no positive judgment are
/// excluded. A run query with no judgments at all is an error.
inline NdcgResult ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k,
                            Gain gain = Gain::linear) {
    if (k < 1) throw Error("ndcg_at_k: k must be >= 1");
    for (const auto& [qid, ranking] : run.rankings)
        if (!qrels.judgments.count(qid)) throw Error("ndcg_at_k: run query missing from qrels: " + qid);

    NdcgResult result;
    double total = 0.0;
    std::size_t evaluated = 0;
    for (const auto& [qid, judged] : qrels.judgments) {
        std::vector<int> rels;
        rels.reserve(judged.size());
        bool any_positive = false;
        for (const auto& [did, rel] : judged) {
            rels.push_back(rel);
            any_positive = any_positive || rel > 0;
        }
        if (!any_positive) continue;  // zero total relevance: excluded from the mean

        double ideal = 0.0;
        std::sort(rels.begin(), rels.end(), std::greater<int>());
        for (std::size_t i = 0; i < std::min(k, rels.size()); ++i)
            ideal += detail::gain_of(rels[i], gain) / std::log2(static_cast<double>(i) + 2.0);

        double dcg = 0.0;
        auto rit = run.rankings.find(qid);
        if (rit != run.rankings.end()) {
            const auto& ranking = rit->second;
            for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
                dcg += detail::gain_of(qrels.relevance(qid, ranking[i].doc), gain) /
                       std::log2(static_cast<double>(i) + 2.0);
        }
        double ndcg = dcg / ideal;
        result.per_query.emplace(qid, ndcg);
        total += ndcg;
        ++evaluated;
    }
    if (evaluated == 0) throw Error("ndcg_at_k: no query with a positive judgment");
    result.mean = total / static_cast<double>(evaluated);
    return result;
}

/// Unweighted arithmetic mean of per-dataset means.
inline double aggregate_mean(const std::vector<double>& values) {
    if (values.empty()) throw Error("aggregate_mean: empty input");
    double total = 0.0;
    for (double v : values) total += v;
    return total / static_cast<double>(values.size());
}

}  // namespace lir
