#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <nlohmann/json.hpp>

#include "lir/core.hpp"
#include "lir/eval.hpp"
#include "lir/scoring.hpp"

namespace lir {

// ---------------------------------------------------------------------------
// Text normalization
// ---------------------------------------------------------------------------

/// Ingestion-time text normalization: optional Unicode simple lowercase
/// mapping (per code point), always followed by NFC.
inline std::string normalize_text(std::string_view text, bool lowercase) {
    icu::UnicodeString s = icu::UnicodeString::fromUTF8(
        icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
    if (lowercase) {
        icu::UnicodeString lowered;
        for (std::int32_t i = 0; i < s.length();) {
            UChar32 cp = s.char32At(i);
            lowered.append(u_tolower(cp));
            i += U16_LENGTH(cp);
        }
        s = lowered;
    }
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("normalize_text: NFC normalizer unavailable");
    icu::UnicodeString normalized = nfc->normalize(s, status);
    if (U_FAILURE(status)) throw Error("normalize_text: NFC normalization failed");
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

// ---------------------------------------------------------------------------
// Corpus and teacher-score containers
// ---------------------------------------------------------------------------

struct TextCorpus {
    std::map<DocId, std::string> docs;
    std::map<QueryId, std::string> queries;

    void check() const {
        for (const auto& [id, text] : docs) {
            check_id(id, "doc id");
            if (text.empty()) throw Error("corpus: empty text for doc " + id);
        }
        for (const auto& [id, text] : queries) {
            check_id(id, "query id");
            if (text.empty()) throw Error("corpus: empty text for query " + id);
        }
    }
};

struct TeacherScores {
    std::map<QueryId, std::map<DocId, double>> scores;

    bool has(const QueryId& q, const DocId& d) const {
        auto qit = scores.find(q);
        return qit != scores.end() && qit->second.count(d) > 0;
    }

    double at(const QueryId& q, const DocId& d) const {
        auto qit = scores.find(q);
        if (qit != scores.end()) {
            auto dit = qit->second.find(d);
            if (dit != qit->second.end()) return dit->second;
        }
        throw Error("missing teacher score for (" + q + ", " + d + ")");
    }
};

/// Teacher-score file: text lines `qid docid score`.
inline TeacherScores read_teacher_scores(const std::string& path) {
    std::string data = io::read_file(path);
    std::istringstream in(data);
    TeacherScores ts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_ws(line);
        if (fields.size() != 3)
            throw Error(path + ": expected 3 fields at line " + std::to_string(line_no));
        check_id(fields[0], "query id");
        check_id(fields[1], "doc id");
        double score = detail::parse_double(fields[2], path, line_no);
        if (!std::isfinite(score))
            throw Error(path + ": non-finite score at line " + std::to_string(line_no));
        auto [it, inserted] = ts.scores[fields[0]].emplace(fields[1], score);
        (void)it;
        if (!inserted)
            throw Error(path + ": duplicate teacher score at line " + std::to_string(line_no));
    }
    return ts;
}

inline void write_teacher_scores(const TeacherScores& ts, const std::string& path) {
    std::string out;
    for (const auto& [qid, per_doc] : ts.scores)
        for (const auto& [did, score] : per_doc)
            out += qid + " " + did + " " + detail::format_double(score) + "\n";
    io::write_file(path, out);
}

/// Corpus JSONL: one object per line with keys "id" and "text".
inline std::map<std::string, std::string> read_text_jsonl(const std::string& path) {
    std::string data = io::read_file(path);
    std::istringstream in(data);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw Error(path + ": invalid JSON at line " + std::to_string(line_no));
        }
        if (!obj.contains("id") || !obj.contains("text"))
            throw Error(path + ": missing id/text at line " + std::to_string(line_no));
        std::string id = obj["id"].get<std::string>();
        check_id(id);
        if (!out.emplace(id, obj["text"].get<std::string>()).second)
            throw Error(path + ": duplicate id at line " + std::to_string(line_no));
    }
    return out;
}

inline void write_text_jsonl(const std::map<std::string, std::string>& texts,
                             const std::string& path) {
    std::string out;
    for (const auto& [id, text] : texts) {
        nlohmann::ordered_json obj;
        obj["id"] = id;
        obj["text"] = text;
        out += obj.dump() + "\n";
    }
    io::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Okapi BM25
// ---------------------------------------------------------------------------

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    void check() const {
        if (!(k1 >= 0.0)) throw Error("bm25: k1 must be >= 0");
        if (!(b >= 0.0 && b <= 1.0)) throw Error("bm25: b must be in [0, 1]");
    }
};

/// Frozen byte-level tokenizer: ASCII lowercase, split on any byte outside
/// [0-9A-Za-z].
inline std::vector<std::string> bm25_tokenize(std::string_view text) {
    std::vector<std::string> terms;
    std::string cur;
    for (unsigned char c : text) {
        bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        if (alnum) {
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                               : static_cast<char>(c));
        } else if (!cur.empty()) {
            terms.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) terms.push_back(std::move(cur));
    return terms;
}

using TermCounts = std::map<std::string, std::size_t>;

inline TermCounts term_counts(const std::vector<std::string>& terms) {
    TermCounts counts;
    for (const auto& t : terms) ++counts[t];
    return counts;
}

struct CorpusStats {
    std::size_t n_docs = 0;
    double avgdl = 0.0;
    std::map<std::string, std::size_t> df;
};

/// Okapi BM25 with Lucene-style non-negative idf:
///   idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5))
///   score  = sum_t idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))
inline double bm25_score(const std::vector<std::string>& query_terms, const TermCounts& doc_terms,
                         const CorpusStats& stats, const Bm25Params& params = {}) {
    params.check();
    if (query_terms.empty()) throw Error("bm25_score: empty query");
    std::size_t dl = 0;
    for (const auto& [t, c] : doc_terms) dl += c;
    double norm = params.k1 * (1.0 - params.b +
                               params.b * static_cast<double>(dl) / (stats.avgdl > 0.0 ? stats.avgdl : 1.0));
    double score = 0.0;
    for (const auto& term : query_terms) {
        auto dit = doc_terms.find(term);
        if (dit == doc_terms.end()) continue;
        auto dfit = stats.df.find(term);
        double df = dfit == stats.df.end() ? 0.0 : static_cast<double>(dfit->second);
        double idf = std::log(1.0 + (static_cast<double>(stats.n_docs) - df + 0.5) / (df + 0.5));
        double tf = static_cast<double>(dit->second);
        score += idf * tf * (params.k1 + 1.0) / (tf + norm);
    }
    return score;
}

/// Tokenized corpus with precomputed statistics; build once, rank many.
struct Bm25Index {
    Bm25Params params;
    CorpusStats stats;
    std::map<DocId, TermCounts> docs;

    static Bm25Index build(const std::map<DocId, std::string>& corpus_docs,
                           const Bm25Params& params = {}) {
        params.check();
        if (corpus_docs.empty()) throw Error("bm25: empty corpus");
        Bm25Index index;
        index.params = params;
        index.stats.n_docs = corpus_docs.size();
        std::size_t total_len = 0;
        for (const auto& [id, text] : corpus_docs) {
            auto terms = bm25_tokenize(text);
            total_len += terms.size();
            TermCounts counts = term_counts(terms);
            for (const auto& [t, c] : counts) ++index.stats.df[t];
            index.docs.emplace(id, std::move(counts));
        }
        index.stats.avgdl =
            static_cast<double>(total_len) / static_cast<double>(corpus_docs.size());
        return index;
    }

    /// All documents ranked by score descending, ties by ascending DocId.
    std::vector<ScoredDoc> rank_all(const std::string& query_text) const {
        auto query_terms = bm25_tokenize(query_text);
        if (query_terms.empty()) throw Error("bm25: empty query");
        std::vector<ScoredDoc> scored;
        scored.reserve(docs.size());
        for (const auto& [id, counts] : docs)
            scored.push_back(ScoredDoc{id, bm25_score(query_terms, counts, stats, params)});
        std::sort(scored.begin(), scored.end(), ranks_before);
        return scored;
    }
};

inline std::vector<ScoredDoc> bm25_top_k(const std::string& query_text,
                                         const std::map<DocId, std::string>& corpus_docs,
                                         std::size_t k, const Bm25Params& params = {}) {
    if (k < 1) throw Error("bm25_top_k: k must be >= 1");
    auto ranked = Bm25Index::build(corpus_docs, params).rank_all(query_text);
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

// ---------------------------------------------------------------------------
// Negative mining and tuple assembly
// ---------------------------------------------------------------------------

struct MiningConfig {
    double threshold_fraction = 0.95;
    double frac_model = 0.35;
    double frac_bm25 = 0.35;
    double frac_random = 0.30;
    std::size_t n_way = 16;
    Seed seed = 0;
    /// Alternative reading of the threshold: an absolute teacher-score cutoff
    /// instead of a fraction of the positive's score.
    bool absolute_threshold = false;
    /// Lowercase texts during ingestion (the casing ablation switch).
    bool lowercase = false;

    void check() const {
        if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0))
            throw Error("mining config: threshold_fraction must be in (0, 1]");
        if (frac_model < 0.0 || frac_bm25 < 0.0 || frac_random < 0.0)
            throw Error("mining config: negative fraction");
        if (std::fabs(frac_model + frac_bm25 + frac_random - 1.0) > 1e-12)
            throw Error("mining config: fractions must sum to 1");
        if (n_way < 2) throw Error("mining config: n_way must be >= 2");
    }
};

struct TrainingTuple {
    QueryId query;
    DocId positive;
    std::vector<DocId> negatives;
    std::vector<double> teacher_scores;  // aligned [positive, negatives...]

    void check() const {
        check_id(query, "query id");
        check_id(positive, "doc id");
        if (teacher_scores.size() != negatives.size() + 1)
            throw Error("tuple: teacher score count must equal 1 + negatives");
        std::set<DocId> seen;
        for (const auto& n : negatives) {
            check_id(n, "doc id");
            if (n == positive) throw Error("tuple: negative equals positive: " + n);
            if (!seen.insert(n).second) throw Error("tuple: duplicate negative: " + n);
        }
        for (double s : teacher_scores)
            if (!std::isfinite(s)) throw Error("tuple: non-finite teacher score");
    }
};

/// Largest-remainder apportionment of n_slots across fractions. Counts sum
/// to n_slots; remainder ties go to the earlier source in the given order.
inline std::vector<std::size_t> apportion_slots(std::size_t n_slots,
                                                const std::vector<double>& fractions) {
    if (n_slots < 1) throw Error("apportion_slots: n_slots must be >= 1");
    if (fractions.empty()) throw Error("apportion_slots: no fractions");
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw Error("apportion_slots: negative fraction");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw Error("apportion_slots: fractions must sum to 1");

    std::vector<std::size_t> counts(fractions.size());
    std::vector<std::pair<double, std::size_t>> remainders;  // (-remainder, index)
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        double quota = fractions[i] * static_cast<double>(n_slots);
        counts[i] = static_cast<std::size_t>(std::floor(quota));
        assigned += counts[i];
        remainders.emplace_back(-(quota - std::floor(quota)), i);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t j = 0; assigned < n_slots; ++j, ++assigned)
        ++counts[remainders[j % remainders.size()].second];
    return counts;
}

/// Min-max rescaling to [0, 1]; an all-equal input maps to all zeros.
inline std::vector<double> minmax_normalize(const std::vector<double>& scores) {
    if (scores.size() < 2) throw Error("minmax_normalize: need at least 2 scores");
    double lo = scores[0], hi = scores[0];
    for (double s : scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    std::vector<double> out(scores.size(), 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - lo) / (hi - lo);
    return out;
}

namespace detail {

inline std::vector<DocId> mine_negatives_impl(const QueryId& query, const DocId& positive,
                                              const TeacherScores& teacher,
                                              const std::string& query_text,
                                              const Bm25Index& bm25,
                                              const std::map<DocId, std::string>& corpus_docs,
                                              const MiningConfig& config) {
    config.check();
    const std::size_t n_neg = config.n_way - 1;
    if (corpus_docs.size() < config.n_way)
        throw Error("mine_negatives: corpus must hold at least n_way docs");
    if (corpus_docs.size() - 1 < n_neg)
        throw Error("mine_negatives: fewer than n_way-1 eligible docs for query " + query);

    const double pos_score = teacher.at(query, positive);
    const double cutoff = config.absolute_threshold ? config.threshold_fraction
                                                    : config.threshold_fraction * pos_score;
    auto counts =
        apportion_slots(n_neg, {config.frac_model, config.frac_bm25, config.frac_random});

    std::vector<DocId> chosen;
    std::set<DocId> taken;
    auto take = [&](const DocId& d) {
        chosen.push_back(d);
        taken.insert(d);
    };

    // Model-mined slots: hardest teacher-scored docs below the cutoff.
    auto qit = teacher.scores.find(query);
    if (qit != teacher.scores.end()) {
        std::vector<ScoredDoc> pool;
        for (const auto& [did, score] : qit->second) {
            if (did == positive || !corpus_docs.count(did)) continue;
            if (score < cutoff) pool.push_back(ScoredDoc{did, score});
        }
        std::sort(pool.begin(), pool.end(), ranks_before);
        for (std::size_t i = 0; i < pool.size() && chosen.size() < counts[0]; ++i)
            take(pool[i].doc);
    }

    // BM25 slots: best positive-score lexical matches not already taken.
    const std::size_t bm25_target = chosen.size() + counts[1];
    for (const auto& sd : bm25.rank_all(query_text)) {
        if (chosen.size() >= bm25_target) break;
        if (sd.score <= 0.0) break;  // ranked list: all zeros follow
        if (sd.doc == positive || taken.count(sd.doc)) continue;
        take(sd.doc);
    }

    // Random slots fill the remainder (and absorb shortfalls above).
    std::vector<DocId> rest;
    for (const auto& [did, text] : corpus_docs) {
        (void)text;
        if (did != positive && !taken.count(did)) rest.push_back(did);
    }
    SplitMix64 rng(derive_seed(config.seed, fnv1a64(query), fnv1a64(positive)));
    while (chosen.size() < n_neg) {
        if (rest.empty())
            throw Error("mine_negatives: fewer than n_way-1 eligible docs for query " + query);
        std::size_t pick = static_cast<std::size_t>(rng.next_below(rest.size()));
        take(rest[pick]);
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return chosen;
}

}  // namespace detail

/// Mines the n_way-1 negatives for one (query, positive) pair: model-mined
/// slots take the highest-scoring teacher candidates below the threshold,
/// BM25 slots the best lexical matches, and seed-deterministic random picks
/// fill the rest.
inline std::vector<DocId> mine_negatives(const QueryId& query, const DocId& positive,
                                         const TeacherScores& teacher, const TextCorpus& corpus,
                                         const MiningConfig& config,
                                         const Bm25Params& params = {}) {
    corpus.check();
    auto query_it = corpus.queries.find(query);
    if (query_it == corpus.queries.end())
        throw Error("mine_negatives: no text for query " + query);
    if (!corpus.docs.count(positive))
        throw Error("mine_negatives: positive doc not in corpus: " + positive);

    std::map<DocId, std::string> normalized_docs;
    for (const auto& [id, text] : corpus.docs)
        normalized_docs.emplace(id, normalize_text(text, config.lowercase));
    auto bm25 = Bm25Index::build(normalized_docs, params);
    return detail::mine_negatives_impl(query, positive, teacher,
                                       normalize_text(query_it->second, config.lowercase), bm25,
                                       normalized_docs, config);
}

/// Builds the full n_way tuple stream: one tuple per (query, positive) pair
/// in qrels, ordered by ascending query id then positive id. Teacher scores
/// are aligned [positive, negatives...].
inline std::vector<TrainingTuple> assemble_tuples(const TextCorpus& corpus, const Qrels& qrels,
                                                  const TeacherScores& teacher,
                                                  const MiningConfig& config,
                                                  const Bm25Params& params = {}) {
    config.check();
    corpus.check();

    std::map<DocId, std::string> normalized_docs;
    for (const auto& [id, text] : corpus.docs)
        normalized_docs.emplace(id, normalize_text(text, config.lowercase));
    auto bm25 = Bm25Index::build(normalized_docs, params);

    std::vector<TrainingTuple> tuples;
    for (const auto& [qid, judged] : qrels.judgments) {
        bool any_positive = false;
        for (const auto& [did, rel] : judged) any_positive = any_positive || rel > 0;
        if (!any_positive) throw Error("assemble_tuples: query has no positive: " + qid);
        auto query_it = corpus.queries.find(qid);
        if (query_it == corpus.queries.end())
            throw Error("assemble_tuples: no text for query " + qid);
        std::string query_text = normalize_text(query_it->second, config.lowercase);

        for (const auto& [did, rel] : judged) {
            if (rel <= 0) continue;
            if (!corpus.docs.count(did))
                throw Error("assemble_tuples: positive doc not in corpus: " + did);
            TrainingTuple tuple;
            tuple.query = qid;
            tuple.positive = did;
            tuple.negatives = detail::mine_negatives_impl(qid, did, teacher, query_text, bm25,
                                                          normalized_docs, config);
            tuple.teacher_scores.push_back(teacher.at(qid, did));
            for (const auto& neg : tuple.negatives)
                tuple.teacher_scores.push_back(teacher.at(qid, neg));
            tuple.check();
            tuples.push_back(std::move(tuple));
        }
    }
    return tuples;
}

// ---------------------------------------------------------------------------
// Tuple JSONL
// ---------------------------------------------------------------------------
//
// One object per line: {"query_id": ..., "positive_id": ..., "negative_ids":
// [...], "teacher_scores": [...]} with scores aligned positive-first.

inline void write_tuples(const std::vector<TrainingTuple>& tuples, const std::string& path) {
    std::string out;
    for (const auto& t : tuples) {
        t.check();
        nlohmann::ordered_json obj;
        obj["query_id"] = t.query;
        obj["positive_id"] = t.positive;
        obj["negative_ids"] = t.negatives;
        obj["teacher_scores"] = t.teacher_scores;
        out += obj.dump() + "\n";
    }
    io::write_file(path, out);
}

inline std::vector<TrainingTuple> read_tuples(const std::string& path) {
    std::string data = io::read_file(path);
    std::istringstream in(data);
    std::vector<TrainingTuple> tuples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto obj = nlohmann::json::parse(line);
            TrainingTuple t;
            t.query = obj.at("query_id").get<std::string>();
            t.positive = obj.at("positive_id").get<std::string>();
            t.negatives = obj.at("negative_ids").get<std::vector<std::string>>();
            t.teacher_scores = obj.at("teacher_scores").get<std::vector<double>>();
            t.check();
            tuples.push_back(std::move(t));
        } catch (const nlohmann::json::exception&) {
            throw Error(path + ": invalid tuple JSON at line " + std::to_string(line_no));
        }
    }
    return tuples;
}

}  // namespace lir
