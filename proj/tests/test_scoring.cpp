#include <catch2/catch_amalgamated.hpp>

#include "lir/scoring.hpp"
#include "oracles.hpp"

using namespace lir;

namespace {

TokenMatrix mat(std::size_t rows, std::size_t dim, std::vector<double> v) {
    return TokenMatrix(rows, dim, std::move(v));
}

TokenMatrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t dim) {
    TokenMatrix m(rows, dim);
    for (auto& v : m.values) v = rng.next_gaussian();
    return m;
}

}  // namespace

TEST_CASE("normalize_rows") {
    auto out = normalize_rows(mat(1, 2, {3, 4}));
    CHECK(out.at(0, 0) == Catch::Approx(0.6).epsilon(1e-15));
    CHECK(out.at(0, 1) == Catch::Approx(0.8).epsilon(1e-15));

    auto unit = normalize_rows(mat(1, 2, {1, 0}));
    CHECK(unit.values == std::vector<double>{1, 0});

    CHECK_THROWS_WITH(normalize_rows(mat(2, 2, {1, 0, 0, 0})),
                      Catch::Matchers::ContainsSubstring("row at index 1"));
}

TEST_CASE("normalize_rows leaves unit norms within 1e-12") {
    SplitMix64 rng(3);
    auto m = random_matrix(rng, 20, 7);
    auto out = normalize_rows(m);
    for (std::size_t r = 0; r < out.rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < out.dim; ++c) sq += out.at(r, c) * out.at(r, c);
        REQUIRE(std::fabs(std::sqrt(sq) - 1.0) <= 1e-12);
    }
}

TEST_CASE("maxsim: hand cases") {
    CHECK(maxsim(mat(1, 2, {1, 0}), mat(1, 2, {1, 0}), Similarity::cosine) == 1.0);
    CHECK(maxsim(mat(1, 2, {1, 0}), mat(1, 2, {0, 1}), Similarity::dot) == 0.0);
    // per-query-token maxima: 0.6 and 0.8
    CHECK(maxsim(mat(2, 2, {1, 0, 0, 1}), mat(1, 2, {0.6, 0.8}), Similarity::dot) ==
          Catch::Approx(1.4).epsilon(1e-15));
    CHECK_THROWS_AS(maxsim(mat(1, 2, {1, 0}), mat(1, 3, {1, 0, 0}), Similarity::dot), Error);
}

TEST_CASE("maxsim: appending a document token never decreases the dot score") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto q = random_matrix(rng, 3, 5);
        auto d = random_matrix(rng, 4, 5);
        double before = maxsim(q, d, Similarity::dot);
        TokenMatrix extended(d.rows + 1, d.dim);
        std::copy(d.values.begin(), d.values.end(), extended.values.begin());
        for (std::size_t c = 0; c < d.dim; ++c) extended.at(d.rows, c) = rng.next_gaussian();
        REQUIRE(maxsim(q, extended, Similarity::dot) >= before);
    }
}

TEST_CASE("maxsim: permutation invariance in both arguments") {
    SplitMix64 rng(12);
    auto q = random_matrix(rng, 4, 6);
    auto d = random_matrix(rng, 5, 6);
    double base = maxsim(q, d, Similarity::dot);

    TokenMatrix q_flipped(q.rows, q.dim);
    for (std::size_t r = 0; r < q.rows; ++r)
        std::copy(q.row(q.rows - 1 - r), q.row(q.rows - 1 - r) + q.dim, q_flipped.row(r));
    TokenMatrix d_rolled(d.rows, d.dim);
    for (std::size_t r = 0; r < d.rows; ++r)
        std::copy(d.row((r + 2) % d.rows), d.row((r + 2) % d.rows) + d.dim, d_rolled.row(r));

    CHECK(maxsim(q_flipped, d, Similarity::dot) == base);
    CHECK(maxsim(q, d_rolled, Similarity::dot) == base);
}

TEST_CASE("maxsim: additive over query row concatenation") {
    SplitMix64 rng(13);
    auto q1 = random_matrix(rng, 3, 4);
    auto q2 = random_matrix(rng, 2, 4);
    auto d = random_matrix(rng, 6, 4);
    TokenMatrix joined(q1.rows + q2.rows, 4);
    std::copy(q1.values.begin(), q1.values.end(), joined.values.begin());
    std::copy(q2.values.begin(), q2.values.end(), joined.values.begin() + q1.values.size());
    CHECK(maxsim(joined, d, Similarity::dot) ==
          Catch::Approx(maxsim(q1, d, Similarity::dot) + maxsim(q2, d, Similarity::dot))
              .epsilon(1e-15));
}

TEST_CASE("maxsim: cosine score bounded by query row count") {
    SplitMix64 rng(14);
    for (int trial = 0; trial < 30; ++trial) {
        auto q = random_matrix(rng, 5, 8);
        auto d = random_matrix(rng, 7, 8);
        double s = maxsim(q, d, Similarity::cosine);
        REQUIRE(std::fabs(s) <= static_cast<double>(q.rows) + 1e-12);
    }
}

TEST_CASE("maxsim: positive scaling of docs scales dot scores and keeps ranking") {
    SplitMix64 rng(15);
    auto q = random_matrix(rng, 3, 5);
    std::map<DocId, TokenMatrix> docs, scaled;
    for (int i = 0; i < 10; ++i) {
        auto m = random_matrix(rng, 4, 5);
        auto s = m;
        for (auto& v : s.values) v *= 2.5;
        docs.emplace("d" + std::to_string(i), std::move(m));
        scaled.emplace("d" + std::to_string(i), std::move(s));
    }
    std::map<QueryId, TokenMatrix> queries{{"q", q}};
    auto base = maxsim_batch(queries, docs, Similarity::dot, 10);
    auto after = maxsim_batch(queries, scaled, Similarity::dot, 10);
    for (std::size_t i = 0; i < base.at("q").size(); ++i) {
        CHECK(after.at("q")[i].doc == base.at("q")[i].doc);
        CHECK(after.at("q")[i].score == Catch::Approx(2.5 * base.at("q")[i].score).epsilon(1e-12));
    }
}

TEST_CASE("maxsim_batch: basics and tie rule") {
    std::map<QueryId, TokenMatrix> queries{{"q1", mat(1, 2, {1, 0})}};
    std::map<DocId, TokenMatrix> one_doc{{"doc", mat(1, 2, {0, 1})}};
    auto result = maxsim_batch(queries, one_doc, Similarity::dot, 5);
    REQUIRE(result.at("q1").size() == 1);
    CHECK(result.at("q1")[0].doc == "doc");

    // two docs with identical embeddings tie and order by ascending id
    std::map<DocId, TokenMatrix> tied{{"zz", mat(1, 2, {1, 0})}, {"aa", mat(1, 2, {1, 0})}};
    auto tie = maxsim_batch(queries, tied, Similarity::dot, 2);
    CHECK(tie.at("q1")[0].doc == "aa");
    CHECK(tie.at("q1")[1].doc == "zz");

    CHECK_THROWS_AS(maxsim_batch(queries, {}, Similarity::dot, 1), Error);
}

TEST_CASE("maxsim_batch matches the nested-loop oracle on random instances") {
    SplitMix64 rng(16);
    for (int trial = 0; trial < 10; ++trial) {
        std::map<QueryId, TokenMatrix> queries;
        std::map<DocId, TokenMatrix> docs;
        for (int i = 0; i < 5; ++i)
            queries.emplace("q" + std::to_string(i),
                            random_matrix(rng, 1 + rng.next_below(4), 6));
        for (int i = 0; i < 50; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "d%03d", i);
            docs.emplace(buf, random_matrix(rng, 1 + rng.next_below(6), 6));
        }
        bool cosine = trial % 2 == 1;
        auto sim = cosine ? Similarity::cosine : Similarity::dot;
        auto got = maxsim_batch(queries, docs, sim, 10, trial % 3 == 0 ? 4 : 1);
        for (const auto& [qid, qmat] : queries) {
            auto expect = oracle::rank_docs(qmat, docs, cosine, 10);
            REQUIRE(got.at(qid).size() == expect.size());
            for (std::size_t i = 0; i < expect.size(); ++i) {
                REQUIRE(got.at(qid)[i].doc == expect[i].id);
                REQUIRE(got.at(qid)[i].score == expect[i].score);
            }
        }
    }
}

TEST_CASE("maxsim_batch: thread count never changes output") {
    SplitMix64 rng(17);
    std::map<QueryId, TokenMatrix> queries;
    std::map<DocId, TokenMatrix> docs;
    for (int i = 0; i < 9; ++i)
        queries.emplace("q" + std::to_string(i), random_matrix(rng, 3, 8));
    for (int i = 0; i < 40; ++i)
        docs.emplace("d" + std::to_string(i), random_matrix(rng, 4, 8));
    auto serial = maxsim_batch(queries, docs, Similarity::cosine, 7, 1);
    auto parallel = maxsim_batch(queries, docs, Similarity::cosine, 7, 8);
    REQUIRE(serial.size() == parallel.size());
    for (const auto& [qid, ranked] : serial) {
        const auto& other = parallel.at(qid);
        REQUIRE(ranked.size() == other.size());
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            CHECK(ranked[i].doc == other[i].doc);
            CHECK(ranked[i].score == other[i].score);
        }
    }
}
