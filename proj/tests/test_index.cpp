#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "lir/index.hpp"
#include "oracles.hpp"

using namespace lir;

namespace {

namespace fs = std::filesystem;

fs::path test_dir() {
    auto dir = fs::temp_directory_path() / "lir_index_test";
    fs::create_directories(dir);
    return dir;
}

TokenMatrix mat(std::size_t rows, std::size_t dim, std::vector<double> v) {
    return TokenMatrix(rows, dim, std::move(v));
}

// Values representable in float32 so f32 storage is lossless.
TokenMatrix random_f32_matrix(SplitMix64& rng, std::size_t rows, std::size_t dim) {
    TokenMatrix m(rows, dim);
    for (auto& v : m.values) v = static_cast<double>(static_cast<float>(rng.next_gaussian()));
    return m;
}

std::vector<std::pair<DocId, TokenMatrix>> random_corpus(SplitMix64& rng, int n_docs,
                                                         std::size_t dim) {
    std::vector<std::pair<DocId, TokenMatrix>> out;
    for (int i = 0; i < n_docs; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "d%03d", i);
        out.emplace_back(buf, random_f32_matrix(rng, 1 + rng.next_below(5), dim));
    }
    return out;
}

}  // namespace

TEST_CASE("build_index: float32 storage is bit-identical for float inputs") {
    auto input = mat(2, 2, {0.5, -0.25, 1.5, 2.0});
    auto index = build_index({{"doc", input}}, 2, Dtype::f32, Similarity::dot);
    CHECK(index.entries.at("doc").values == input.values);
}

TEST_CASE("build_index: cosine normalizes rows before storage") {
    auto index = build_index({{"doc", mat(1, 2, {3, 4})}}, 2, Dtype::f32, Similarity::cosine);
    CHECK(index.entries.at("doc").at(0, 0) == Catch::Approx(0.6).epsilon(1e-7));
    CHECK(index.entries.at("doc").at(0, 1) == Catch::Approx(0.8).epsilon(1e-7));
}

TEST_CASE("build_index: duplicate and mismatching docs are rejected") {
    auto m = mat(1, 2, {1, 0});
    CHECK_THROWS_WITH(build_index({{"a", m}, {"a", m}}, 2, Dtype::f32, Similarity::dot),
                      Catch::Matchers::ContainsSubstring("duplicate"));
    CHECK_THROWS_WITH(build_index({{"a", m}, {"b", mat(1, 3, {1, 0, 0})}}, 2, Dtype::f32,
                                  Similarity::dot),
                      Catch::Matchers::ContainsSubstring("b"));
    CHECK_THROWS_AS(build_index({}, 2, Dtype::f32, Similarity::dot), Error);
}

TEST_CASE("index persistence: round trip is byte-identical") {
    auto dir = test_dir();
    SplitMix64 rng(51);
    for (Dtype dtype : {Dtype::f32, Dtype::f16}) {
        auto corpus = random_corpus(rng, 20, 6);
        auto index = build_index(corpus, 6, dtype, Similarity::cosine,
                                 {{"note", "roundtrip"}, {"seed", "51"}});
        auto p1 = (dir / "idx_a.mvix").string();
        auto p2 = (dir / "idx_b.mvix").string();
        save_index(index, p1);
        auto loaded = load_index(p1);
        save_index(loaded, p2);
        CHECK(io::read_file(p1) == io::read_file(p2));
        CHECK(loaded.metadata == index.metadata);
        CHECK(loaded.dim == index.dim);
        CHECK(loaded.entries.size() == index.entries.size());
    }
}

TEST_CASE("index persistence: building the same stream twice gives identical bytes") {
    auto dir = test_dir();
    SplitMix64 rng_a(77), rng_b(77);
    auto p1 = (dir / "det_a.mvix").string();
    auto p2 = (dir / "det_b.mvix").string();
    save_index(build_index(random_corpus(rng_a, 12, 4), 4, Dtype::f16, Similarity::cosine), p1);
    save_index(build_index(random_corpus(rng_b, 12, 4), 4, Dtype::f16, Similarity::cosine), p2);
    CHECK(io::read_file(p1) == io::read_file(p2));
}

TEST_CASE("index load: malformed files raise distinct errors") {
    auto dir = test_dir();
    auto path = (dir / "bad.mvix").string();

    io::write_file(path, "");
    CHECK_THROWS_WITH(load_index(path), Catch::Matchers::ContainsSubstring("bad magic"));

    io::write_file(path, "JUNKJUNKJUNK");
    CHECK_THROWS_WITH(load_index(path), Catch::Matchers::ContainsSubstring("bad magic"));

    SplitMix64 rng(52);
    auto good = (dir / "good.mvix").string();
    save_index(build_index(random_corpus(rng, 3, 4), 4, Dtype::f32, Similarity::dot), good);
    std::string bytes = io::read_file(good);

    std::string truncated = bytes.substr(0, bytes.size() - 3);
    io::write_file(path, truncated);
    CHECK_THROWS_WITH(load_index(path), Catch::Matchers::ContainsSubstring("truncated"));

    std::string bad_version = bytes;
    bad_version[4] = 9;  // u32 version little-endian starts at offset 4
    io::write_file(path, bad_version);
    CHECK_THROWS_WITH(load_index(path), Catch::Matchers::ContainsSubstring("version"));

    std::string zero_dim = bytes;
    zero_dim[10] = 0;  // u16 dim at offset 10
    zero_dim[11] = 0;
    io::write_file(path, zero_dim);
    CHECK_THROWS_WITH(load_index(path), Catch::Matchers::ContainsSubstring("dim"));
}

TEST_CASE("search: single doc and oracle equivalence") {
    SplitMix64 rng(53);
    auto index = build_index({{"only", mat(1, 2, {1, 0})}}, 2, Dtype::f32, Similarity::dot);
    auto hits = search(index, mat(1, 2, {0, 1}), 3);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].doc == "only");

    auto corpus = random_corpus(rng, 50, 8);
    auto big = build_index(corpus, 8, Dtype::f32, Similarity::dot);
    std::map<DocId, TokenMatrix> docs(corpus.begin(), corpus.end());
    for (int trial = 0; trial < 5; ++trial) {
        auto q = random_f32_matrix(rng, 3, 8);
        auto got = search(big, q, 10);
        auto expect = oracle::rank_docs(q, docs, false, 10);
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) {
            REQUIRE(got[i].doc == expect[i].id);
            REQUIRE(got[i].score == expect[i].score);
        }
    }

    CHECK_THROWS_AS(search(big, mat(1, 3, {1, 0, 0}), 5), Error);
}

TEST_CASE("search: fp16 storage keeps the top-k set when score gaps exceed its error") {
    // single-token docs with dot scores 1.00, 1.02, 1.04, ... (gap 0.02 each,
    // far above the ~2^-10 relative fp16 rounding error at this magnitude)
    std::vector<std::pair<DocId, TokenMatrix>> corpus;
    for (int i = 0; i < 30; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "d%03d", i);
        corpus.emplace_back(buf, mat(1, 4, {1.0 + 0.02 * i, 0.0, 0.0, 0.0}));
    }
    auto f32 = build_index(corpus, 4, Dtype::f32, Similarity::dot);
    auto f16 = build_index(corpus, 4, Dtype::f16, Similarity::dot);
    auto q = mat(1, 4, {1, 0, 0, 0});
    auto a = search(f32, q, 10);
    auto b = search(f16, q, 10);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].doc == b[i].doc);
}

TEST_CASE("rerank: equals search restricted to candidates") {
    SplitMix64 rng(54);
    auto corpus = random_corpus(rng, 30, 6);
    auto index = build_index(corpus, 6, Dtype::f32, Similarity::cosine);
    std::map<DocId, TokenMatrix> docs(corpus.begin(), corpus.end());

    auto q = random_f32_matrix(rng, 2, 6);

    SECTION("full corpus candidates match search with k = corpus size") {
        CandidateList all{"q", {}};
        for (const auto& [id, m] : docs) all.docs.push_back(id);
        auto reranked = rerank(index, q, all);
        auto searched = search(index, q, docs.size());
        REQUIRE(reranked.size() == searched.size());
        for (std::size_t i = 0; i < searched.size(); ++i) {
            CHECK(reranked[i].doc == searched[i].doc);
            CHECK(reranked[i].score == searched[i].score);
        }
    }

    SECTION("single candidate comes back with its exact score") {
        auto hits = rerank(index, q, CandidateList{"q", {"d007"}});
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].doc == "d007");
        // the oracle ranks the decoded stored entries, like search does
        std::map<DocId, TokenMatrix> just{{"d007", index.entries.at("d007")}};
        CHECK(hits[0].score == oracle::rank_docs(q, just, true, 1)[0].score);
    }

    SECTION("random candidate subsets agree with restricted brute force") {
        for (int trial = 0; trial < 5; ++trial) {
            CandidateList cands{"q", {}};
            std::map<DocId, TokenMatrix> subset;
            for (const auto& [id, m] : index.entries)
                if (rng.next_double() < 0.4) {
                    cands.docs.push_back(id);
                    subset.emplace(id, m);
                }
            if (subset.empty()) continue;
            auto got = rerank(index, q, cands);
            auto expect = oracle::rank_docs(q, subset, true, subset.size());
            REQUIRE(got.size() == expect.size());
            for (std::size_t i = 0; i < expect.size(); ++i) {
                REQUIRE(got[i].doc == expect[i].id);
                REQUIRE(got[i].score == expect[i].score);
            }
        }
    }

    SECTION("unknown candidate is named in the error") {
        CHECK_THROWS_WITH(rerank(index, q, CandidateList{"q", {"ghost"}}),
                          Catch::Matchers::ContainsSubstring("ghost"));
    }
}

TEST_CASE("two-stage consistency: candidates covering the true top-k reproduce it") {
    SplitMix64 rng(55);
    auto corpus = random_corpus(rng, 40, 5);
    auto index = build_index(corpus, 5, Dtype::f32, Similarity::dot);
    const std::size_t k = 5;
    for (int trial = 0; trial < 10; ++trial) {
        auto q = random_f32_matrix(rng, 2, 5);
        auto exact = search(index, q, k);
        CandidateList cands{"q", {}};
        for (const auto& sd : exact) cands.docs.push_back(sd.doc);
        for (const auto& [id, m] : index.entries)  // pad with extra candidates
            if (rng.next_double() < 0.3 &&
                std::find(cands.docs.begin(), cands.docs.end(), id) == cands.docs.end())
                cands.docs.push_back(id);
        auto reranked = rerank(index, q, cands);
        for (std::size_t i = 0; i < k; ++i) {
            REQUIRE(reranked[i].doc == exact[i].doc);
            REQUIRE(reranked[i].score == exact[i].score);
        }
    }
}

TEST_CASE("persisted value region matches rows*dim*dtype_size exactly") {
    auto dir = test_dir();
    SplitMix64 rng(56);
    for (Dtype dtype : {Dtype::f32, Dtype::f16}) {
        auto corpus = random_corpus(rng, 15, 7);
        auto index = build_index(corpus, 7, dtype, Similarity::dot);
        auto path = (dir / "size.mvix").string();
        save_index(index, path);
        std::string bytes = io::read_file(path);

        std::size_t values = 0, id_bytes = 0;
        for (const auto& [id, m] : index.entries) {
            values += m.rows * m.dim;
            id_bytes += id.size();
        }
        std::size_t header = 4 + 4 + 1 + 1 + 2 + 8 + 4 + detail::metadata_json(index.metadata).size();
        std::size_t record_overhead = index.entries.size() * (4 + 4) + id_bytes;
        CHECK(bytes.size() - header - record_overhead == values * dtype_size(dtype));
    }
}

TEST_CASE("embedding files: round trip and validation") {
    auto dir = test_dir();
    SplitMix64 rng(57);
    EmbeddingFile file;
    file.dtype = Dtype::f32;
    file.dim = 4;
    for (int i = 0; i < 6; ++i)
        file.items.emplace_back("e" + std::to_string(i), random_f32_matrix(rng, 2, 4));

    auto path = (dir / "emb.mve").string();
    write_embeddings(path, file);
    auto loaded = read_embeddings(path);
    REQUIRE(loaded.items.size() == file.items.size());
    CHECK(loaded.dim == file.dim);
    for (std::size_t i = 0; i < file.items.size(); ++i) {
        CHECK(loaded.items[i].first == file.items[i].first);
        CHECK(loaded.items[i].second.values == file.items[i].second.values);
    }

    io::write_file(path, "????");
    CHECK_THROWS_WITH(read_embeddings(path), Catch::Matchers::ContainsSubstring("bad magic"));
}
