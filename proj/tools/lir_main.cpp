// lir command-line tool: every pipeline stage (indexing, search, reranking,
// evaluation, mining, tuple assembly, projection, benchmarks, fixtures, toy
// training) behind one executable. Machine output goes to stdout or files,
// human summaries to stderr. Exit codes: 0 success, 1 usage error, 2 data
// error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lir/lir.hpp"

namespace {

struct MiningOptions {
    std::string corpus_path;
    std::string queries_path;
    std::string qrels_path;
    std::string teacher_path;
    std::string out_path;
    lir::MiningConfig config;
    lir::Bm25Params bm25;
};

void add_mining_options(CLI::App* sub, MiningOptions& opt) {
    sub->add_option("--corpus", opt.corpus_path, "Document corpus JSONL ({\"id\",\"text\"})")
        ->required();
    sub->add_option("--queries", opt.queries_path, "Query corpus JSONL ({\"id\",\"text\"})")
        ->required();
    sub->add_option("--qrels", opt.qrels_path, "TREC qrels file (qid 0 docid rel)")->required();
    sub->add_option("--teacher", opt.teacher_path, "Teacher score file (qid docid score)")
        ->required();
    sub->add_option("--out", opt.out_path, "Output JSONL path")->required();
    sub->add_option("--threshold", opt.config.threshold_fraction,
                    "Mining threshold (fraction of the positive's teacher score)")
        ->capture_default_str();
    sub->add_flag("--absolute-threshold", opt.config.absolute_threshold,
                  "Treat --threshold as an absolute teacher-score cutoff");
    sub->add_option("--frac-model", opt.config.frac_model, "Model-mined share")
        ->capture_default_str();
    sub->add_option("--frac-bm25", opt.config.frac_bm25, "BM25-mined share")
        ->capture_default_str();
    sub->add_option("--frac-random", opt.config.frac_random, "Random share")
        ->capture_default_str();
    sub->add_option("--n-way", opt.config.n_way, "Tuple width (1 positive + n-1 negatives)")
        ->capture_default_str();
    sub->add_option("--seed", opt.config.seed, "Random seed")->capture_default_str();
    sub->add_flag("--lowercase", opt.config.lowercase,
                  "Lowercase texts during ingestion (casing ablation)");
    sub->add_option("--k1", opt.bm25.k1, "BM25 k1")->capture_default_str();
    sub->add_option("--b", opt.bm25.b, "BM25 b")->capture_default_str();
}

lir::TextCorpus load_text_corpus(const MiningOptions& opt) {
    lir::TextCorpus corpus;
    corpus.docs = lir::read_text_jsonl(opt.corpus_path);
    corpus.queries = lir::read_text_jsonl(opt.queries_path);
    corpus.check();
    return corpus;
}

std::map<lir::QueryId, lir::TokenMatrix> embeddings_as_map(const std::string& path) {
    auto file = lir::read_embeddings(path);
    std::map<std::string, lir::TokenMatrix> out;
    for (auto& [id, mat] : file.items) {
        if (!out.emplace(id, std::move(mat)).second)
            throw lir::Error(path + ": duplicate id " + id);
    }
    return out;
}

// Candidate lists: text lines `qid docid`, grouped per query in file order.
std::vector<lir::CandidateList> read_candidates(const std::string& path) {
    std::string data = lir::io::read_file(path);
    std::istringstream in(data);
    std::map<std::string, std::size_t> position;
    std::vector<lir::CandidateList> lists;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = lir::detail::split_ws(line);
        if (fields.size() != 2)
            throw lir::Error(path + ": expected 2 fields at line " + std::to_string(line_no));
        lir::check_id(fields[0], "query id");
        lir::check_id(fields[1], "doc id");
        auto it = position.find(fields[0]);
        if (it == position.end()) {
            position.emplace(fields[0], lists.size());
            lists.push_back(lir::CandidateList{fields[0], {fields[1]}});
        } else {
            lists[it->second].docs.push_back(fields[1]);
        }
    }
    return lists;
}

lir::Run rankings_to_run(std::map<lir::QueryId, std::vector<lir::ScoredDoc>> rankings,
                         const std::string& tag) {
    lir::Run run;
    run.rankings = std::move(rankings);
    run.tag = tag;
    return run;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"lir: late-interaction (multi-vector) retrieval engine"};
    app.require_subcommand(1);

    // ---- index ----
    struct {
        std::string input, out, sim = "cosine", dtype = "fp16";
        std::vector<std::string> meta;
    } index_opt;
    auto* sub_index = app.add_subcommand("index", "Build a multi-vector index from embeddings");
    sub_index->add_option("--input", index_opt.input, "Embedding file (MVE1)")->required();
    sub_index->add_option("--out", index_opt.out, "Output index path (MVIX)")->required();
    sub_index->add_option("--sim", index_opt.sim, "Similarity: cosine or dot")
        ->capture_default_str();
    sub_index->add_option("--dtype", index_opt.dtype, "Storage dtype: fp16 or fp32")
        ->capture_default_str();
    sub_index->add_option("--meta", index_opt.meta, "Extra metadata entries, key=value");
    sub_index->callback([&] {
        auto file = lir::read_embeddings(index_opt.input);
        std::map<std::string, std::string> metadata;
        metadata["sim"] = index_opt.sim;
        for (const auto& kv : index_opt.meta) {
            auto pos = kv.find('=');
            if (pos == std::string::npos || pos == 0)
                throw lir::Error("--meta expects key=value, got: " + kv);
            metadata[kv.substr(0, pos)] = kv.substr(pos + 1);
        }
        auto index = lir::build_index(file.items, file.dim, lir::parse_dtype(index_opt.dtype),
                                      lir::parse_similarity(index_opt.sim), std::move(metadata));
        lir::save_index(index, index_opt.out);
        std::cerr << "indexed " << index.entries.size() << " docs (dim " << index.dim << ", "
                  << lir::dtype_name(index.dtype) << ", " << lir::similarity_name(index.sim)
                  << ") -> " << index_opt.out << "\n";
    });

    // ---- search ----
    struct {
        std::string index, queries, run, tag = "lir";
        std::size_t k = 10;
        unsigned threads = 1;
    } search_opt;
    auto* sub_search = app.add_subcommand("search", "Exact top-k MaxSim retrieval");
    sub_search->add_option("--index", search_opt.index, "Index path")->required();
    sub_search->add_option("--queries", search_opt.queries, "Query embedding file (MVE1)")
        ->required();
    sub_search->add_option("--k", search_opt.k, "Result depth")->capture_default_str();
    sub_search->add_option("--run", search_opt.run, "Output TREC run path")->required();
    sub_search->add_option("--tag", search_opt.tag, "Run tag")->capture_default_str();
    sub_search->add_option("--threads", search_opt.threads, "Worker threads")
        ->capture_default_str();
    sub_search->callback([&] {
        auto index = lir::load_index(search_opt.index);
        auto queries = embeddings_as_map(search_opt.queries);
        auto rankings =
            lir::maxsim_batch(queries, index.entries, index.sim, search_opt.k, search_opt.threads);
        lir::write_run(rankings_to_run(std::move(rankings), search_opt.tag), search_opt.run);
        std::cerr << "searched " << queries.size() << " queries over " << index.entries.size()
                  << " docs -> " << search_opt.run << "\n";
    });

    // ---- rerank ----
    struct {
        std::string index, queries, candidates, run, tag = "lir";
    } rerank_opt;
    auto* sub_rerank = app.add_subcommand("rerank", "Rerank candidate lists by MaxSim");
    sub_rerank->add_option("--index", rerank_opt.index, "Index path")->required();
    sub_rerank->add_option("--queries", rerank_opt.queries, "Query embedding file (MVE1)")
        ->required();
    sub_rerank
        ->add_option("--candidates", rerank_opt.candidates, "Candidate file (lines: qid docid)")
        ->required();
    sub_rerank->add_option("--run", rerank_opt.run, "Output TREC run path")->required();
    sub_rerank->add_option("--tag", rerank_opt.tag, "Run tag")->capture_default_str();
    sub_rerank->callback([&] {
        auto index = lir::load_index(rerank_opt.index);
        auto queries = embeddings_as_map(rerank_opt.queries);
        auto lists = read_candidates(rerank_opt.candidates);
        std::map<lir::QueryId, std::vector<lir::ScoredDoc>> rankings;
        for (const auto& list : lists) {
            auto qit = queries.find(list.query);
            if (qit == queries.end())
                throw lir::Error("no embedding for candidate query " + list.query);
            rankings.emplace(list.query, lir::rerank(index, qit->second, list));
        }
        lir::write_run(rankings_to_run(std::move(rankings), rerank_opt.tag), rerank_opt.run);
        std::cerr << "reranked " << lists.size() << " candidate lists -> " << rerank_opt.run
                  << "\n";
    });

    // ---- eval ----
    struct {
        std::string run, qrels, gain = "linear";
        std::size_t k = 10;
        bool per_query = false;
    } eval_opt;
    auto* sub_eval = app.add_subcommand("eval", "NDCG@k of a TREC run against qrels");
    sub_eval->add_option("--run", eval_opt.run, "TREC run path")->required();
    sub_eval->add_option("--qrels", eval_opt.qrels, "TREC qrels path")->required();
    sub_eval->add_option("--k", eval_opt.k, "Cutoff")->capture_default_str();
    sub_eval->add_option("--gain", eval_opt.gain, "Gain: linear or exp")->capture_default_str();
    sub_eval->add_flag("--per-query", eval_opt.per_query, "Print one line per query");
    sub_eval->callback([&] {
        lir::Gain gain;
        if (eval_opt.gain == "linear")
            gain = lir::Gain::linear;
        else if (eval_opt.gain == "exp")
            gain = lir::Gain::exponential;
        else
            throw lir::Error("unknown gain: " + eval_opt.gain);
        auto result = lir::ndcg_at_k(lir::read_run(eval_opt.run), lir::read_qrels(eval_opt.qrels),
                                     eval_opt.k, gain);
        if (eval_opt.per_query) {
            for (const auto& [qid, v] : result.per_query) std::printf("%s %.4f\n", qid.c_str(), v);
            std::printf("all %.4f\n", result.mean);
        } else {
            std::printf("%.4f\n", result.mean);
        }
    });

    // ---- mine ----
    MiningOptions mine_opt;
    auto* sub_mine =
        app.add_subcommand("mine", "Mine hard negatives for every (query, positive) pair");
    add_mining_options(sub_mine, mine_opt);
    sub_mine->callback([&] {
        auto corpus = load_text_corpus(mine_opt);
        auto teacher = lir::read_teacher_scores(mine_opt.teacher_path);
        auto qrels = lir::read_qrels(mine_opt.qrels_path);
        auto tuples = lir::assemble_tuples(corpus, qrels, teacher, mine_opt.config, mine_opt.bm25);
        std::string out;
        for (const auto& t : tuples) {
            nlohmann::ordered_json obj;
            obj["query_id"] = t.query;
            obj["positive_id"] = t.positive;
            obj["negative_ids"] = t.negatives;
            out += obj.dump() + "\n";
        }
        lir::io::write_file(mine_opt.out_path, out);
        std::cerr << "mined negatives for " << tuples.size() << " pairs -> " << mine_opt.out_path
                  << "\n";
    });

    // ---- tuples ----
    MiningOptions tuples_opt;
    auto* sub_tuples =
        app.add_subcommand("tuples", "Assemble n-way training tuples with teacher scores");
    add_mining_options(sub_tuples, tuples_opt);
    sub_tuples->callback([&] {
        auto corpus = load_text_corpus(tuples_opt);
        auto teacher = lir::read_teacher_scores(tuples_opt.teacher_path);
        auto qrels = lir::read_qrels(tuples_opt.qrels_path);
        auto tuples =
            lir::assemble_tuples(corpus, qrels, teacher, tuples_opt.config, tuples_opt.bm25);
        lir::write_tuples(tuples, tuples_opt.out_path);
        std::cerr << "assembled " << tuples.size() << " tuples -> " << tuples_opt.out_path << "\n";
    });

    // ---- project ----
    struct {
        std::string head, save_head, input, out, out_dtype = "fp32";
        std::string init_kind;
        std::size_t d_in = 0, d_out = 0, factor = 4;
        bool residual = false;
        lir::Seed seed = 0;
    } proj_opt;
    auto* sub_project =
        app.add_subcommand("project", "Initialize or apply a token projection head");
    sub_project->add_option("--head", proj_opt.head, "Existing head file (MVPH)");
    sub_project->add_option("--init-kind", proj_opt.init_kind,
                            "Initialize a fresh head: linear or ffn2");
    sub_project->add_option("--d-in", proj_opt.d_in, "Input dim (with --init-kind)");
    sub_project->add_option("--d-out", proj_opt.d_out, "Output dim (with --init-kind)");
    sub_project->add_option("--intermediate-factor", proj_opt.factor, "FFN hidden multiplier")
        ->capture_default_str();
    sub_project->add_flag("--residual", proj_opt.residual, "Residual connection");
    sub_project->add_option("--seed", proj_opt.seed, "Init seed")->capture_default_str();
    sub_project->add_option("--save-head", proj_opt.save_head, "Write the head to this path");
    sub_project->add_option("--input", proj_opt.input, "Embeddings to project (MVE1)");
    sub_project->add_option("--out", proj_opt.out, "Projected embedding output (MVE1)");
    sub_project->add_option("--out-dtype", proj_opt.out_dtype, "Output dtype: fp32 or fp16")
        ->capture_default_str();
    sub_project->callback([&] {
        if (proj_opt.head.empty() == proj_opt.init_kind.empty())
            throw lir::Error("project: pass exactly one of --head or --init-kind");
        lir::ProjectionHead head;
        if (!proj_opt.init_kind.empty()) {
            lir::ProjectionConfig config;
            config.kind = lir::parse_head_kind(proj_opt.init_kind);
            config.d_in = proj_opt.d_in;
            config.d_out = proj_opt.d_out;
            config.intermediate_factor = proj_opt.factor;
            config.residual = proj_opt.residual;
            head = lir::init_head(config, proj_opt.seed);
        } else {
            head = lir::load_head(proj_opt.head);
        }
        if (!proj_opt.save_head.empty()) {
            lir::save_head(head, proj_opt.save_head);
            std::cerr << "saved " << lir::head_kind_name(head.config.kind) << " head ("
                      << head.config.d_in << " -> " << head.config.d_out << ") -> "
                      << proj_opt.save_head << "\n";
        }
        if (!proj_opt.input.empty() || !proj_opt.out.empty()) {
            if (proj_opt.input.empty() || proj_opt.out.empty())
                throw lir::Error("project: --input and --out go together");
            auto file = lir::read_embeddings(proj_opt.input);
            lir::EmbeddingFile projected;
            projected.dtype = lir::parse_dtype(proj_opt.out_dtype);
            projected.dim = static_cast<std::uint16_t>(head.config.d_out);
            for (const auto& [id, mat] : file.items)
                projected.items.emplace_back(id, lir::project_forward(head, mat));
            lir::write_embeddings(proj_opt.out, projected);
            std::cerr << "projected " << projected.items.size() << " items to dim "
                      << head.config.d_out << " -> " << proj_opt.out << "\n";
        }
    });

    // ---- bench-mem ----
    struct {
        lir::MemorySpec spec;
        std::string dtype = "fp16";
        bool json = false;
    } mem_opt;
    auto* sub_mem = app.add_subcommand("bench-mem", "Index memory model (exact bytes and MiB)");
    sub_mem->add_option("--docs", mem_opt.spec.n_docs, "Document count")->required();
    sub_mem->add_option("--tokens", mem_opt.spec.tokens_per_doc, "Tokens per document")
        ->required();
    sub_mem->add_option("--dim", mem_opt.spec.dim, "Vector dimension")->required();
    sub_mem->add_option("--dtype", mem_opt.dtype, "Storage dtype: fp16 or fp32")
        ->capture_default_str();
    sub_mem->add_flag("--json", mem_opt.json, "Emit the full JSON report");
    sub_mem->callback([&] {
        mem_opt.spec.dtype = lir::parse_dtype(mem_opt.dtype);
        if (mem_opt.json) {
            std::printf("%s\n", lir::memory_report(mem_opt.spec).dump().c_str());
        } else {
            std::printf("%llu\n",
                        static_cast<unsigned long long>(lir::memory_mib(mem_opt.spec)));
        }
    });

    // ---- bench-time ----
    struct {
        std::string index, queries;
        std::size_t k = 10;
        int repeats = 10;
        unsigned threads = 1;
    } time_opt;
    auto* sub_time = app.add_subcommand(
        "bench-time", "Local wall-time measurements (load, search, exhaustive scoring)");
    sub_time->add_option("--index", time_opt.index, "Index path")->required();
    sub_time->add_option("--queries", time_opt.queries, "Query embedding file (MVE1)")
        ->required();
    sub_time->add_option("--k", time_opt.k, "Result depth")->capture_default_str();
    sub_time->add_option("--repeats", time_opt.repeats, "Timed repetitions after one warm-up")
        ->capture_default_str();
    sub_time->add_option("--threads", time_opt.threads, "Worker threads")->capture_default_str();
    sub_time->callback([&] {
        auto report = lir::time_run(time_opt.index, time_opt.queries, time_opt.k,
                                    time_opt.repeats, time_opt.threads);
        auto index = lir::load_index(time_opt.index);
        auto queries = lir::read_embeddings(time_opt.queries);
        std::printf("%s\n", lir::timing_report_json(report, index.entries.size(),
                                                    queries.items.size(), time_opt.k)
                                .dump()
                                .c_str());
    });

    // ---- gen-fixture ----
    struct {
        lir::SyntheticSpec spec;
        std::string out_dir, dtype = "fp32";
    } fix_opt;
    auto* sub_fix =
        app.add_subcommand("gen-fixture", "Generate a deterministic synthetic test corpus");
    sub_fix->add_option("--out-dir", fix_opt.out_dir, "Output directory")->required();
    sub_fix->add_option("--queries", fix_opt.spec.n_queries, "Query count")
        ->capture_default_str();
    sub_fix->add_option("--docs", fix_opt.spec.n_docs, "Document count")->capture_default_str();
    sub_fix->add_option("--doc-tokens", fix_opt.spec.tokens_per_doc, "Tokens per document")
        ->capture_default_str();
    sub_fix->add_option("--query-tokens", fix_opt.spec.query_tokens, "Tokens per query")
        ->capture_default_str();
    sub_fix->add_option("--dim", fix_opt.spec.dim, "Embedding dimension")->capture_default_str();
    sub_fix->add_option("--relevant-per-query", fix_opt.spec.relevant_per_query,
                        "Relevant docs per query")
        ->capture_default_str();
    sub_fix->add_option("--noise", fix_opt.spec.noise_scale, "Perturbation scale in [0, ...)")
        ->capture_default_str();
    sub_fix->add_option("--seed", fix_opt.spec.seed, "Generator seed")->capture_default_str();
    sub_fix->add_option("--dtype", fix_opt.dtype, "Dtype of the emitted embedding files")
        ->capture_default_str();
    sub_fix->callback([&] {
        namespace fs = std::filesystem;
        auto corpus = lir::generate_corpus(fix_opt.spec);
        fs::create_directories(fix_opt.out_dir);
        auto path = [&](const char* name) { return (fs::path(fix_opt.out_dir) / name).string(); };
        lir::Dtype dtype = lir::parse_dtype(fix_opt.dtype);

        lir::EmbeddingFile docs;
        docs.dtype = dtype;
        docs.dim = static_cast<std::uint16_t>(fix_opt.spec.dim);
        docs.items = corpus.doc_embeddings;
        lir::write_embeddings(path("docs.mve"), docs);

        lir::EmbeddingFile queries;
        queries.dtype = dtype;
        queries.dim = static_cast<std::uint16_t>(fix_opt.spec.dim);
        queries.items = corpus.query_embeddings;
        lir::write_embeddings(path("queries.mve"), queries);

        lir::write_text_jsonl(corpus.texts.docs, path("corpus.jsonl"));
        lir::write_text_jsonl(corpus.texts.queries, path("queries.jsonl"));
        lir::write_qrels(corpus.qrels, path("fixture.qrels"));
        lir::write_teacher_scores(corpus.teacher, path("teacher.tsv"));
        std::cerr << "fixture with " << fix_opt.spec.n_docs << " docs / " << fix_opt.spec.n_queries
                  << " queries -> " << fix_opt.out_dir << "\n";
    });

    // ---- train-toy ----
    struct {
        std::string tuples, query_emb, doc_emb, head, head_out, trace;
        std::string init_kind = "linear";
        std::size_t d_out = 0, factor = 4;
        bool residual = false;
        lir::TrainerConfig config;
        lir::Seed init_seed = 7;
    } train_opt;
    auto* sub_train = app.add_subcommand(
        "train-toy", "Momentum-SGD training of a projection head on n-way tuples");
    sub_train->add_option("--tuples", train_opt.tuples, "Tuple JSONL path")->required();
    sub_train->add_option("--query-embeddings", train_opt.query_emb, "Query MVE1 file")
        ->required();
    sub_train->add_option("--doc-embeddings", train_opt.doc_emb, "Document MVE1 file")
        ->required();
    sub_train->add_option("--head", train_opt.head, "Initial head (MVPH); default fresh init");
    sub_train->add_option("--init-kind", train_opt.init_kind, "Fresh head kind: linear or ffn2")
        ->capture_default_str();
    sub_train->add_option("--d-out", train_opt.d_out, "Fresh head output dim");
    sub_train->add_option("--intermediate-factor", train_opt.factor, "FFN hidden multiplier")
        ->capture_default_str();
    sub_train->add_flag("--residual", train_opt.residual, "Residual connection");
    sub_train->add_option("--init-seed", train_opt.init_seed, "Fresh head init seed")
        ->capture_default_str();
    sub_train->add_option("--head-out", train_opt.head_out, "Trained head output path")
        ->required();
    sub_train->add_option("--steps", train_opt.config.steps, "Training steps")->required();
    sub_train->add_option("--batch-size", train_opt.config.batch_size, "Tuples per step")
        ->capture_default_str();
    sub_train->add_option("--lr", train_opt.config.learning_rate, "Learning rate")->required();
    sub_train->add_option("--momentum", train_opt.config.momentum, "Momentum coefficient")
        ->capture_default_str();
    sub_train->add_option("--temperature", train_opt.config.temperature, "KL temperature")
        ->capture_default_str();
    sub_train->add_option("--seed", train_opt.config.seed, "Batch shuffle seed")
        ->capture_default_str();
    sub_train->add_option("--trace", train_opt.trace, "Loss trace CSV output path");
    sub_train->callback([&] {
        auto tuples = lir::read_tuples(train_opt.tuples);
        auto query_embeddings = embeddings_as_map(train_opt.query_emb);
        auto doc_embeddings = embeddings_as_map(train_opt.doc_emb);

        lir::ProjectionHead head;
        if (!train_opt.head.empty()) {
            head = lir::load_head(train_opt.head);
        } else {
            if (train_opt.d_out == 0)
                throw lir::Error("train-toy: pass --d-out (or --head) to define the head");
            if (query_embeddings.empty()) throw lir::Error("train-toy: no query embeddings");
            lir::ProjectionConfig config;
            config.kind = lir::parse_head_kind(train_opt.init_kind);
            config.d_in = query_embeddings.begin()->second.dim;
            config.d_out = train_opt.d_out;
            config.intermediate_factor = train_opt.factor;
            config.residual = train_opt.residual;
            head = lir::init_head(config, train_opt.init_seed);
        }

        auto result = lir::train_projection_toy(head, tuples, query_embeddings, doc_embeddings,
                                                train_opt.config);
        lir::save_head(result.head, train_opt.head_out);
        if (!train_opt.trace.empty()) lir::write_loss_trace(result.loss_trace, train_opt.trace);
        std::printf("%.4f\n", result.loss_trace.back());
        std::cerr << "trained " << train_opt.config.steps << " steps; loss "
                  << result.loss_trace.front() << " -> " << result.loss_trace.back() << "; head -> "
                  << train_opt.head_out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const lir::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
