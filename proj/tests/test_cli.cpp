#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "lir/lir.hpp"

namespace {

namespace fs = std::filesystem;

struct CommandResult {
    int exit_code = -1;
    std::string out;
};

std::string cli_path() {
    const char* env = std::getenv("LIR_CLI");
    REQUIRE(env != nullptr);
    return env;
}

CommandResult run_command(const std::string& args) {
    std::string cmd = cli_path() + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CommandResult result;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.out.append(buf, n);
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "lir_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string fixture_args(const fs::path& dir, unsigned seed, const char* noise = "0.0") {
    return "gen-fixture --out-dir " + dir.string() +
           " --queries 6 --docs 40 --doc-tokens 5 --query-tokens 3 --dim 12"
           " --relevant-per-query 2 --noise " +
           noise + " --seed " + std::to_string(seed);
}

}  // namespace

TEST_CASE("cli: full pipeline on a zero-noise fixture evaluates to 1.0000") {
    auto dir = fresh_dir("pipeline");
    REQUIRE(run_command(fixture_args(dir, 21)).exit_code == 0);
    for (const char* name :
         {"docs.mve", "queries.mve", "corpus.jsonl", "queries.jsonl", "fixture.qrels",
          "teacher.tsv"})
        REQUIRE(fs::exists(dir / name));

    auto index = run_command("index --input " + (dir / "docs.mve").string() + " --out " +
                             (dir / "idx.mvix").string() + " --sim cosine --dtype fp16");
    REQUIRE(index.exit_code == 0);

    auto search = run_command("search --index " + (dir / "idx.mvix").string() + " --queries " +
                              (dir / "queries.mve").string() + " --k 10 --run " +
                              (dir / "out.run").string());
    REQUIRE(search.exit_code == 0);

    auto run_file = lir::read_run((dir / "out.run").string());
    REQUIRE(run_file.rankings.size() == 6);

    auto eval = run_command("eval --run " + (dir / "out.run").string() + " --qrels " +
                            (dir / "fixture.qrels").string() + " --k 10");
    REQUIRE(eval.exit_code == 0);
    CHECK(eval.out == "1.0000\n");
}

TEST_CASE("cli: bench-mem prints the exact MiB figure") {
    auto result = run_command("bench-mem --docs 10000 --tokens 300 --dim 48 --dtype fp16");
    REQUIRE(result.exit_code == 0);
    CHECK(result.out == "275\n");

    auto json = run_command("bench-mem --docs 10000 --tokens 300 --dim 48 --dtype fp16 --json");
    REQUIRE(json.exit_code == 0);
    CHECK(json.out.find("\"bytes\":288000000") != std::string::npos);
}

TEST_CASE("cli: exit codes distinguish usage and data errors") {
    CHECK(run_command("no-such-subcommand").exit_code == 1);
    CHECK(run_command("bench-mem --docs 10 --tokens 10 --dim 4 --no-such-flag").exit_code == 1);
    CHECK(run_command("").exit_code == 1);  // a subcommand is required
    CHECK(run_command("--help").exit_code == 0);
    CHECK(run_command("search --help").exit_code == 0);

    auto data_error = run_command("eval --run /nonexistent.run --qrels /nonexistent.qrels --k 10");
    CHECK(data_error.exit_code == 2);
}

TEST_CASE("cli: search output is byte-identical across runs and thread counts") {
    auto dir = fresh_dir("idempotent");
    REQUIRE(run_command(fixture_args(dir, 33, "0.2")).exit_code == 0);
    REQUIRE(run_command("index --input " + (dir / "docs.mve").string() + " --out " +
                        (dir / "idx.mvix").string() + " --sim cosine --dtype fp16")
                .exit_code == 0);

    auto base_cmd = "search --index " + (dir / "idx.mvix").string() + " --queries " +
                    (dir / "queries.mve").string() + " --k 7 --run ";
    REQUIRE(run_command(base_cmd + (dir / "a.run").string()).exit_code == 0);
    REQUIRE(run_command(base_cmd + (dir / "b.run").string()).exit_code == 0);
    REQUIRE(run_command(base_cmd + (dir / "c.run").string() + " --threads 4").exit_code == 0);

    auto a = lir::io::read_file((dir / "a.run").string());
    CHECK(a == lir::io::read_file((dir / "b.run").string()));
    CHECK(a == lir::io::read_file((dir / "c.run").string()));

    // rebuilding the index reproduces it byte for byte
    REQUIRE(run_command("index --input " + (dir / "docs.mve").string() + " --out " +
                        (dir / "idx2.mvix").string() + " --sim cosine --dtype fp16")
                .exit_code == 0);
    CHECK(lir::io::read_file((dir / "idx.mvix").string()) ==
          lir::io::read_file((dir / "idx2.mvix").string()));
}

TEST_CASE("cli: rerank restricted to a candidate file") {
    auto dir = fresh_dir("rerank");
    REQUIRE(run_command(fixture_args(dir, 44, "0.1")).exit_code == 0);
    REQUIRE(run_command("index --input " + (dir / "docs.mve").string() + " --out " +
                        (dir / "idx.mvix").string() + " --sim cosine --dtype fp32")
                .exit_code == 0);

    std::string candidates;
    candidates += "q00000 d00000\nq00000 d00001\nq00000 d00007\n";
    candidates += "q00001 d00002\nq00001 d00003\n";
    lir::io::write_file((dir / "cands.txt").string(), candidates);

    auto rerank = run_command("rerank --index " + (dir / "idx.mvix").string() + " --queries " +
                              (dir / "queries.mve").string() + " --candidates " +
                              (dir / "cands.txt").string() + " --run " +
                              (dir / "rr.run").string());
    REQUIRE(rerank.exit_code == 0);
    auto run = lir::read_run((dir / "rr.run").string());
    REQUIRE(run.rankings.size() == 2);
    CHECK(run.rankings.at("q00000").size() == 3);
    CHECK(run.rankings.at("q00001").size() == 2);
}

TEST_CASE("cli: mining and tuple assembly produce aligned JSONL") {
    auto dir = fresh_dir("tuples");
    REQUIRE(run_command(fixture_args(dir, 55, "0.2")).exit_code == 0);

    std::string shared = " --corpus " + (dir / "corpus.jsonl").string() + " --queries " +
                         (dir / "queries.jsonl").string() + " --qrels " +
                         (dir / "fixture.qrels").string() + " --teacher " +
                         (dir / "teacher.tsv").string() + " --n-way 8 --seed 9";

    auto mine = run_command("mine" + shared + " --out " + (dir / "negs.jsonl").string());
    REQUIRE(mine.exit_code == 0);

    auto tuples = run_command("tuples" + shared + " --out " + (dir / "tuples.jsonl").string());
    REQUIRE(tuples.exit_code == 0);

    auto parsed = lir::read_tuples((dir / "tuples.jsonl").string());
    REQUIRE(parsed.size() == 12);  // 6 queries x 2 positives
    for (const auto& t : parsed) {
        CHECK(t.negatives.size() == 7);
        CHECK(t.teacher_scores.size() == 8);
    }

    // identical seeds give identical bytes
    auto again = run_command("tuples" + shared + " --out " + (dir / "tuples2.jsonl").string());
    REQUIRE(again.exit_code == 0);
    CHECK(lir::io::read_file((dir / "tuples.jsonl").string()) ==
          lir::io::read_file((dir / "tuples2.jsonl").string()));
}

TEST_CASE("cli: projection head init and application") {
    auto dir = fresh_dir("project");
    REQUIRE(run_command(fixture_args(dir, 66)).exit_code == 0);

    auto init = run_command("project --init-kind ffn2 --d-in 12 --d-out 6 --residual --seed 5"
                            " --save-head " +
                            (dir / "head.mvph").string());
    REQUIRE(init.exit_code == 0);

    auto apply = run_command("project --head " + (dir / "head.mvph").string() + " --input " +
                             (dir / "docs.mve").string() + " --out " +
                             (dir / "proj.mve").string());
    REQUIRE(apply.exit_code == 0);

    auto projected = lir::read_embeddings((dir / "proj.mve").string());
    CHECK(projected.dim == 6);
    REQUIRE(projected.items.size() == 40);

    CHECK(run_command("project --init-kind linear --head x.mvph").exit_code == 2);
}

TEST_CASE("cli: toy training writes a head and a loss trace") {
    auto dir = fresh_dir("train");
    REQUIRE(run_command(fixture_args(dir, 77, "0.2")).exit_code == 0);

    std::string shared = " --corpus " + (dir / "corpus.jsonl").string() + " --queries " +
                         (dir / "queries.jsonl").string() + " --qrels " +
                         (dir / "fixture.qrels").string() + " --teacher " +
                         (dir / "teacher.tsv").string() + " --n-way 4 --seed 9";
    REQUIRE(run_command("tuples" + shared + " --out " + (dir / "tuples.jsonl").string())
                .exit_code == 0);

    auto train = run_command(
        "train-toy --tuples " + (dir / "tuples.jsonl").string() + " --query-embeddings " +
        (dir / "queries.mve").string() + " --doc-embeddings " + (dir / "docs.mve").string() +
        " --init-kind linear --d-out 6 --head-out " + (dir / "trained.mvph").string() +
        " --steps 3 --batch-size 12 --lr 0.1 --seed 1 --trace " + (dir / "trace.csv").string());
    REQUIRE(train.exit_code == 0);
    CHECK(fs::exists(dir / "trained.mvph"));

    auto trace = lir::io::read_file((dir / "trace.csv").string());
    CHECK(trace.rfind("step,loss\n", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 4);  // header + 3 steps

    auto head = lir::load_head((dir / "trained.mvph").string());
    CHECK(head.config.d_out == 6);
}
