// End-to-end checks of the cpte binary: real subprocesses, real files.

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "cpte/container.hpp"
#include "cpte/data.hpp"

using namespace cpte;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(CPTE_BIN) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    std::array<char, 4096> buf;
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("cpte_cli_" + std::to_string(getpid()));
        fs::create_directories(dir);
    }
    ~Workspace() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    void write(const std::string& name, const std::string& text) const {
        std::ofstream out(path(name), std::ios::trunc);
        out << text;
    }
};

void write_tiny_dataset(const Workspace& ws) {
    SyntheticOptions opts;
    opts.n_pairs = 24;
    opts.word_len = 4;
    opts.noise_rate = 0.05;
    opts.seed = 11;
    write_pairs_jsonl(ws.path("pairs.jsonl"), make_synthetic_pairs(opts));
    ws.write("config.toml",
             "batch_size=4\n"
             "total_steps=6\n"
             "learning_rate=0.003\n"
             "seed=5\n"
             "[encoder]\n"
             "n_layers=1\n"
             "n_heads=2\n"
             "d_model=16\n"
             "d_ff=32\n"
             "max_seq_len=16\n");
}

std::string train_args(const Workspace& ws, const std::string& out_name) {
    return "train --config " + ws.path("config.toml") + " --data " + ws.path("pairs.jsonl") + " --out " +
           ws.path(out_name);
}

}  // namespace

TEST_CASE("cli end to end") {
    Workspace ws;
    write_tiny_dataset(ws);

    SECTION("print-config dumps the resolved configuration") {
        RunResult r = run(train_args(ws, "ckpt") + " --print-config");
        REQUIRE(r.code == 0);
        REQUIRE(r.out.find("batch_size=4") != std::string::npos);
        REQUIRE(r.out.find("total_steps=6") != std::string::npos);
        REQUIRE(r.out.find("d_model=16") != std::string::npos);
    }

    SECTION("unknown config keys are rejected") {
        ws.write("bad.toml", "batch_size=4\nnot_a_real_key=1\n");
        RunResult r = run("train --config " + ws.path("bad.toml") + " --data " + ws.path("pairs.jsonl") + " --out " +
                          ws.path("ckpt"));
        REQUIRE(r.code == 1);
    }

    SECTION("train, embed, index, search pipeline with byte-identical reruns") {
        RunResult t1 = run(train_args(ws, "ckpt1"));
        REQUIRE(t1.code == 0);
        REQUIRE(fs::exists(ws.path("ckpt1")));
        REQUIRE(fs::exists(ws.path("ckpt1.metrics.csv")));
        RunResult t2 = run(train_args(ws, "ckpt2"));
        REQUIRE(t2.code == 0);
        REQUIRE(read_file(ws.path("ckpt1")) == read_file(ws.path("ckpt2")));
        {
            const std::string m1 = read_file(ws.path("ckpt1.metrics.csv"));
            REQUIRE(m1.rfind("step,loss,exp_tau,grad_norm\n", 0) == 0);
            REQUIRE(m1 == read_file(ws.path("ckpt2.metrics.csv")));
        }

        // corpus from the y side of the pairs
        std::vector<PairExample> pairs = read_pairs_jsonl(ws.path("pairs.jsonl"));
        std::string corpus;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            corpus += nlohmann::json{{"id", pairs[i].pair_id}, {"text", pairs[i].y}}.dump() + "\n";
        }
        ws.write("corpus.jsonl", corpus);

        RunResult e = run("embed --ckpt " + ws.path("ckpt1") + " --in " + ws.path("corpus.jsonl") + " --side y --out " +
                          ws.path("emb.f32"));
        REQUIRE(e.code == 0);
        REQUIRE(fs::file_size(ws.path("emb.f32")) == 24 * 16 * 4);
        const nlohmann::json manifest = nlohmann::json::parse(read_file(ws.path("emb.f32.json")));
        REQUIRE(manifest.at("count").get<int>() == 24);
        REQUIRE(manifest.at("dim").get<int>() == 16);
        REQUIRE(manifest.at("dtype").get<std::string>() == "float32");

        for (const char* mode : {"flat", "graph"}) {
            RunResult ix = run("index --ckpt " + ws.path("ckpt1") + " --corpus " + ws.path("corpus.jsonl") +
                               " --mode " + mode + " --out " + ws.path(std::string("idx_") + mode));
            REQUIRE(ix.code == 0);
        }

        RunResult s1 = run("search --index " + ws.path("idx_flat") + " --ckpt " + ws.path("ckpt1") +
                           " --query \"" + pairs[3].x + "\" --k 5");
        REQUIRE(s1.code == 0);
        // five tab-separated lines, scores descending
        std::vector<double> scores;
        std::istringstream lines(s1.out);
        std::string line;
        while (std::getline(lines, line)) {
            const std::size_t tab = line.find('\t');
            REQUIRE(tab != std::string::npos);
            scores.push_back(std::stod(line.substr(tab + 1)));
        }
        REQUIRE(scores.size() == 5);
        for (std::size_t i = 1; i < scores.size(); ++i) REQUIRE(scores[i] <= scores[i - 1]);
        RunResult s2 = run("search --index " + ws.path("idx_flat") + " --ckpt " + ws.path("ckpt1") +
                           " --query \"" + pairs[3].x + "\" --k 5");
        REQUIRE(s2.out == s1.out);

        // retrieval eval over the same corpus with identity qrels
        std::string queries, qrels = "query-id\tcorpus-id\tscore\n";
        for (const PairExample& p : pairs) {
            queries += nlohmann::json{{"id", p.pair_id}, {"text", p.x}}.dump() + "\n";
            qrels += p.pair_id + "\t" + p.pair_id + "\t1\n";
        }
        ws.write("queries.jsonl", queries);
        ws.write("qrels.tsv", qrels);
        RunResult ev = run("eval-retrieval --ckpt " + ws.path("ckpt1") + " --corpus " + ws.path("corpus.jsonl") +
                           " --queries " + ws.path("queries.jsonl") + " --qrels " + ws.path("qrels.tsv") +
                           " --recall-k 5,10");
        REQUIRE(ev.code == 0);
        REQUIRE(ev.out.find("mrr@10\t") != std::string::npos);
        REQUIRE(ev.out.find("recall@5\t") != std::string::npos);
        REQUIRE(ev.out.find("recall@10\t") != std::string::npos);
        REQUIRE(ev.out.find("ndcg@10\t") != std::string::npos);

        // resume continues to a higher step count
        RunResult rs = run("train --data " + ws.path("pairs.jsonl") + " --resume " + ws.path("ckpt1") + " --out " +
                           ws.path("ckpt1") + " --total-steps 6");
        REQUIRE(rs.code == 0);
    }

    SECTION("classification and similarity evals run end to end") {
        RunResult t = run(train_args(ws, "ckpt"));
        REQUIRE(t.code == 0);

        std::string cls_train, cls_test;
        for (int i = 0; i < 10; ++i) {
            cls_train += nlohmann::json{{"text", "yes good great " + std::to_string(i)}, {"label", "pos"}}.dump() + "\n";
            cls_train += nlohmann::json{{"text", "no bad awful " + std::to_string(i)}, {"label", "neg"}}.dump() + "\n";
        }
        for (int i = 0; i < 4; ++i) {
            cls_test += nlohmann::json{{"text", "good fine " + std::to_string(i)}, {"label", "pos"}}.dump() + "\n";
            cls_test += nlohmann::json{{"text", "bad poor " + std::to_string(i)}, {"label", "neg"}}.dump() + "\n";
        }
        ws.write("cls_train.jsonl", cls_train);
        ws.write("cls_test.jsonl", cls_test);

        RunResult probe = run("eval-probe --ckpt " + ws.path("ckpt") + " --train " + ws.path("cls_train.jsonl") +
                              " --test " + ws.path("cls_test.jsonl"));
        REQUIRE(probe.code == 0);
        REQUIRE(probe.out.rfind("accuracy\t", 0) == 0);

        RunResult knn = run("eval-knn --ckpt " + ws.path("ckpt") + " --train " + ws.path("cls_train.jsonl") +
                            " --test " + ws.path("cls_test.jsonl") + " --k 5");
        REQUIRE(knn.code == 0);
        REQUIRE(knn.out.rfind("accuracy\t", 0) == 0);

        // k larger than the training set is a data error
        RunResult knn_bad = run("eval-knn --ckpt " + ws.path("ckpt") + " --train " + ws.path("cls_train.jsonl") +
                                " --test " + ws.path("cls_test.jsonl") + " --k 4096");
        REQUIRE(knn_bad.code == 2);

        ws.write("labels.jsonl",
                 nlohmann::json{{"label", "pos"}}.dump() + "\n" + nlohmann::json{{"label", "neg"}}.dump() + "\n");
        RunResult zs = run("eval-zeroshot --ckpt " + ws.path("ckpt") + " --labels " + ws.path("labels.jsonl") +
                           " --test " + ws.path("cls_test.jsonl") +
                           " --template \"this is an example of a {label} movie review.\"");
        REQUIRE(zs.code == 0);
        REQUIRE(zs.out.rfind("accuracy\t", 0) == 0);

        RunResult zs_bad = run("eval-zeroshot --ckpt " + ws.path("ckpt") + " --labels " + ws.path("labels.jsonl") +
                               " --test " + ws.path("cls_test.jsonl") + " --template \"no slot\"");
        REQUIRE(zs_bad.code == 2);

        std::string sts;
        sts += nlohmann::json{{"a", "alpha one"}, {"b", "alpha one"}, {"score", 5.0}}.dump() + "\n";
        sts += nlohmann::json{{"a", "beta two"}, {"b", "gamma three"}, {"score", 1.0}}.dump() + "\n";
        sts += nlohmann::json{{"a", "delta four"}, {"b", "delta five"}, {"score", 3.0}}.dump() + "\n";
        ws.write("sts.jsonl", sts);
        RunResult sr = run("eval-sts --ckpt " + ws.path("ckpt") + " --pairs " + ws.path("sts.jsonl"));
        REQUIRE(sr.code == 0);
        REQUIRE(sr.out.rfind("spearman\t", 0) == 0);
    }

    SECTION("mine-pairs on the fixture corpus") {
        RunResult r = run("mine-pairs --src " + std::string(CPTE_FIXTURES_DIR) + "/mining --out " +
                          ws.path("mined.jsonl"));
        REQUIRE(r.code == 0);
        std::vector<PairExample> mined = read_pairs_jsonl(ws.path("mined.jsonl"));
        REQUIRE(mined.size() == 23);
        RunResult again = run("mine-pairs --src " + std::string(CPTE_FIXTURES_DIR) + "/mining --out " +
                              ws.path("mined2.jsonl"));
        REQUIRE(again.code == 0);
        REQUIRE(read_file(ws.path("mined.jsonl")) == read_file(ws.path("mined2.jsonl")));
    }

    SECTION("track over snapshots") {
        RunResult t = run(train_args(ws, "ckpt") + " --eval-every 3");
        REQUIRE(t.code == 0);
        REQUIRE(fs::exists(ws.path("ckpt.step3")));
        REQUIRE(fs::exists(ws.path("ckpt.step6")));

        std::vector<PairExample> pairs = read_pairs_jsonl(ws.path("pairs.jsonl"));
        std::string corpus, queries, qrels = "query-id\tcorpus-id\tscore\n";
        for (const PairExample& p : pairs) {
            corpus += nlohmann::json{{"id", p.pair_id}, {"text", p.y}}.dump() + "\n";
            queries += nlohmann::json{{"id", p.pair_id}, {"text", p.x}}.dump() + "\n";
            qrels += p.pair_id + "\t" + p.pair_id + "\t1\n";
        }
        ws.write("corpus.jsonl", corpus);
        ws.write("queries.jsonl", queries);
        ws.write("qrels.tsv", qrels);

        RunResult tr = run("track --ckpts " + ws.path("ckpt.step3") + "," + ws.path("ckpt.step6") +
                           " --suites retrieval --corpus " + ws.path("corpus.jsonl") + " --queries " +
                           ws.path("queries.jsonl") + " --qrels " + ws.path("qrels.tsv"));
        REQUIRE(tr.code == 0);
        REQUIRE(tr.out.rfind("step,suite,metric\n", 0) == 0);
        REQUIRE(tr.out.find("\n3,retrieval-mrr@10,") != std::string::npos);
        REQUIRE(tr.out.find("\n6,retrieval-mrr@10,") != std::string::npos);
    }

    SECTION("ablate-batch emits one row per batch size") {
        SyntheticOptions hopts;
        hopts.n_pairs = 8;
        hopts.seed = 77;
        write_pairs_jsonl(ws.path("heldout.jsonl"), make_synthetic_pairs(hopts));
        RunResult r = run("ablate-batch --data " + ws.path("pairs.jsonl") + " --heldout " + ws.path("heldout.jsonl") +
                          " --batch-sizes 2,4 --total-steps 2 --batch-size 4 --encoder.n_layers 1" +
                          " --encoder.n_heads 2 --encoder.d_model 16 --encoder.d_ff 32 --encoder.max_seq_len 16");
        REQUIRE(r.code == 0);
        REQUIRE(r.out.rfind("batch_size\tsteps\tmrr_at_10\n", 0) == 0);
        REQUIRE(r.out.find("\n2\t4\t") != std::string::npos);
        REQUIRE(r.out.find("\n4\t2\t") != std::string::npos);
    }

    SECTION("exit codes distinguish usage from data errors") {
        REQUIRE(run("train --out x").code == 1);                                     // missing required --data
        REQUIRE(run("definitely-not-a-subcommand").code == 1);                       // bad subcommand
        RunResult missing = run("train --data " + ws.path("nope.jsonl") + " --out " + ws.path("x"));
        REQUIRE(missing.code == 2);                                                  // unreadable data file
        RunResult bad_ckpt = run("embed --ckpt " + ws.path("pairs.jsonl") + " --in " + ws.path("pairs.jsonl") +
                                 " --out " + ws.path("e.f32"));
        REQUIRE(bad_ckpt.code == 2);                                                 // not a checkpoint
    }
}
