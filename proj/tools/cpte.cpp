// cpte: train, embed, index, search, and evaluate contrastive text embeddings.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error.
// Logs go to stderr; results go to stdout or the declared output paths.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cpte/contrastive.hpp"
#include "cpte/data.hpp"
#include "cpte/encoder.hpp"
#include "cpte/evalkit.hpp"
#include "cpte/tokenizer.hpp"
#include "cpte/trainer.hpp"
#include "cpte/vecindex.hpp"

namespace {

using namespace cpte;

EmbeddingModel load_model(const std::string& ckpt_path) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    return model_of(ck);
}

// label strings -> dense ids by sorted order, then embed texts as x-side features
std::vector<LabeledEmbedding> embed_labeled(const EmbeddingModel& model, const std::vector<LabeledText>& rows,
                                            std::map<std::string, int>& label_ids) {
    for (const LabeledText& r : rows) label_ids.emplace(r.label, 0);
    int next = 0;
    for (auto& [label, id] : label_ids) id = next++;
    std::vector<std::string> texts;
    texts.reserve(rows.size());
    for (const LabeledText& r : rows) texts.push_back(r.text);
    std::vector<Embedding> embs = model.embed_texts(texts, Side::x);
    std::vector<LabeledEmbedding> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back(LabeledEmbedding{std::move(embs[i].values), label_ids.at(rows[i].label)});
    }
    return out;
}

VectorIndex build_corpus_index(const EmbeddingModel& model, const std::vector<IdText>& corpus, IndexMode mode,
                               const GraphParams& params) {
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const IdText& row : corpus) texts.push_back(row.text);
    std::vector<Embedding> embs = model.embed_texts(texts, Side::y);
    std::vector<std::pair<std::string, std::vector<double>>> entries;
    entries.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) entries.emplace_back(corpus[i].id, std::move(embs[i].values));
    return VectorIndex::build(entries, mode, params);
}

std::string format_config(const TrainConfig& cfg) {
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof(buf),
                  "batch_size=%d\nlearning_rate=%.17g\nadam_beta1=%.17g\nadam_beta2=%.17g\nadam_eps=%.17g\n"
                  "total_steps=%d\nseed=%llu\ngrad_clip_norm=%.17g\neval_every=%d\n\n[encoder]\n",
                  cfg.batch_size, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.total_steps,
                  static_cast<unsigned long long>(cfg.seed), cfg.grad_clip_norm, cfg.eval_every);
    out += buf;
    std::snprintf(buf, sizeof(buf), "n_layers=%d\nn_heads=%d\nd_model=%d\nd_ff=%d\nmax_seq_len=%d\nattention=%s\n",
                  cfg.encoder.n_layers, cfg.encoder.n_heads, cfg.encoder.d_model, cfg.encoder.d_ff,
                  cfg.encoder.max_seq_len, attention_mode_name(cfg.encoder.attention));
    out += buf;
    return out;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
    std::vector<int> out;
    for (const std::string& part : split_csv(s)) {
        try {
            out.push_back(std::stoi(part));
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string(what) + ": bad integer '" + part + "'");
        }
    }
    return out;
}

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainCli {
    CLI::App* cmd = nullptr;
    TrainConfig cfg;
    std::string config_path, data_path, out_path, metrics_path, resume_path;
    std::string attention = "causal";
    bool print_config = false;
};

void add_train_options(CLI::App* cmd, TrainCli& t) {
    t.cmd = cmd;
    cmd->add_option("--config", t.config_path, "TOML config file; command-line flags override it");
    cmd->add_option("--batch-size,--batch_size", t.cfg.batch_size, "examples per contrastive batch");
    cmd->add_option("--learning-rate,--learning_rate", t.cfg.learning_rate, "peak Adam learning rate");
    cmd->add_option("--adam-beta1,--adam_beta1", t.cfg.adam_beta1, "Adam beta1");
    cmd->add_option("--adam-beta2,--adam_beta2", t.cfg.adam_beta2, "Adam beta2");
    cmd->add_option("--adam-eps,--adam_eps", t.cfg.adam_eps, "Adam epsilon");
    cmd->add_option("--total-steps,--total_steps", t.cfg.total_steps, "optimizer steps to run");
    cmd->add_option("--seed", t.cfg.seed, "RNG seed");
    cmd->add_option("--grad-clip-norm,--grad_clip_norm", t.cfg.grad_clip_norm, "global gradient norm clip");
    cmd->add_option("--eval-every,--eval_every", t.cfg.eval_every, "snapshot cadence in steps (0 = off)");
    cmd->add_option("--encoder.n_layers", t.cfg.encoder.n_layers, "transformer layers");
    cmd->add_option("--encoder.n_heads", t.cfg.encoder.n_heads, "attention heads");
    cmd->add_option("--encoder.d_model", t.cfg.encoder.d_model, "model width");
    cmd->add_option("--encoder.d_ff", t.cfg.encoder.d_ff, "feed-forward width");
    cmd->add_option("--encoder.max_seq_len", t.cfg.encoder.max_seq_len, "token budget incl. delimiters");
    cmd->add_option("--encoder.attention", t.attention, "causal|bidirectional");
}

// TOML-style key/value with [sections]. Command-line flags win over file
// values; unknown keys are rejected.
void apply_config_file(TrainCli& t) {
    if (t.config_path.empty()) return;
    std::ifstream in(t.config_path);
    if (!in) throw ConfigError("cannot open config file '" + t.config_path + "'");

    auto flag_given = [&](const std::string& name) { return t.cmd->get_option(name)->count() > 0; };
    auto strip = [](std::string s) {
        const std::size_t b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const std::size_t e = s.find_last_not_of(" \t\r");
        s = s.substr(b, e - b + 1);
        if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
            s = s.substr(1, s.size() - 2);
        }
        return s;
    };

    std::string section, line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = strip(line.substr(1, line.size() - 2));
            if (section != "encoder") {
                throw ConfigError(t.config_path + ":" + std::to_string(lineno) + ": unknown section [" + section +
                                  "]");
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(t.config_path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;
        try {
            if (full == "batch_size") {
                if (!flag_given("--batch-size")) t.cfg.batch_size = std::stoi(value);
            } else if (full == "learning_rate") {
                if (!flag_given("--learning-rate")) t.cfg.learning_rate = std::stod(value);
            } else if (full == "adam_beta1") {
                if (!flag_given("--adam-beta1")) t.cfg.adam_beta1 = std::stod(value);
            } else if (full == "adam_beta2") {
                if (!flag_given("--adam-beta2")) t.cfg.adam_beta2 = std::stod(value);
            } else if (full == "adam_eps") {
                if (!flag_given("--adam-eps")) t.cfg.adam_eps = std::stod(value);
            } else if (full == "total_steps") {
                if (!flag_given("--total-steps")) t.cfg.total_steps = std::stoi(value);
            } else if (full == "seed") {
                if (!flag_given("--seed")) t.cfg.seed = std::stoull(value);
            } else if (full == "grad_clip_norm") {
                if (!flag_given("--grad-clip-norm")) t.cfg.grad_clip_norm = std::stod(value);
            } else if (full == "eval_every") {
                if (!flag_given("--eval-every")) t.cfg.eval_every = std::stoi(value);
            } else if (full == "encoder.n_layers") {
                if (!flag_given("--encoder.n_layers")) t.cfg.encoder.n_layers = std::stoi(value);
            } else if (full == "encoder.n_heads") {
                if (!flag_given("--encoder.n_heads")) t.cfg.encoder.n_heads = std::stoi(value);
            } else if (full == "encoder.d_model") {
                if (!flag_given("--encoder.d_model")) t.cfg.encoder.d_model = std::stoi(value);
            } else if (full == "encoder.d_ff") {
                if (!flag_given("--encoder.d_ff")) t.cfg.encoder.d_ff = std::stoi(value);
            } else if (full == "encoder.max_seq_len") {
                if (!flag_given("--encoder.max_seq_len")) t.cfg.encoder.max_seq_len = std::stoi(value);
            } else if (full == "encoder.attention") {
                if (!flag_given("--encoder.attention")) t.attention = value;
            } else {
                throw ConfigError(t.config_path + ":" + std::to_string(lineno) + ": unknown key '" + full + "'");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(t.config_path + ":" + std::to_string(lineno) + ": bad value '" + value + "' for '" +
                              full + "'");
        }
    }
}

int run_train(TrainCli& t) {
    apply_config_file(t);
    t.cfg.encoder.attention = attention_mode_from_name(t.attention);
    Vocabulary vocab = Vocabulary::byte_level(t.cfg.encoder.max_seq_len);
    t.cfg.encoder.vocab_size = vocab.size();
    if (t.print_config) {
        std::fputs(format_config(t.cfg).c_str(), stdout);
        return 0;
    }
    std::vector<PairExample> data = read_pairs_jsonl(t.data_path);
    if (t.metrics_path.empty()) t.metrics_path = t.out_path + ".metrics.csv";

    Checkpoint state;
    if (!t.resume_path.empty()) {
        state = load_checkpoint(t.resume_path);
        std::fprintf(stderr, "resumed from %s at step %lld\n", t.resume_path.c_str(),
                     static_cast<long long>(state.step));
    } else {
        state = init_training(t.cfg, vocab);
    }
    std::vector<StepMetrics> metrics;
    auto snapshot = [&](Checkpoint& c, std::int64_t step) {
        const std::string path = t.out_path + ".step" + std::to_string(step);
        save_checkpoint(c, path);
        std::fprintf(stderr, "snapshot: %s\n", path.c_str());
    };
    run_training(state, data, state.config.total_steps, &metrics,
                 state.config.eval_every > 0 ? std::function<void(Checkpoint&, std::int64_t)>(snapshot) : nullptr);
    save_checkpoint(state, t.out_path);
    write_metrics_csv(t.metrics_path, metrics);
    if (!metrics.empty()) {
        std::fprintf(stderr, "trained to step %lld, final loss %.6f\n", static_cast<long long>(state.step),
                     metrics.back().loss);
    }
    return 0;
}

int run_embed(const std::string& ckpt, const std::string& in_path, const std::string& side_name,
              const std::string& out_path) {
    EmbeddingModel model = load_model(ckpt);
    const Side side = side_from_name(side_name);
    std::vector<IdText> rows = read_corpus_jsonl(in_path);
    std::vector<std::string> texts;
    std::vector<std::string> ids;
    for (IdText& r : rows) {
        texts.push_back(std::move(r.text));
        ids.push_back(std::move(r.id));
    }
    std::vector<Embedding> embs = model.embed_texts(texts, side);
    std::string blob;
    for (const Embedding& e : embs) append_f32(blob, e.values);
    atomic_write_file(out_path, blob);
    nlohmann::json manifest{{"count", embs.size()},
                            {"dim", model.config.d_model},
                            {"dtype", "float32"},
                            {"order", "row-major"},
                            {"side", side_name},
                            {"ids", ids}};
    atomic_write_file(out_path + ".json", manifest.dump(2) + "\n");
    std::fprintf(stderr, "embedded %zu texts (dim %d) -> %s\n", embs.size(), model.config.d_model, out_path.c_str());
    return 0;
}

int run_index(const std::string& ckpt, const std::string& corpus_path, const std::string& mode_name,
              const std::string& out_path, int degree, int beam, std::uint64_t seed) {
    EmbeddingModel model = load_model(ckpt);
    std::vector<IdText> corpus = read_corpus_jsonl(corpus_path);
    VectorIndex index =
        build_corpus_index(model, corpus, index_mode_from_name(mode_name), GraphParams{degree, beam, seed});
    index.save(out_path);
    std::fprintf(stderr, "indexed %zu documents (%s) -> %s\n", index.size(), mode_name.c_str(), out_path.c_str());
    return 0;
}

int run_search(const std::string& index_path, const std::string& ckpt, const std::string& query, int k) {
    VectorIndex index = VectorIndex::load(index_path);
    EmbeddingModel model = load_model(ckpt);
    Embedding q = model.embed_text(query, Side::x);
    for (const ScoredId& hit : index.search(q.values, k)) {
        std::printf("%s\t%.6f\n", hit.id.c_str(), hit.score);
    }
    return 0;
}

int run_eval_retrieval(const std::string& ckpt, const std::string& corpus_path, const std::string& queries_path,
                       const std::string& qrels_path, const std::string& mode_name, int mrr_k,
                       const std::string& recall_ks, int ndcg_k, const std::string& empty_rel, std::uint64_t seed) {
    EmbeddingModel model = load_model(ckpt);
    std::vector<IdText> corpus = read_corpus_jsonl(corpus_path);
    std::vector<IdText> queries = read_corpus_jsonl(queries_path);
    QRels qrels = read_qrels_tsv(qrels_path);

    std::set<std::string> corpus_ids;
    for (const IdText& d : corpus) corpus_ids.insert(d.id);
    for (const auto& [qid, rel] : qrels.relevant) {
        for (const std::string& did : rel) {
            if (!corpus_ids.count(did)) {
                throw DataError("qrels references doc id '" + did + "' absent from the corpus");
            }
        }
    }
    for (const IdText& q : queries) {
        if (!qrels.relevant.count(q.id)) qrels.relevant[q.id] = {};
    }

    const EmptyRelPolicy policy =
        empty_rel == "zero" ? EmptyRelPolicy::count_as_zero : EmptyRelPolicy::skip_with_warning;
    std::vector<int> recall_list = parse_int_list(recall_ks, "--recall-k");
    int k_max = std::max(mrr_k, ndcg_k);
    for (int k : recall_list) k_max = std::max(k_max, k);

    VectorIndex index = build_corpus_index(model, corpus, index_mode_from_name(mode_name), GraphParams{16, 64, seed});
    ResultsByQuery results;
    std::vector<std::string> qtexts;
    for (const IdText& q : queries) qtexts.push_back(q.text);
    std::vector<Embedding> qembs = model.embed_texts(qtexts, Side::x);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        results[queries[i].id] = index.search(qembs[i].values, k_max);
    }

    std::printf("mrr@%d\t%.6f\n", mrr_k, mrr_at_k(results, qrels, mrr_k));
    for (int k : recall_list) std::printf("recall@%d\t%.6f\n", k, recall_at_k(results, qrels, k, policy));
    std::printf("ndcg@%d\t%.6f\n", ndcg_k, ndcg_at_k(results, qrels, ndcg_k, policy));
    return 0;
}

int run_eval_probe(const std::string& ckpt, const std::string& train_path, const std::string& test_path, double l2,
                   int steps, double lr) {
    EmbeddingModel model = load_model(ckpt);
    std::map<std::string, int> label_ids;
    std::vector<LabeledEmbedding> train = embed_labeled(model, read_labeled_jsonl(train_path), label_ids);
    std::vector<LabeledEmbedding> test = embed_labeled(model, read_labeled_jsonl(test_path), label_ids);
    const double acc = linear_probe(train, test, LinearProbeOptions{l2, steps, lr});
    std::printf("accuracy\t%.6f\n", acc);
    return 0;
}

int run_eval_knn(const std::string& ckpt, const std::string& train_path, const std::string& test_path, int k) {
    EmbeddingModel model = load_model(ckpt);
    std::map<std::string, int> label_ids;
    std::vector<LabeledEmbedding> train = embed_labeled(model, read_labeled_jsonl(train_path), label_ids);
    std::vector<LabeledText> test_rows = read_labeled_jsonl(test_path);
    std::vector<LabeledEmbedding> test = embed_labeled(model, test_rows, label_ids);
    std::size_t correct = 0;
    for (const LabeledEmbedding& e : test) {
        if (knn_classify(train, e.vector, k) == e.label) ++correct;
    }
    std::printf("accuracy\t%.6f\n", static_cast<double>(correct) / static_cast<double>(test.size()));
    return 0;
}

int run_eval_zeroshot(const std::string& ckpt, const std::string& labels_path, const std::string& test_path,
                      const std::string& templ) {
    EmbeddingModel model = load_model(ckpt);
    std::vector<ZeroShotLabel> labels;
    {
        std::ifstream in(labels_path);
        if (!in) throw DataError("cannot open '" + labels_path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(labels_path + ":" + std::to_string(lineno) + ": invalid json: " + e.what());
            }
            ZeroShotLabel l;
            l.label = j.at("label").get<std::string>();
            l.description = j.value("description", l.label);
            labels.push_back(std::move(l));
        }
    }
    if (labels.empty()) throw DataError(labels_path + ": no labels");
    if (!templ.empty()) {
        for (ZeroShotLabel& l : labels) l.description = apply_label_template(templ, l.label);
    }
    std::vector<LabeledText> test = read_labeled_jsonl(test_path);
    std::size_t correct = 0;
    for (const LabeledText& row : test) {
        if (zero_shot_classify(model, labels, row.text) == row.label) ++correct;
    }
    std::printf("accuracy\t%.6f\n", static_cast<double>(correct) / static_cast<double>(test.size()));
    return 0;
}

int run_eval_sts(const std::string& ckpt, const std::string& pairs_path) {
    EmbeddingModel model = load_model(ckpt);
    const double rho = sentence_similarity_eval(model, read_similarity_jsonl(pairs_path));
    std::printf("spearman\t%.6f\n", rho);
    return 0;
}

int run_ablate(TrainCli& t, const std::string& heldout_path, const std::string& batch_sizes_csv,
               const std::string& out_path) {
    apply_config_file(t);
    t.cfg.encoder.attention = attention_mode_from_name(t.attention);
    t.cfg.encoder.vocab_size = Vocabulary::byte_level(t.cfg.encoder.max_seq_len).size();
    std::vector<PairExample> data = read_pairs_jsonl(t.data_path);
    std::vector<PairExample> heldout = read_pairs_jsonl(heldout_path);
    std::vector<int> batch_sizes = parse_int_list(batch_sizes_csv, "--batch-sizes");
    std::vector<AblationRow> rows = batch_size_ablation(t.cfg, data, heldout, batch_sizes);
    std::string table = "batch_size\tsteps\tmrr_at_10\n";
    char buf[96];
    for (const AblationRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d\t%lld\t%.6f\n", r.batch_size, static_cast<long long>(r.steps),
                      r.mrr_at_10);
        table += buf;
    }
    std::fputs(table.c_str(), stdout);
    if (!out_path.empty()) atomic_write_file(out_path, table);
    return 0;
}

int run_mine(const std::string& src, const std::string& out_path) {
    std::vector<std::string> paths;
    if (std::filesystem::is_directory(src)) {
        for (const auto& entry : std::filesystem::recursive_directory_iterator(src)) {
            if (!entry.is_regular_file()) continue;
            const std::string p = entry.path().string();
            if (p.ends_with(".py") || p.ends_with(".js")) paths.push_back(p);
        }
        std::sort(paths.begin(), paths.end());
    } else {
        paths.push_back(src);
    }
    MineStats stats;
    std::vector<MinedPair> mined = mine_code_pairs(paths, &stats);
    std::vector<PairExample> pairs;
    pairs.reserve(mined.size());
    std::map<std::string, int> per_file;
    for (const MinedPair& m : mined) {
        PairExample p;
        p.x = m.docstring;
        p.y = m.code;
        const int idx = per_file[m.source_path]++;
        p.pair_id = std::filesystem::path(m.source_path).filename().string() + "#" + std::to_string(idx);
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw DataError("no documented functions found under '" + src + "'");
    write_pairs_jsonl(out_path, pairs);
    std::fprintf(stderr, "mined %zu pairs from %zu files (%zu skipped) -> %s\n", pairs.size(), stats.files_processed,
                 stats.files_skipped, out_path.c_str());
    return 0;
}

int run_track(const std::string& ckpts_csv, const std::string& suites_csv, const std::string& corpus_path,
              const std::string& queries_path, const std::string& qrels_path, const std::string& pairs_path,
              const std::string& out_path) {
    std::vector<std::string> ckpt_paths = split_csv(ckpts_csv);
    std::vector<Checkpoint> checkpoints;
    for (const std::string& p : ckpt_paths) checkpoints.push_back(load_checkpoint(p));
    std::vector<EmbeddingModel> owned;
    owned.reserve(checkpoints.size());
    for (Checkpoint& c : checkpoints) owned.push_back(model_of(c));
    std::vector<std::pair<std::int64_t, const EmbeddingModel*>> models;
    for (std::size_t i = 0; i < owned.size(); ++i) models.emplace_back(checkpoints[i].step, &owned[i]);

    std::vector<EvalSuite> suites;
    for (const std::string& name : split_csv(suites_csv)) {
        if (name == "retrieval") {
            if (corpus_path.empty() || queries_path.empty() || qrels_path.empty()) {
                throw std::invalid_argument("track: retrieval suite needs --corpus, --queries and --qrels");
            }
            auto corpus = read_corpus_jsonl(corpus_path);
            auto queries = read_corpus_jsonl(queries_path);
            auto qrels = read_qrels_tsv(qrels_path);
            suites.emplace_back("retrieval-mrr@10", [corpus, queries, qrels](const EmbeddingModel& m) {
                VectorIndex index = build_corpus_index(m, corpus, IndexMode::flat, GraphParams{});
                ResultsByQuery results;
                for (const IdText& q : queries) {
                    results[q.id] = index.search(m.embed_text(q.text, Side::x).values, 10);
                }
                return mrr_at_k(results, qrels, 10);
            });
        } else if (name == "sts") {
            if (pairs_path.empty()) throw std::invalid_argument("track: sts suite needs --pairs");
            auto pairs = read_similarity_jsonl(pairs_path);
            suites.emplace_back("sts-spearman",
                                [pairs](const EmbeddingModel& m) { return sentence_similarity_eval(m, pairs); });
        } else {
            throw std::invalid_argument("track: unknown suite '" + name + "' (expected retrieval or sts)");
        }
    }
    std::vector<TrackRow> rows = track_models(models, suites);
    std::string csv = "step,suite,metric\n";
    char buf[128];
    for (const TrackRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%s,%.6f\n", static_cast<long long>(r.step), r.suite.c_str(), r.metric);
        csv += buf;
    }
    std::fputs(csv.c_str(), stdout);
    if (!out_path.empty()) atomic_write_file(out_path, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contrastive text/code embeddings: training, search and evaluation"};
    app.require_subcommand(1);

    TrainCli train_cli;
    CLI::App* train_cmd = app.add_subcommand("train", "train an embedding model on (x, y) pairs");
    add_train_options(train_cmd, train_cli);
    train_cmd->add_option("--data", train_cli.data_path, "training pairs jsonl")->required();
    train_cmd->add_option("--out", train_cli.out_path, "output checkpoint path")->required();
    train_cmd->add_option("--metrics", train_cli.metrics_path, "metrics csv path (default <out>.metrics.csv)");
    train_cmd->add_option("--resume", train_cli.resume_path, "resume from this checkpoint");
    train_cmd->add_flag("--print-config", train_cli.print_config, "print the resolved config and exit");

    std::string e_ckpt, e_in, e_side = "x", e_out;
    CLI::App* embed_cmd = app.add_subcommand("embed", "embed texts to a raw float32 matrix + json manifest");
    embed_cmd->add_option("--ckpt", e_ckpt)->required();
    embed_cmd->add_option("--in", e_in, "jsonl with {\"text\", \"id\"?}")->required();
    embed_cmd->add_option("--side", e_side, "x|y");
    embed_cmd->add_option("--out", e_out)->required();

    std::string i_ckpt, i_corpus, i_mode = "flat", i_out;
    int i_degree = 16, i_beam = 64;
    std::uint64_t i_seed = 0;
    CLI::App* index_cmd = app.add_subcommand("index", "embed a corpus (y side) and build a vector index");
    index_cmd->add_option("--ckpt", i_ckpt)->required();
    index_cmd->add_option("--corpus", i_corpus, "jsonl with {\"id\", \"text\"}")->required();
    index_cmd->add_option("--mode", i_mode, "flat|graph");
    index_cmd->add_option("--out", i_out)->required();
    index_cmd->add_option("--degree", i_degree, "graph degree");
    index_cmd->add_option("--beam", i_beam, "graph beam width");
    index_cmd->add_option("--seed", i_seed, "graph construction seed");

    std::string s_index, s_ckpt, s_query;
    int s_k = 10;
    CLI::App* search_cmd = app.add_subcommand("search", "k nearest documents for a query string");
    search_cmd->add_option("--index", s_index)->required();
    search_cmd->add_option("--ckpt", s_ckpt)->required();
    search_cmd->add_option("--query", s_query)->required();
    search_cmd->add_option("--k", s_k)->check(CLI::PositiveNumber);

    std::string r_ckpt, r_corpus, r_queries, r_qrels, r_mode = "flat", r_recall = "20,100", r_empty = "skip";
    int r_mrr_k = 10, r_ndcg_k = 10;
    std::uint64_t r_seed = 0;
    CLI::App* retr_cmd = app.add_subcommand("eval-retrieval", "MRR/Recall/nDCG over a corpus+queries+qrels triple");
    retr_cmd->add_option("--ckpt", r_ckpt)->required();
    retr_cmd->add_option("--corpus", r_corpus)->required();
    retr_cmd->add_option("--queries", r_queries)->required();
    retr_cmd->add_option("--qrels", r_qrels)->required();
    retr_cmd->add_option("--mode", r_mode, "flat|graph");
    retr_cmd->add_option("--mrr-k", r_mrr_k);
    retr_cmd->add_option("--recall-k", r_recall, "comma-separated k list");
    retr_cmd->add_option("--ndcg-k", r_ndcg_k);
    retr_cmd->add_option("--empty-rel", r_empty, "skip|zero: queries with no relevant docs");
    retr_cmd->add_option("--seed", r_seed, "graph construction seed");

    std::string p_ckpt, p_train, p_test;
    double p_l2 = 1e-4, p_lr = 0.1;
    int p_steps = 500;
    CLI::App* probe_cmd = app.add_subcommand("eval-probe", "linear probe accuracy on frozen embeddings");
    probe_cmd->add_option("--ckpt", p_ckpt)->required();
    probe_cmd->add_option("--train", p_train)->required();
    probe_cmd->add_option("--test", p_test)->required();
    probe_cmd->add_option("--l2", p_l2);
    probe_cmd->add_option("--steps", p_steps);
    probe_cmd->add_option("--lr", p_lr);

    std::string k_ckpt, k_train, k_test;
    int k_k = 256;
    CLI::App* knn_cmd = app.add_subcommand("eval-knn", "k-NN classification accuracy");
    knn_cmd->add_option("--ckpt", k_ckpt)->required();
    knn_cmd->add_option("--train", k_train)->required();
    knn_cmd->add_option("--test", k_test)->required();
    knn_cmd->add_option("--k", k_k)->check(CLI::PositiveNumber);

    std::string z_ckpt, z_labels, z_test, z_template;
    CLI::App* zs_cmd = app.add_subcommand("eval-zeroshot", "zero-shot accuracy from label descriptions");
    zs_cmd->add_option("--ckpt", z_ckpt)->required();
    zs_cmd->add_option("--labels", z_labels, "jsonl with {\"label\", \"description\"?}")->required();
    zs_cmd->add_option("--test", z_test)->required();
    zs_cmd->add_option("--template", z_template, "label template with a {label} slot");

    std::string st_ckpt, st_pairs;
    CLI::App* sts_cmd = app.add_subcommand("eval-sts", "Spearman between cosine scores and gold similarity");
    sts_cmd->add_option("--ckpt", st_ckpt)->required();
    sts_cmd->add_option("--pairs", st_pairs, "jsonl with {\"a\", \"b\", \"score\"}")->required();

    TrainCli ablate_cli;
    std::string a_heldout, a_batch_sizes, a_out;
    CLI::App* ablate_cmd = app.add_subcommand("ablate-batch", "batch-size ablation at equal total pairs seen");
    add_train_options(ablate_cmd, ablate_cli);
    ablate_cmd->add_option("--data", ablate_cli.data_path)->required();
    ablate_cmd->add_option("--heldout", a_heldout, "held-out pairs jsonl for retrieval eval")->required();
    ablate_cmd->add_option("--batch-sizes", a_batch_sizes, "comma-separated batch sizes")->required();
    ablate_cmd->add_option("--out", a_out, "also write the table to this path");

    std::string m_src, m_out;
    CLI::App* mine_cmd = app.add_subcommand("mine-pairs", "extract (docstring, code) pairs from source files");
    mine_cmd->add_option("--src", m_src, "source directory or file")->required();
    mine_cmd->add_option("--out", m_out, "output pairs jsonl")->required();

    std::string t_ckpts, t_suites = "retrieval", t_corpus, t_queries, t_qrels, t_pairs, t_out;
    CLI::App* track_cmd = app.add_subcommand("track", "evaluate several checkpoints and emit a step/metric table");
    track_cmd->add_option("--ckpts", t_ckpts, "comma-separated checkpoint paths")->required();
    track_cmd->add_option("--suites", t_suites, "comma-separated: retrieval,sts");
    track_cmd->add_option("--corpus", t_corpus);
    track_cmd->add_option("--queries", t_queries);
    track_cmd->add_option("--qrels", t_qrels);
    track_cmd->add_option("--pairs", t_pairs);
    track_cmd->add_option("--out", t_out, "also write the csv to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) return run_train(train_cli);
        if (embed_cmd->parsed()) return run_embed(e_ckpt, e_in, e_side, e_out);
        if (index_cmd->parsed()) return run_index(i_ckpt, i_corpus, i_mode, i_out, i_degree, i_beam, i_seed);
        if (search_cmd->parsed()) return run_search(s_index, s_ckpt, s_query, s_k);
        if (retr_cmd->parsed()) {
            return run_eval_retrieval(r_ckpt, r_corpus, r_queries, r_qrels, r_mode, r_mrr_k, r_recall, r_ndcg_k,
                                      r_empty, r_seed);
        }
        if (probe_cmd->parsed()) return run_eval_probe(p_ckpt, p_train, p_test, p_l2, p_steps, p_lr);
        if (knn_cmd->parsed()) return run_eval_knn(k_ckpt, k_train, k_test, k_k);
        if (zs_cmd->parsed()) return run_eval_zeroshot(z_ckpt, z_labels, z_test, z_template);
        if (sts_cmd->parsed()) return run_eval_sts(st_ckpt, st_pairs);
        if (ablate_cmd->parsed()) return run_ablate(ablate_cli, a_heldout, a_batch_sizes, a_out);
        if (mine_cmd->parsed()) return run_mine(m_src, m_out);
        if (track_cmd->parsed()) {
            return run_track(t_ckpts, t_suites, t_corpus, t_queries, t_qrels, t_pairs, t_out);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
