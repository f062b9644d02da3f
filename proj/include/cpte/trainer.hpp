#pragma once

// Mini-batch contrastive training with Adam, deterministic seeded data
// order, checkpointing, and the batch-size ablation runner.
//
// Checkpoints store float32 tensors. Saving commits the live training state
// to the float32 grid first, so a run that saved at step k and kept going
// follows exactly the same trajectory as one resumed from that file.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpte/container.hpp"
#include "cpte/contrastive.hpp"
#include "cpte/data.hpp"
#include "cpte/encoder.hpp"
#include "cpte/evalkit.hpp"
#include "cpte/tokenizer.hpp"
#include "cpte/vecindex.hpp"

namespace cpte {

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-8;
    int total_steps = 100;
    std::uint64_t seed = 0;
    double grad_clip_norm = 1.0;
    int eval_every = 0;  // 0 disables the periodic snapshot callback
    EncoderConfig encoder;

    void validate() const {
        encoder.validate();
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (total_steps < 1) throw std::invalid_argument("train config: total_steps must be >= 1");
        if (learning_rate <= 0) throw std::invalid_argument("train config: learning_rate must be positive");
        if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
            throw std::invalid_argument("train config: adam betas must be in [0, 1)");
        }
        if (adam_eps <= 0) throw std::invalid_argument("train config: adam_eps must be positive");
        if (grad_clip_norm <= 0) throw std::invalid_argument("train config: grad_clip_norm must be positive");
        if (eval_every < 0) throw std::invalid_argument("train config: eval_every must be >= 0");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"batch_size", batch_size},
                              {"learning_rate", learning_rate},
                              {"adam_beta1", adam_beta1},
                              {"adam_beta2", adam_beta2},
                              {"adam_eps", adam_eps},
                              {"total_steps", total_steps},
                              {"seed", seed},
                              {"grad_clip_norm", grad_clip_norm},
                              {"eval_every", eval_every},
                              {"encoder", encoder.to_json()}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.batch_size = j.at("batch_size").get<int>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.adam_beta1 = j.at("adam_beta1").get<double>();
        c.adam_beta2 = j.at("adam_beta2").get<double>();
        c.adam_eps = j.at("adam_eps").get<double>();
        c.total_steps = j.at("total_steps").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
        c.eval_every = j.at("eval_every").get<int>();
        c.encoder = EncoderConfig::from_json(j.at("encoder"));
        c.validate();
        return c;
    }
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;

    static AdamState init(const std::vector<Tensor>& params) {
        AdamState s;
        for (const Tensor& p : params) {
            s.m.push_back(Tensor::zeros(p.shape()));
            s.v.push_back(Tensor::zeros(p.shape()));
        }
        return s;
    }
};

struct StepMetrics {
    std::int64_t step = 0;
    double loss = 0.0;
    double exp_tau = 0.0;
    double grad_norm = 0.0;
};

struct Checkpoint {
    static constexpr char kMagic[5] = "CPTE";
    static constexpr std::uint32_t kVersion = 1;

    TrainConfig config;
    Vocabulary vocab;
    EncoderWeights weights;
    Temperature temperature;
    AdamState opt;
    std::int64_t step = 0;
    std::string rng_state;

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> params = weights.parameters();
        params.push_back(temperature.log_scale);
        return params;
    }

    std::vector<std::pair<std::string, Tensor>> parameter_names() const {
        auto named = weights.named_tensors();
        named.emplace_back("temperature.log_scale", temperature.log_scale);
        return named;
    }

    std::vector<std::pair<std::string, Tensor>> all_named_tensors() const {
        auto named = parameter_names();
        const std::size_t n_params = named.size();
        for (std::size_t i = 0; i < n_params; ++i) {
            named.emplace_back("adam.m." + named[i].first, opt.m[i]);
            named.emplace_back("adam.v." + named[i].first, opt.v[i]);
        }
        return named;
    }
};

inline EmbeddingModel model_of(const Checkpoint& c) { return EmbeddingModel{c.weights, c.config.encoder, c.vocab}; }

inline Checkpoint init_training(const TrainConfig& config, const Vocabulary& vocab) {
    config.validate();
    if (vocab.size() != config.encoder.vocab_size) {
        throw std::invalid_argument("vocabulary size " + std::to_string(vocab.size()) +
                                    " does not match encoder vocab_size " +
                                    std::to_string(config.encoder.vocab_size));
    }
    if (vocab.max_seq_len() != config.encoder.max_seq_len) {
        throw std::invalid_argument("vocabulary max_seq_len does not match encoder max_seq_len");
    }
    Checkpoint c;
    c.config = config;
    c.vocab = vocab;
    c.weights = EncoderWeights::init(config.encoder, config.seed);
    c.temperature = Temperature::init();
    c.opt = AdamState::init(c.parameters());
    c.step = 0;
    Rng master(mix_seed(config.seed, 0x7a1e));
    c.rng_state = master.serialize();
    return c;
}

namespace detail {

// Example order for one epoch: a pure function of (seed, epoch), so any
// position in the stream can be reconstructed from the step counter alone.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0xe9ac0000ull + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
}

inline double global_grad_norm(const std::vector<Tensor>& params) {
    double ss = 0.0;
    for (const Tensor& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) ss += g * g;
    }
    return std::sqrt(ss);
}

}  // namespace detail

// Advances training to target_step. The snapshot callback fires every
// config.eval_every steps (when nonzero); metrics rows append per step.
inline void run_training(Checkpoint& state, const std::vector<PairExample>& data, std::int64_t target_step,
                         std::vector<StepMetrics>* metrics = nullptr,
                         const std::function<void(Checkpoint&, std::int64_t)>& snapshot = nullptr) {
    const TrainConfig& cfg = state.config;
    const int m = cfg.batch_size;
    if (static_cast<int>(data.size()) < m) {
        throw std::invalid_argument("batch size " + std::to_string(m) + " exceeds dataset size " +
                                    std::to_string(data.size()));
    }
    const SpecialTokens& specials = state.vocab.specials();
    std::vector<Tensor> params = state.parameters();
    const std::size_t batches_per_epoch = data.size() / static_cast<std::size_t>(m);

    std::int64_t cached_epoch = -1;
    std::vector<std::size_t> order;
    double last_grad_norm = 0.0;

    while (state.step < target_step) {
        const std::int64_t step = state.step;  // 0-based position in the stream
        const std::int64_t epoch = step / static_cast<std::int64_t>(batches_per_epoch);
        const std::size_t slot = static_cast<std::size_t>(step % static_cast<std::int64_t>(batches_per_epoch));
        if (epoch != cached_epoch) {
            order = detail::epoch_order(cfg.seed, epoch, data.size());
            cached_epoch = epoch;
        }

        std::vector<TokenSequence> x_seqs, y_seqs;
        x_seqs.reserve(m);
        y_seqs.reserve(m);
        std::vector<TokenSequence> neg_seqs;
        for (int i = 0; i < m; ++i) {
            const PairExample& ex = data[order[slot * m + i]];
            x_seqs.push_back(state.vocab.encode(ex.x, Side::x));
            y_seqs.push_back(state.vocab.encode(ex.y, Side::y));
            for (const std::string& neg : ex.hard_negatives) {
                if (neg == ex.y) {
                    std::fprintf(stderr, "warning: hard negative identical to its positive (pair %s), kept\n",
                                 ex.pair_id.c_str());
                }
                neg_seqs.push_back(state.vocab.encode(neg, Side::y));
            }
        }
        for (const TokenSequence& s : neg_seqs) y_seqs.push_back(s);

        Tape tape;
        Tensor x_emb = embed_batch_on_tape(tape, state.weights, cfg.encoder, specials, x_seqs);
        Tensor y_emb = embed_batch_on_tape(tape, state.weights, cfg.encoder, specials, y_seqs);
        Tensor loss = symmetric_loss(tape, logit_matrix(tape, x_emb, y_emb, state.temperature));
        const double loss_val = loss.value();
        if (!std::isfinite(loss_val)) {
            throw std::runtime_error("training diverged: non-finite loss at step " + std::to_string(step + 1) +
                                     " (exp_tau=" + std::to_string(state.temperature.scale()) +
                                     ", last grad norm=" + std::to_string(last_grad_norm) + ")");
        }

        for (const Tensor& p : params) p.zero_grad();
        tape.backward(loss);

        double grad_norm = detail::global_grad_norm(params);
        if (grad_norm > cfg.grad_clip_norm) {
            const double s = cfg.grad_clip_norm / grad_norm;
            for (const Tensor& p : params) {
                for (double& g : p.grad()) g *= s;
            }
            grad_norm = cfg.grad_clip_norm;
        }
        last_grad_norm = grad_norm;

        // Adam with linear warmup over the first 10% of total_steps
        const std::int64_t warmup = std::max<std::int64_t>(1, cfg.total_steps / 10);
        const double lr =
            cfg.learning_rate * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup));
        state.opt.t += 1;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.opt.t));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.opt.t));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            std::vector<double>& w = params[pi].data();
            std::vector<double>& g = params[pi].grad();
            std::vector<double>& mm = state.opt.m[pi].data();
            std::vector<double>& vv = state.opt.v[pi].data();
            for (std::size_t j = 0; j < w.size(); ++j) {
                mm[j] = cfg.adam_beta1 * mm[j] + (1.0 - cfg.adam_beta1) * g[j];
                vv[j] = cfg.adam_beta2 * vv[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
                w[j] -= lr * (mm[j] / bc1) / (std::sqrt(vv[j] / bc2) + cfg.adam_eps);
            }
        }
        state.temperature.clamp();
        state.step += 1;

        if (metrics) metrics->push_back(StepMetrics{state.step, loss_val, state.temperature.scale(), grad_norm});
        if (snapshot && cfg.eval_every > 0 && state.step % cfg.eval_every == 0) snapshot(state, state.step);
    }
}

inline Checkpoint train(const TrainConfig& config, const std::vector<PairExample>& data,
                        std::vector<StepMetrics>* metrics = nullptr,
                        const std::function<void(Checkpoint&, std::int64_t)>& snapshot = nullptr) {
    Checkpoint state = init_training(config, Vocabulary::byte_level(config.encoder.max_seq_len));
    run_training(state, data, config.total_steps, metrics, snapshot);
    return state;
}

// ---------------------------------------------------------------------------
// checkpoint persistence (magic "CPTE")
// ---------------------------------------------------------------------------

// Serializing commits the live tensors to float32 precision; see the header
// comment. Byte output is a pure function of the state afterwards.
inline std::string serialize_checkpoint(Checkpoint& c) {
    auto named = c.all_named_tensors();
    for (auto& [name, t] : named) round_to_f32(t.data());
    std::string payload;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : named) {
        manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
        append_f32(payload, t.data());
    }
    nlohmann::json meta{{"kind", "checkpoint"},
                        {"config", c.config.to_json()},
                        {"vocab", c.vocab.to_json()},
                        {"temperature_max_scale", c.temperature.max_scale},
                        {"adam_t", c.opt.t},
                        {"step", c.step},
                        {"rng", c.rng_state},
                        {"tensors", manifest}};
    return serialize_container(Checkpoint::kMagic, Checkpoint::kVersion, meta, payload);
}

inline void save_checkpoint(Checkpoint& c, const std::string& path) {
    atomic_write_file(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint_bytes(const std::string& bytes) {
    Container container = parse_container(bytes, Checkpoint::kMagic, Checkpoint::kVersion);
    if (container.meta.value("kind", "") != "checkpoint") throw FormatError("not a checkpoint file");
    Checkpoint c;
    c.config = TrainConfig::from_json(container.meta.at("config"));
    c.vocab = Vocabulary::from_json(container.meta.at("vocab"));
    c.weights = EncoderWeights::init(c.config.encoder, 0);
    c.temperature = Temperature::init(1.0, container.meta.at("temperature_max_scale").get<double>());
    c.opt = AdamState::init(c.parameters());
    c.opt.t = container.meta.at("adam_t").get<std::int64_t>();
    c.step = container.meta.at("step").get<std::int64_t>();
    c.rng_state = container.meta.at("rng").get<std::string>();

    std::map<std::string, std::pair<std::vector<int>, std::size_t>> manifest;
    for (const auto& entry : container.meta.at("tensors")) {
        manifest[entry.at("name").get<std::string>()] = {entry.at("shape").get<std::vector<int>>(),
                                                         entry.at("offset").get<std::size_t>()};
    }
    auto named = c.all_named_tensors();
    if (named.size() != manifest.size()) {
        throw FormatError("checkpoint manifest lists " + std::to_string(manifest.size()) + " tensors, expected " +
                          std::to_string(named.size()));
    }
    for (auto& [name, t] : named) {
        auto it = manifest.find(name);
        if (it == manifest.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
        if (it->second.first != t.shape()) {
            throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second.first) +
                              ", expected " + shape_str(t.shape()));
        }
        t.data() = read_f32(container.payload, it->second.second, t.numel());
    }
    return c;
}

inline Checkpoint load_checkpoint(const std::string& path) { return load_checkpoint_bytes(read_file(path)); }

inline void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows) {
    std::string out = "step,loss,exp_tau,grad_norm\n";
    char buf[160];
    for (const StepMetrics& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step), r.loss,
                      r.exp_tau, r.grad_norm);
        out += buf;
    }
    atomic_write_file(path, out);
}

// ---------------------------------------------------------------------------
// batch-size ablation
// ---------------------------------------------------------------------------

// Held-out retrieval: x texts as queries against the y texts of the same
// split, identity relevance, flat search.
inline double heldout_mrr_at_10(const Checkpoint& c, const std::vector<PairExample>& heldout) {
    if (heldout.empty()) throw std::invalid_argument("heldout split is empty");
    EmbeddingModel model = model_of(c);
    std::vector<std::pair<std::string, std::vector<double>>> docs;
    docs.reserve(heldout.size());
    std::vector<std::string> ys;
    for (const PairExample& p : heldout) ys.push_back(p.y);
    std::vector<Embedding> y_embs = model.embed_texts(ys, Side::y);
    for (std::size_t i = 0; i < heldout.size(); ++i) docs.emplace_back(heldout[i].pair_id, y_embs[i].values);
    VectorIndex index = VectorIndex::build(docs, IndexMode::flat);

    ResultsByQuery results;
    QRels qrels;
    std::vector<std::string> xs;
    for (const PairExample& p : heldout) xs.push_back(p.x);
    std::vector<Embedding> x_embs = model.embed_texts(xs, Side::x);
    for (std::size_t i = 0; i < heldout.size(); ++i) {
        results[heldout[i].pair_id] = index.search(x_embs[i].values, 10);
        qrels.relevant[heldout[i].pair_id] = {heldout[i].pair_id};
    }
    return mrr_at_k(results, qrels, 10);
}

struct AblationRow {
    int batch_size = 0;
    std::int64_t steps = 0;
    double mrr_at_10 = 0.0;
};

// Each batch size trains from scratch on the same seed with the step count
// scaled so every run sees the same number of example pairs.
inline std::vector<AblationRow> batch_size_ablation(const TrainConfig& base, const std::vector<PairExample>& data,
                                                    const std::vector<PairExample>& heldout,
                                                    const std::vector<int>& batch_sizes) {
    if (batch_sizes.size() < 2) {
        throw std::invalid_argument("batch_size_ablation: need at least 2 batch sizes to compare");
    }
    const std::int64_t total_pairs =
        static_cast<std::int64_t>(base.total_steps) * static_cast<std::int64_t>(base.batch_size);
    std::vector<AblationRow> rows;
    for (int m : batch_sizes) {
        if (m < 1) throw std::invalid_argument("batch_size_ablation: batch sizes must be positive");
        TrainConfig cfg = base;
        cfg.batch_size = m;
        cfg.total_steps = static_cast<int>(std::max<std::int64_t>(1, total_pairs / m));
        Checkpoint ck = train(cfg, data);
        rows.push_back(AblationRow{m, ck.step, heldout_mrr_at_10(ck, heldout)});
    }
    return rows;
}

}  // namespace cpte
