#pragma once

// Transformer encoder producing one unit-norm embedding per input sequence:
// the last-layer hidden state at the EOS position, L2-normalized.
// Pre-layer-norm blocks, learned positional embeddings.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "cpte/tensor.hpp"
#include "cpte/tokenizer.hpp"

namespace cpte {

enum class AttentionMode { causal, bidirectional };

inline const char* attention_mode_name(AttentionMode m) {
    return m == AttentionMode::causal ? "causal" : "bidirectional";
}

inline AttentionMode attention_mode_from_name(const std::string& s) {
    if (s == "causal") return AttentionMode::causal;
    if (s == "bidirectional") return AttentionMode::bidirectional;
    throw std::invalid_argument("unknown attention mode '" + s + "'");
}

struct EncoderConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int max_seq_len = 64;
    int vocab_size = 261;
    AttentionMode attention = AttentionMode::causal;

    void validate() const {
        if (n_layers <= 0 || n_heads <= 0 || d_model <= 0 || d_ff <= 0 || max_seq_len <= 0 || vocab_size <= 0) {
            throw std::invalid_argument("encoder config: all dimensions must be positive");
        }
        if (d_model % n_heads != 0) {
            throw std::invalid_argument("encoder config: d_model " + std::to_string(d_model) +
                                        " not divisible by n_heads " + std::to_string(n_heads));
        }
        if (d_ff < d_model) {
            throw std::invalid_argument("encoder config: d_ff must be >= d_model");
        }
    }

    bool operator==(const EncoderConfig&) const = default;

    nlohmann::json to_json() const {
        return nlohmann::json{{"n_layers", n_layers},   {"n_heads", n_heads},
                              {"d_model", d_model},     {"d_ff", d_ff},
                              {"max_seq_len", max_seq_len}, {"vocab_size", vocab_size},
                              {"attention", attention_mode_name(attention)}};
    }

    static EncoderConfig from_json(const nlohmann::json& j) {
        EncoderConfig c;
        c.n_layers = j.at("n_layers").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.max_seq_len = j.at("max_seq_len").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.attention = attention_mode_from_name(j.at("attention").get<std::string>());
        c.validate();
        return c;
    }
};

struct LayerWeights {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
};

struct EncoderWeights {
    Tensor tok_emb;  // [vocab_size x d_model]
    Tensor pos_emb;  // [max_seq_len x d_model]
    std::vector<LayerWeights> layers;
    Tensor ln_f_g, ln_f_b;

    static EncoderWeights init(const EncoderConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        constexpr double kInitStd = 0.02;
        Rng rng(mix_seed(seed, 0x5eed));
        EncoderWeights w;
        w.tok_emb = Tensor::randn({cfg.vocab_size, cfg.d_model}, rng, kInitStd, true);
        w.pos_emb = Tensor::randn({cfg.max_seq_len, cfg.d_model}, rng, kInitStd, true);
        for (int l = 0; l < cfg.n_layers; ++l) {
            LayerWeights lw;
            lw.ln1_g = Tensor::from_data({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0), true);
            lw.ln1_b = Tensor::zeros({cfg.d_model}, true);
            lw.wq = Tensor::randn({cfg.d_model, cfg.d_model}, rng, kInitStd, true);
            lw.bq = Tensor::zeros({cfg.d_model}, true);
            lw.wk = Tensor::randn({cfg.d_model, cfg.d_model}, rng, kInitStd, true);
            lw.bk = Tensor::zeros({cfg.d_model}, true);
            lw.wv = Tensor::randn({cfg.d_model, cfg.d_model}, rng, kInitStd, true);
            lw.bv = Tensor::zeros({cfg.d_model}, true);
            lw.wo = Tensor::randn({cfg.d_model, cfg.d_model}, rng, kInitStd, true);
            lw.bo = Tensor::zeros({cfg.d_model}, true);
            lw.ln2_g = Tensor::from_data({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0), true);
            lw.ln2_b = Tensor::zeros({cfg.d_model}, true);
            lw.w1 = Tensor::randn({cfg.d_model, cfg.d_ff}, rng, kInitStd, true);
            lw.b1 = Tensor::zeros({cfg.d_ff}, true);
            lw.w2 = Tensor::randn({cfg.d_ff, cfg.d_model}, rng, kInitStd, true);
            lw.b2 = Tensor::zeros({cfg.d_model}, true);
            w.layers.push_back(std::move(lw));
        }
        w.ln_f_g = Tensor::from_data({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0), true);
        w.ln_f_b = Tensor::zeros({cfg.d_model}, true);
        return w;
    }

    // Stable name -> tensor listing; checkpoint manifests and the optimizer
    // both follow this order.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.emplace_back("tok_emb", tok_emb);
        out.emplace_back("pos_emb", pos_emb);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layers." + std::to_string(l) + ".";
            const LayerWeights& lw = layers[l];
            out.emplace_back(p + "ln1.g", lw.ln1_g);
            out.emplace_back(p + "ln1.b", lw.ln1_b);
            out.emplace_back(p + "attn.wq", lw.wq);
            out.emplace_back(p + "attn.bq", lw.bq);
            out.emplace_back(p + "attn.wk", lw.wk);
            out.emplace_back(p + "attn.bk", lw.bk);
            out.emplace_back(p + "attn.wv", lw.wv);
            out.emplace_back(p + "attn.bv", lw.bv);
            out.emplace_back(p + "attn.wo", lw.wo);
            out.emplace_back(p + "attn.bo", lw.bo);
            out.emplace_back(p + "ln2.g", lw.ln2_g);
            out.emplace_back(p + "ln2.b", lw.ln2_b);
            out.emplace_back(p + "ffn.w1", lw.w1);
            out.emplace_back(p + "ffn.b1", lw.b1);
            out.emplace_back(p + "ffn.w2", lw.w2);
            out.emplace_back(p + "ffn.b2", lw.b2);
        }
        out.emplace_back("ln_f.g", ln_f_g);
        out.emplace_back("ln_f.b", ln_f_b);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_tensors()) out.push_back(t);
        return out;
    }
};

// Unit-norm dense representation of one input.
struct Embedding {
    std::vector<double> values;

    int dim() const { return static_cast<int>(values.size()); }
    double norm() const {
        double ss = 0.0;
        for (double v : values) ss += v * v;
        return std::sqrt(ss);
    }
};

namespace detail {

// Additive attention mask: 0 where key j is visible to query t, -inf
// elsewhere. Keys at or beyond valid_len (padding) are never visible.
inline Tensor attention_mask(int t_total, int valid_len, AttentionMode mode) {
    Tensor mask = Tensor::zeros({t_total, t_total});
    const double ninf = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < t_total; ++t) {
        for (int j = 0; j < t_total; ++j) {
            const bool in_window = (mode == AttentionMode::causal) ? (j <= t) : true;
            const bool visible = in_window && (j < valid_len || (mode == AttentionMode::causal && j == t));
            if (!visible) mask.data()[static_cast<std::size_t>(t) * t_total + j] = ninf;
        }
    }
    return mask;
}

inline Tensor layer_norm_affine(Tape& tape, const Tensor& x, const Tensor& g, const Tensor& b) {
    return add_rowvec(tape, mul_rowvec(tape, layer_norm(tape, x), g), b);
}

inline Tensor attention_block(Tape& tape, const LayerWeights& lw, const EncoderConfig& cfg, const Tensor& h,
                              const Tensor& mask) {
    const int d_head = cfg.d_model / cfg.n_heads;
    Tensor q = add_rowvec(tape, matmul(tape, h, lw.wq), lw.bq);
    Tensor k = add_rowvec(tape, matmul(tape, h, lw.wk), lw.bk);
    Tensor v = add_rowvec(tape, matmul(tape, h, lw.wv), lw.bv);
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_heads);
    for (int i = 0; i < cfg.n_heads; ++i) {
        const int c0 = i * d_head, c1 = (i + 1) * d_head;
        Tensor qh = slice_cols(tape, q, c0, c1);
        Tensor kh = slice_cols(tape, k, c0, c1);
        Tensor vh = slice_cols(tape, v, c0, c1);
        Tensor scores = scale(tape, matmul_nt(tape, qh, kh), 1.0 / std::sqrt(static_cast<double>(d_head)));
        Tensor probs = softmax(tape, add(tape, scores, mask), 1);
        heads.push_back(matmul(tape, probs, vh));
    }
    Tensor ctx = concat_cols(tape, heads);
    return add_rowvec(tape, matmul(tape, ctx, lw.wo), lw.bo);
}

}  // namespace detail

// Hidden states for one (possibly padded) id sequence. Rows at positions
// >= valid_len are padding and must not influence rows below valid_len.
inline Tensor encoder_hidden(Tape& tape, const EncoderWeights& w, const EncoderConfig& cfg,
                             const std::vector<int>& ids, int valid_len) {
    const int t_total = static_cast<int>(ids.size());
    if (t_total == 0) throw std::invalid_argument("encoder: empty sequence");
    if (t_total > cfg.max_seq_len) {
        throw std::invalid_argument("encoder: sequence length " + std::to_string(t_total) +
                                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    if (valid_len < 1 || valid_len > t_total) {
        throw std::invalid_argument("encoder: valid_len " + std::to_string(valid_len) + " out of range");
    }
    for (int id : ids) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw std::invalid_argument("encoder: token id " + std::to_string(id) + " out of range [0," +
                                        std::to_string(cfg.vocab_size) + ")");
        }
    }
    Tensor x = add(tape, embedding_rows(tape, w.tok_emb, ids), slice_rows(tape, w.pos_emb, 0, t_total));
    Tensor mask = detail::attention_mask(t_total, valid_len, cfg.attention);
    for (const LayerWeights& lw : w.layers) {
        Tensor a = detail::attention_block(tape, lw, cfg, detail::layer_norm_affine(tape, x, lw.ln1_g, lw.ln1_b), mask);
        x = add(tape, x, a);
        Tensor h = detail::layer_norm_affine(tape, x, lw.ln2_g, lw.ln2_b);
        Tensor f = add_rowvec(tape, matmul(tape, gelu(tape, add_rowvec(tape, matmul(tape, h, lw.w1), lw.b1)), lw.w2),
                              lw.b2);
        x = add(tape, x, f);
    }
    return detail::layer_norm_affine(tape, x, w.ln_f_g, w.ln_f_b);
}

inline Tensor encoder_forward(Tape& tape, const EncoderWeights& w, const EncoderConfig& cfg,
                              const TokenSequence& seq) {
    return encoder_hidden(tape, w, cfg, seq.ids, seq.length());
}

// Differentiable path: unit-norm [1 x d_model] row for the EOS position.
// pad_to >= seq length runs the padded computation (ragged batches).
inline Tensor embed_on_tape(Tape& tape, const EncoderWeights& w, const EncoderConfig& cfg,
                            const SpecialTokens& specials, const TokenSequence& seq, int pad_to = -1) {
    if (seq.ids.empty() || seq.ids.back() != specials.eos(seq.side)) {
        throw std::invalid_argument("embed: sequence does not end with EOS_" + std::string(side_name(seq.side)));
    }
    const int len = seq.length();
    std::vector<int> ids = seq.ids;
    if (pad_to > len) ids.resize(static_cast<std::size_t>(pad_to), specials.pad);
    Tensor h = encoder_hidden(tape, w, cfg, ids, len);
    return l2_normalize_rows(tape, slice_rows(tape, h, len - 1, len));
}

inline Embedding embed(const EncoderWeights& w, const EncoderConfig& cfg, const SpecialTokens& specials,
                       const TokenSequence& seq) {
    Tape tape;
    Tensor row = embed_on_tape(tape, w, cfg, specials, seq);
    return Embedding{row.data()};
}

// All sequences padded to the longest in the batch; row i equals embed(seqs[i]).
inline Tensor embed_batch_on_tape(Tape& tape, const EncoderWeights& w, const EncoderConfig& cfg,
                                  const SpecialTokens& specials, const std::vector<TokenSequence>& seqs) {
    if (seqs.empty()) throw std::invalid_argument("embed_batch: empty sequence list");
    int t_max = 0;
    for (const TokenSequence& s : seqs) t_max = std::max(t_max, s.length());
    std::vector<Tensor> rows;
    rows.reserve(seqs.size());
    for (const TokenSequence& s : seqs) rows.push_back(embed_on_tape(tape, w, cfg, specials, s, t_max));
    return concat_rows(tape, rows);
}

inline std::vector<Embedding> embed_batch(const EncoderWeights& w, const EncoderConfig& cfg,
                                          const SpecialTokens& specials, const std::vector<TokenSequence>& seqs) {
    Tape tape;
    Tensor m = embed_batch_on_tape(tape, w, cfg, specials, seqs);
    std::vector<Embedding> out;
    out.reserve(seqs.size());
    const int d = m.cols();
    for (int i = 0; i < m.rows(); ++i) {
        Embedding e;
        e.values.assign(m.data().begin() + static_cast<std::size_t>(i) * d,
                        m.data().begin() + static_cast<std::size_t>(i + 1) * d);
        out.push_back(std::move(e));
    }
    return out;
}

// Weights + config + vocabulary; the unit every evaluation protocol consumes.
struct EmbeddingModel {
    EncoderWeights weights;
    EncoderConfig config;
    Vocabulary vocab;

    Embedding embed_text(const std::string& text, Side side) const {
        return embed(weights, config, vocab.specials(), vocab.encode(text, side));
    }

    std::vector<Embedding> embed_texts(const std::vector<std::string>& texts, Side side) const {
        std::vector<TokenSequence> seqs;
        seqs.reserve(texts.size());
        for (const std::string& t : texts) seqs.push_back(vocab.encode(t, side));
        return embed_batch(weights, config, vocab.specials(), seqs);
    }
};

}  // namespace cpte
