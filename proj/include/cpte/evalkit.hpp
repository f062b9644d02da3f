#pragma once

// Evaluation protocols over frozen embeddings: ranked-retrieval metrics,
// linear probe, k-NN and zero-shot classification, sentence-similarity
// correlation, and multi-checkpoint tracking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpte/contrastive.hpp"
#include "cpte/encoder.hpp"
#include "cpte/vecindex.hpp"

namespace cpte {

struct QRels {
    std::map<std::string, std::set<std::string>> relevant;
};

using ResultsByQuery = std::map<std::string, RetrievalResult>;

// How to treat queries whose relevance set is empty. Skipping with a warning
// is the default convention; counting them as zero is selectable.
enum class EmptyRelPolicy { skip_with_warning, count_as_zero };

namespace detail {

inline const std::set<std::string>* rel_for(const QRels& qrels, const std::string& qid) {
    auto it = qrels.relevant.find(qid);
    return it == qrels.relevant.end() ? nullptr : &it->second;
}

}  // namespace detail

// Mean reciprocal rank of the first relevant document within the top k.
inline double mrr_at_k(const ResultsByQuery& results, const QRels& qrels, int k) {
    if (k < 1) throw std::invalid_argument("mrr_at_k: k must be >= 1");
    if (results.empty()) throw std::invalid_argument("mrr_at_k: no queries");
    double total = 0.0;
    for (const auto& [qid, ranked] : results) {
        const auto* rel = detail::rel_for(qrels, qid);
        if (rel == nullptr) throw std::invalid_argument("mrr_at_k: query '" + qid + "' missing from qrels");
        double rr = 0.0;
        const int top = std::min<int>(k, static_cast<int>(ranked.size()));
        for (int p = 0; p < top; ++p) {
            if (rel->count(ranked[p].id)) {
                rr = 1.0 / (p + 1);
                break;
            }
        }
        total += rr;
    }
    return total / static_cast<double>(results.size());
}

inline double recall_at_k(const ResultsByQuery& results, const QRels& qrels, int k,
                          EmptyRelPolicy policy = EmptyRelPolicy::skip_with_warning) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    if (results.empty()) throw std::invalid_argument("recall_at_k: no queries");
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& [qid, ranked] : results) {
        const auto* rel = detail::rel_for(qrels, qid);
        if (rel == nullptr || rel->empty()) {
            if (policy == EmptyRelPolicy::skip_with_warning) {
                std::fprintf(stderr, "warning: query '%s' has no relevant documents, skipped\n", qid.c_str());
                continue;
            }
            ++counted;
            continue;
        }
        int hits = 0;
        const int top = std::min<int>(k, static_cast<int>(ranked.size()));
        for (int p = 0; p < top; ++p) hits += rel->count(ranked[p].id) ? 1 : 0;
        total += static_cast<double>(hits) / static_cast<double>(rel->size());
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("recall_at_k: every query had an empty relevance set");
    return total / static_cast<double>(counted);
}

// Binary-gain nDCG with log2 position discount.
inline double ndcg_at_k(const ResultsByQuery& results, const QRels& qrels, int k,
                        EmptyRelPolicy policy = EmptyRelPolicy::skip_with_warning) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    if (results.empty()) throw std::invalid_argument("ndcg_at_k: no queries");
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& [qid, ranked] : results) {
        const auto* rel = detail::rel_for(qrels, qid);
        if (rel == nullptr || rel->empty()) {
            if (policy == EmptyRelPolicy::skip_with_warning) {
                std::fprintf(stderr, "warning: query '%s' has no relevant documents, skipped\n", qid.c_str());
                continue;
            }
            ++counted;
            continue;
        }
        double dcg = 0.0;
        const int top = std::min<int>(k, static_cast<int>(ranked.size()));
        for (int p = 0; p < top; ++p) {
            if (rel->count(ranked[p].id)) dcg += 1.0 / std::log2(static_cast<double>(p + 2));
        }
        double idcg = 0.0;
        const int ideal = std::min<int>(k, static_cast<int>(rel->size()));
        for (int p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p + 2));
        total += dcg / idcg;
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("ndcg_at_k: every query had an empty relevance set");
    return total / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// classification protocols
// ---------------------------------------------------------------------------

struct LabeledEmbedding {
    std::vector<double> vector;
    int label = 0;
};

struct LinearProbeOptions {
    double l2 = 1e-4;
    int steps = 500;
    double lr = 0.1;
};

// Multinomial logistic regression on frozen features: zero init, full-batch
// gradient descent, L2 penalty on the weights. Returns test accuracy.
inline double linear_probe(const std::vector<LabeledEmbedding>& train, const std::vector<LabeledEmbedding>& test,
                           LinearProbeOptions opts = {}) {
    if (train.empty() || test.empty()) throw std::invalid_argument("linear_probe: empty split");
    std::map<int, int> class_index;
    for (const LabeledEmbedding& e : train) class_index.emplace(e.label, 0);
    if (class_index.size() < 2) throw std::invalid_argument("linear_probe: need at least 2 classes in train");
    int next = 0;
    for (auto& [label, idx] : class_index) idx = next++;
    for (const LabeledEmbedding& e : test) {
        if (!class_index.count(e.label)) {
            throw std::invalid_argument("linear_probe: test label " + std::to_string(e.label) + " unseen in train");
        }
    }
    const int c = static_cast<int>(class_index.size());
    const int d = static_cast<int>(train[0].vector.size());
    for (const LabeledEmbedding& e : train) {
        if (static_cast<int>(e.vector.size()) != d) throw std::invalid_argument("linear_probe: ragged feature dims");
    }
    for (const LabeledEmbedding& e : test) {
        if (static_cast<int>(e.vector.size()) != d) throw std::invalid_argument("linear_probe: ragged feature dims");
    }
    const std::size_t n = train.size();

    std::vector<double> w(static_cast<std::size_t>(c) * d, 0.0), b(c, 0.0);
    std::vector<double> gw(w.size()), gb(b.size()), logits(c);
    for (int step = 0; step < opts.steps; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (const LabeledEmbedding& e : train) {
            const int y = class_index.at(e.label);
            double mx = -1e300;
            for (int ci = 0; ci < c; ++ci) {
                double z = b[ci];
                const double* wr = w.data() + static_cast<std::size_t>(ci) * d;
                for (int j = 0; j < d; ++j) z += wr[j] * e.vector[j];
                logits[ci] = z;
                mx = std::max(mx, z);
            }
            double denom = 0.0;
            for (int ci = 0; ci < c; ++ci) denom += std::exp(logits[ci] - mx);
            for (int ci = 0; ci < c; ++ci) {
                const double p = std::exp(logits[ci] - mx) / denom;
                const double err = p - (ci == y ? 1.0 : 0.0);
                gb[ci] += err;
                double* gr = gw.data() + static_cast<std::size_t>(ci) * d;
                for (int j = 0; j < d; ++j) gr[j] += err * e.vector[j];
            }
        }
        const double invn = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= opts.lr * (gw[i] * invn + opts.l2 * w[i]);
        for (int ci = 0; ci < c; ++ci) b[ci] -= opts.lr * gb[ci] * invn;
    }

    std::size_t correct = 0;
    for (const LabeledEmbedding& e : test) {
        int best = 0;
        double best_z = -1e300;
        for (int ci = 0; ci < c; ++ci) {
            double z = b[ci];
            const double* wr = w.data() + static_cast<std::size_t>(ci) * d;
            for (int j = 0; j < d; ++j) z += wr[j] * e.vector[j];
            if (z > best_z) {
                best_z = z;
                best = ci;
            }
        }
        if (best == class_index.at(e.label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

// Majority label among the k nearest training embeddings by cosine.
// Vote ties break toward the label with the larger summed similarity,
// then toward the lower label id.
inline int knn_classify(const std::vector<LabeledEmbedding>& train, const std::vector<double>& query, int k = 256) {
    if (train.empty()) throw std::invalid_argument("knn_classify: empty training set");
    if (k < 1 || k > static_cast<int>(train.size())) {
        throw std::invalid_argument("knn_classify: k " + std::to_string(k) + " out of range [1," +
                                    std::to_string(train.size()) + "]");
    }
    std::vector<std::pair<double, std::size_t>> scored(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) scored[i] = {cosine_sim(query, train[i].vector), i};
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::map<int, std::pair<int, double>> votes;  // label -> (count, summed sim)
    for (int i = 0; i < k; ++i) {
        auto& v = votes[train[scored[i].second].label];
        v.first += 1;
        v.second += scored[i].first;
    }
    int best_label = votes.begin()->first;
    std::pair<int, double> best = votes.begin()->second;
    for (const auto& [label, v] : votes) {
        if (v.first > best.first || (v.first == best.first && v.second > best.second)) {
            best_label = label;
            best = v;
        }
        // map iteration is ascending, so an exact (count, sum) tie keeps the
        // lower label id
    }
    return best_label;
}

struct ZeroShotLabel {
    std::string label;
    std::string description;
};

inline std::string apply_label_template(const std::string& templ, const std::string& label) {
    const std::string slot = "{label}";
    const std::size_t pos = templ.find(slot);
    if (pos == std::string::npos) {
        throw std::invalid_argument("label template must contain a {label} slot: '" + templ + "'");
    }
    std::string out = templ;
    std::size_t at = pos;
    while (at != std::string::npos) {
        out.replace(at, slot.size(), label);
        at = out.find(slot, at + label.size());
    }
    return out;
}

// Argmax of cosine over candidate label embeddings; ties keep the first.
inline std::size_t zero_shot_from_embeddings(const std::vector<double>& query,
                                             const std::vector<std::vector<double>>& label_embeddings) {
    if (label_embeddings.empty()) throw std::invalid_argument("zero_shot: no labels");
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t i = 0; i < label_embeddings.size(); ++i) {
        const double s = cosine_sim(query, label_embeddings[i]);
        if (s > best_sim) {
            best_sim = s;
            best = i;
        }
    }
    return best;
}

// Query embeds on the x side, label descriptions on the y side, mirroring
// the (query, document) training asymmetry.
inline std::string zero_shot_classify(const EmbeddingModel& model, const std::vector<ZeroShotLabel>& labels,
                                      const std::string& query_text) {
    if (labels.empty()) throw std::invalid_argument("zero_shot_classify: no labels");
    for (const ZeroShotLabel& l : labels) {
        if (l.description.empty()) {
            throw std::invalid_argument("zero_shot_classify: label '" + l.label + "' has an empty description");
        }
    }
    Embedding q = model.embed_text(query_text, Side::x);
    std::vector<std::vector<double>> embs;
    embs.reserve(labels.size());
    for (const ZeroShotLabel& l : labels) embs.push_back(model.embed_text(l.description, Side::y).values);
    return labels[zero_shot_from_embeddings(q.values, embs)].label;
}

// ---------------------------------------------------------------------------
// sentence similarity
// ---------------------------------------------------------------------------

namespace detail {

// average ranks for ties
inline std::vector<double> ranks_of(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t p = i; p <= j; ++p) ranks[order[p]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Spearman rank correlation with the average-rank convention for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
    std::vector<double> ra = detail::ranks_of(a), rb = detail::ranks_of(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw std::invalid_argument("spearman: constant series has no rank correlation");
    return cov / std::sqrt(va * vb);
}

struct SimilarityPair {
    std::string a;
    std::string b;
    double gold = 0.0;
};

// Spearman between model cosine scores (both texts embedded on the x side)
// and gold scores.
inline double sentence_similarity_eval(const EmbeddingModel& model, const std::vector<SimilarityPair>& pairs) {
    if (pairs.size() < 3) throw std::invalid_argument("sentence_similarity_eval: need at least 3 pairs");
    bool varies = false;
    for (const SimilarityPair& p : pairs) varies |= (p.gold != pairs[0].gold);
    if (!varies) throw std::invalid_argument("sentence_similarity_eval: gold scores are all equal");
    std::vector<double> scores, gold;
    scores.reserve(pairs.size());
    gold.reserve(pairs.size());
    for (const SimilarityPair& p : pairs) {
        Embedding ea = model.embed_text(p.a, Side::x);
        Embedding eb = model.embed_text(p.b, Side::x);
        scores.push_back(cosine_sim(ea.values, eb.values));
        gold.push_back(p.gold);
    }
    return spearman(scores, gold);
}

// ---------------------------------------------------------------------------
// multi-checkpoint tracking
// ---------------------------------------------------------------------------

struct TrackRow {
    std::int64_t step = 0;
    std::string suite;
    double metric = 0.0;
};

using EvalSuite = std::pair<std::string, std::function<double(const EmbeddingModel&)>>;

inline std::vector<TrackRow> track_models(const std::vector<std::pair<std::int64_t, const EmbeddingModel*>>& models,
                                          const std::vector<EvalSuite>& suites) {
    if (models.size() < 2) throw std::invalid_argument("track: need at least 2 checkpoints");
    if (suites.empty()) throw std::invalid_argument("track: need at least 1 suite");
    for (std::size_t i = 1; i < models.size(); ++i) {
        if (!(models[i].second->config == models[0].second->config)) {
            throw std::invalid_argument("track: checkpoints have incompatible encoder configs");
        }
        if (models[i].second->vocab.size() != models[0].second->vocab.size() ||
            models[i].second->vocab.max_seq_len() != models[0].second->vocab.max_seq_len()) {
            throw std::invalid_argument("track: checkpoints have incompatible vocabularies");
        }
    }
    std::vector<TrackRow> rows;
    for (const auto& [step, model] : models) {
        for (const EvalSuite& suite : suites) {
            rows.push_back(TrackRow{step, suite.first, suite.second(*model)});
        }
    }
    return rows;
}

}  // namespace cpte
