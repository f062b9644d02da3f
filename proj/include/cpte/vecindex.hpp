#pragma once

// Cosine k-NN over unit-norm vectors. Flat mode scans exhaustively and is
// the correctness reference; graph mode is a hierarchical navigable
// small-world index whose approximation affects candidate selection only --
// reported scores are always true cosines. Ties break by ascending id.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "cpte/container.hpp"
#include "cpte/rng.hpp"

namespace cpte {

enum class IndexMode { flat, graph };

inline const char* index_mode_name(IndexMode m) { return m == IndexMode::flat ? "flat" : "graph"; }

inline IndexMode index_mode_from_name(const std::string& s) {
    if (s == "flat") return IndexMode::flat;
    if (s == "graph") return IndexMode::graph;
    throw std::invalid_argument("unknown index mode '" + s + "'");
}

struct GraphParams {
    int degree = 16;  // max links per node above level 0; level 0 allows 2x
    int beam = 64;    // construction and query beam width
    std::uint64_t seed = 0;
};

struct ScoredId {
    std::string id;
    double score;
};

using RetrievalResult = std::vector<ScoredId>;

class VectorIndex {
public:
    static constexpr char kMagic[5] = "CPTI";
    static constexpr std::uint32_t kVersion = 1;

    static VectorIndex build(const std::vector<std::pair<std::string, std::vector<double>>>& vectors, IndexMode mode,
                             GraphParams params = {}) {
        if (vectors.empty()) throw std::invalid_argument("index build: need at least one vector");
        VectorIndex idx;
        idx.mode_ = mode;
        idx.params_ = params;
        idx.dim_ = static_cast<int>(vectors[0].second.size());
        if (idx.dim_ == 0) throw std::invalid_argument("index build: zero-dimensional vectors");
        std::unordered_set<std::string> seen;
        idx.ids_.reserve(vectors.size());
        idx.vectors_.reserve(vectors.size() * idx.dim_);
        for (const auto& [id, vec] : vectors) {
            if (static_cast<int>(vec.size()) != idx.dim_) {
                throw std::invalid_argument("index build: vector for id '" + id + "' has dimension " +
                                            std::to_string(vec.size()) + ", expected " + std::to_string(idx.dim_));
            }
            if (!seen.insert(id).second) throw std::invalid_argument("index build: duplicate id '" + id + "'");
            double ss = 0.0;
            for (double v : vec) ss += v * v;
            if (std::abs(std::sqrt(ss) - 1.0) > 1e-6) {
                throw std::invalid_argument("index build: vector for id '" + id + "' is not unit-norm");
            }
            idx.ids_.push_back(id);
            idx.vectors_.insert(idx.vectors_.end(), vec.begin(), vec.end());
        }
        if (mode == IndexMode::graph) idx.build_graph();
        return idx;
    }

    int dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    IndexMode mode() const { return mode_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const GraphParams& params() const { return params_; }

    // k results ranked by (cosine desc, id asc). k larger than the index
    // returns everything. The query need not be normalized; scores are
    // cosines either way.
    RetrievalResult search(const std::vector<double>& query, int k) const {
        if (k < 1) throw std::invalid_argument("search: k must be >= 1");
        if (static_cast<int>(query.size()) != dim_) {
            throw std::invalid_argument("search: query dimension " + std::to_string(query.size()) + " != index " +
                                        std::to_string(dim_));
        }
        double ss = 0.0;
        for (double v : query) ss += v * v;
        if (ss == 0.0) throw std::invalid_argument("search: zero query vector");
        std::vector<double> q(query);
        const double inv = 1.0 / std::sqrt(ss);
        for (double& v : q) v *= inv;

        const int n = static_cast<int>(size());
        const int kk = std::min(k, n);
        std::vector<std::uint32_t> candidates;
        if (mode_ == IndexMode::flat) {
            candidates.resize(n);
            for (int i = 0; i < n; ++i) candidates[i] = static_cast<std::uint32_t>(i);
        } else {
            candidates = graph_candidates(q, std::max(params_.beam, kk));
        }
        std::vector<std::pair<double, std::uint32_t>> scored;
        scored.reserve(candidates.size());
        for (std::uint32_t c : candidates) scored.emplace_back(dot(q.data(), c), c);
        std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return ids_[a.second] < ids_[b.second];
        });
        RetrievalResult out;
        out.reserve(kk);
        for (int i = 0; i < kk && i < static_cast<int>(scored.size()); ++i) {
            out.push_back(ScoredId{ids_[scored[i].second], scored[i].first});
        }
        return out;
    }

    void save(const std::string& path) const { atomic_write_file(path, serialize()); }

    static VectorIndex load(const std::string& path) { return deserialize(read_file(path)); }

    std::string serialize() const {
        std::string payload;
        append_f32(payload, vectors_);
        nlohmann::json meta{{"kind", "index"},
                            {"dim", dim_},
                            {"mode", index_mode_name(mode_)},
                            {"count", ids_.size()},
                            {"ids", ids_}};
        if (mode_ == IndexMode::graph) {
            meta["params"] = {{"degree", params_.degree}, {"beam", params_.beam}, {"seed", params_.seed}};
            meta["entry"] = entry_;
            meta["max_level"] = max_level_;
            std::vector<std::uint32_t> levels(node_level_.begin(), node_level_.end());
            meta["levels_offset"] = payload.size();
            append_u32_array(payload, levels);
            std::vector<std::uint32_t> adj;
            for (std::size_t i = 0; i < links_.size(); ++i) {
                for (const auto& nbrs : links_[i]) {
                    adj.push_back(static_cast<std::uint32_t>(nbrs.size()));
                    adj.insert(adj.end(), nbrs.begin(), nbrs.end());
                }
            }
            meta["adjacency_offset"] = payload.size();
            meta["adjacency_count"] = adj.size();
            append_u32_array(payload, adj);
        }
        return serialize_container(kMagic, kVersion, meta, payload);
    }

    static VectorIndex deserialize(const std::string& bytes) {
        Container c = parse_container(bytes, kMagic, kVersion);
        if (c.meta.value("kind", "") != "index") throw FormatError("not an index file");
        VectorIndex idx;
        idx.dim_ = c.meta.at("dim").get<int>();
        idx.mode_ = index_mode_from_name(c.meta.at("mode").get<std::string>());
        idx.ids_ = c.meta.at("ids").get<std::vector<std::string>>();
        const std::size_t count = c.meta.at("count").get<std::size_t>();
        if (count != idx.ids_.size()) throw FormatError("index count disagrees with id list");
        idx.vectors_ = read_f32(c.payload, 0, count * idx.dim_);
        if (idx.mode_ == IndexMode::graph) {
            idx.params_.degree = c.meta.at("params").at("degree").get<int>();
            idx.params_.beam = c.meta.at("params").at("beam").get<int>();
            idx.params_.seed = c.meta.at("params").at("seed").get<std::uint64_t>();
            idx.entry_ = c.meta.at("entry").get<std::uint32_t>();
            idx.max_level_ = c.meta.at("max_level").get<int>();
            const std::size_t lv_off = c.meta.at("levels_offset").get<std::size_t>();
            std::vector<std::uint32_t> levels = read_u32_array(c.payload, lv_off, count);
            idx.node_level_.assign(levels.begin(), levels.end());
            const std::size_t adj_off = c.meta.at("adjacency_offset").get<std::size_t>();
            const std::size_t adj_count = c.meta.at("adjacency_count").get<std::size_t>();
            std::vector<std::uint32_t> adj = read_u32_array(c.payload, adj_off, adj_count);
            idx.links_.resize(count);
            std::size_t pos = 0;
            for (std::size_t i = 0; i < count; ++i) {
                idx.links_[i].resize(idx.node_level_[i] + 1);
                for (int lev = 0; lev <= idx.node_level_[i]; ++lev) {
                    if (pos >= adj.size()) throw FormatError("adjacency stream truncated");
                    const std::uint32_t len = adj[pos++];
                    if (pos + len > adj.size()) throw FormatError("adjacency stream truncated");
                    idx.links_[i][lev].assign(adj.begin() + pos, adj.begin() + pos + len);
                    pos += len;
                }
            }
            if (pos != adj.size()) throw FormatError("adjacency stream has trailing data");
        }
        return idx;
    }

private:
    double dot(const double* q, std::uint32_t node) const {
        const double* v = vectors_.data() + static_cast<std::size_t>(node) * dim_;
        double acc = 0.0;
        for (int j = 0; j < dim_; ++j) acc += q[j] * v[j];
        return acc;
    }

    double dot_nodes(std::uint32_t a, std::uint32_t b) const {
        return dot(vectors_.data() + static_cast<std::size_t>(a) * dim_, b);
    }

    int max_degree(int level) const { return level == 0 ? 2 * params_.degree : params_.degree; }

    // Beam search within one level. Returns up to ef nodes ordered by
    // (similarity desc, node asc); fully deterministic.
    std::vector<std::uint32_t> search_layer(const double* q, std::uint32_t entry, int ef, int level) const {
        struct Scored {
            double sim;
            std::uint32_t node;
        };
        auto closer = [](const Scored& a, const Scored& b) {
            if (a.sim != b.sim) return a.sim > b.sim;
            return a.node < b.node;
        };
        auto farther = [closer](const Scored& a, const Scored& b) { return closer(b, a); };
        std::vector<Scored> frontier{{dot(q, entry), entry}};  // heap: closest on top
        std::vector<Scored> best{frontier[0]};                 // sorted closest-first, capped at ef
        std::vector<char> visited(size(), 0);
        visited[entry] = 1;

        while (!frontier.empty()) {
            std::pop_heap(frontier.begin(), frontier.end(), farther);
            const Scored cur = frontier.back();
            frontier.pop_back();
            if (static_cast<int>(best.size()) >= ef && closer(best.back(), cur)) break;
            for (std::uint32_t nb : links_[cur.node][level]) {
                if (visited[nb]) continue;
                visited[nb] = 1;
                const Scored cand{dot(q, nb), nb};
                if (static_cast<int>(best.size()) < ef || closer(cand, best.back())) {
                    frontier.push_back(cand);
                    std::push_heap(frontier.begin(), frontier.end(), farther);
                    best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
                    if (static_cast<int>(best.size()) > ef) best.pop_back();
                }
            }
        }
        std::vector<std::uint32_t> out;
        out.reserve(best.size());
        for (const Scored& s : best) out.push_back(s.node);
        return out;
    }

    std::vector<std::uint32_t> graph_candidates(const std::vector<double>& q, int ef) const {
        std::uint32_t ep = entry_;
        for (int level = max_level_; level > 0; --level) {
            bool improved = true;
            double best = dot(q.data(), ep);
            while (improved) {
                improved = false;
                for (std::uint32_t nb : links_[ep][level]) {
                    const double s = dot(q.data(), nb);
                    if (s > best || (s == best && nb < ep)) {
                        best = s;
                        ep = nb;
                        improved = true;
                    }
                }
            }
        }
        return search_layer(q.data(), ep, ef, 0);
    }

    void prune_links(std::uint32_t node, int level) {
        auto& nbrs = links_[node][level];
        const int maxd = max_degree(level);
        if (static_cast<int>(nbrs.size()) <= maxd) return;
        std::vector<std::pair<double, std::uint32_t>> scored;
        scored.reserve(nbrs.size());
        for (std::uint32_t nb : nbrs) scored.emplace_back(dot_nodes(node, nb), nb);
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        nbrs.clear();
        for (int i = 0; i < maxd; ++i) nbrs.push_back(scored[i].second);
    }

    void build_graph() {
        const std::size_t n = size();
        links_.assign(n, {});
        node_level_.assign(n, 0);
        Rng rng(mix_seed(params_.seed, 0x1dce));
        const double ml = 1.0 / std::log(static_cast<double>(params_.degree));
        for (std::size_t i = 0; i < n; ++i) {
            double u = rng.uniform01();
            if (u <= 0.0) u = 1e-300;
            node_level_[i] = static_cast<int>(-std::log(u) * ml);
            links_[i].resize(node_level_[i] + 1);
        }
        entry_ = 0;
        max_level_ = node_level_[0];
        const int ef_build = std::max(params_.beam, params_.degree);
        for (std::uint32_t i = 1; i < n; ++i) {
            const double* q = vectors_.data() + static_cast<std::size_t>(i) * dim_;
            std::uint32_t ep = entry_;
            for (int level = max_level_; level > node_level_[i]; --level) {
                bool improved = true;
                double best = dot(q, ep);
                while (improved) {
                    improved = false;
                    for (std::uint32_t nb : links_[ep][level]) {
                        const double s = dot(q, nb);
                        if (s > best || (s == best && nb < ep)) {
                            best = s;
                            ep = nb;
                            improved = true;
                        }
                    }
                }
            }
            for (int level = std::min(max_level_, node_level_[i]); level >= 0; --level) {
                std::vector<std::uint32_t> cands = search_layer(q, ep, ef_build, level);
                const int maxd = max_degree(level);
                int taken = 0;
                for (std::uint32_t c : cands) {
                    if (taken >= maxd) break;
                    links_[i][level].push_back(c);
                    links_[c][level].push_back(i);
                    prune_links(c, level);
                    ++taken;
                }
                if (!cands.empty()) ep = cands.front();
            }
            if (node_level_[i] > max_level_) {
                max_level_ = node_level_[i];
                entry_ = i;
            }
        }
    }

    int dim_ = 0;
    IndexMode mode_ = IndexMode::flat;
    GraphParams params_;
    std::vector<std::string> ids_;
    std::vector<double> vectors_;  // row-major, unit rows
    // graph state
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] -> neighbors
    std::vector<int> node_level_;
    std::uint32_t entry_ = 0;
    int max_level_ = 0;
};

}  // namespace cpte
