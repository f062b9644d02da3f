#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "cpte/rng.hpp"
#include "cpte/vecindex.hpp"

using namespace cpte;

namespace {

std::vector<double> unit_vector(int d, Rng& rng) {
    std::vector<double> v(d);
    double ss = 0.0;
    for (double& x : v) {
        x = rng.normal();
        ss += x * x;
    }
    const double r = std::sqrt(ss);
    for (double& x : v) x /= r;
    return v;
}

std::vector<std::pair<std::string, std::vector<double>>> random_corpus(int n, int d, Rng& rng) {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "doc%05d", i);
        out.emplace_back(buf, unit_vector(d, rng));
    }
    return out;
}

// independent O(N*d) exhaustive reference with the same tie rule
RetrievalResult brute_force(const std::vector<std::pair<std::string, std::vector<double>>>& corpus,
                            const std::vector<double>& query, int k) {
    double ss = 0.0;
    for (double v : query) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss);
    std::vector<ScoredId> all;
    for (const auto& [id, vec] : corpus) {
        double dot = 0.0;
        for (std::size_t j = 0; j < vec.size(); ++j) dot += query[j] * inv * vec[j];
        all.push_back({id, dot});
    }
    std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (static_cast<int>(all.size()) > k) all.resize(k);
    return all;
}

}  // namespace

TEST_CASE("single vector index returns that vector") {
    VectorIndex idx = VectorIndex::build({{"only", {1.0, 0.0}}}, IndexMode::flat);
    RetrievalResult r = idx.search({0.3, 0.7}, 5);
    REQUIRE(r.size() == 1);
    REQUIRE(r[0].id == "only");
}

TEST_CASE("exact query hits its own vector with score 1") {
    Rng rng(1);
    auto corpus = random_corpus(50, 8, rng);
    VectorIndex idx = VectorIndex::build(corpus, IndexMode::flat);
    RetrievalResult r = idx.search(corpus[17].second, 3);
    REQUIRE(r[0].id == corpus[17].first);
    REQUIRE_THAT(r[0].score, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("hand cosine oracle with tie broken by id") {
    std::vector<std::pair<std::string, std::vector<double>>> basis = {
        {"e1", {1, 0, 0, 0}}, {"e2", {0, 1, 0, 0}}, {"e3", {0, 0, 1, 0}}, {"e4", {0, 0, 0, 1}}};
    VectorIndex idx = VectorIndex::build(basis, IndexMode::flat);
    RetrievalResult r = idx.search({0.9, 0.1, 0.0, 0.0}, 4);
    REQUIRE(r[0].id == "e1");
    REQUIRE(r[1].id == "e2");
    REQUIRE(r[2].id == "e3");  // exact 0.0 tie with e4: ascending id
    REQUIRE(r[3].id == "e4");
    REQUIRE(r[2].score == r[3].score);
}

TEST_CASE("build validation") {
    REQUIRE_THROWS_AS(VectorIndex::build({}, IndexMode::flat), std::invalid_argument);
    REQUIRE_THROWS_AS(VectorIndex::build({{"a", {1, 0}}, {"a", {0, 1}}}, IndexMode::flat), std::invalid_argument);
    REQUIRE_THROWS_AS(VectorIndex::build({{"a", {1, 0}}, {"b", {0, 1, 0}}}, IndexMode::flat), std::invalid_argument);
    REQUIRE_THROWS_AS(VectorIndex::build({{"a", {2, 0}}}, IndexMode::flat), std::invalid_argument);
}

TEST_CASE("search validation and k > size") {
    Rng rng(2);
    auto corpus = random_corpus(5, 4, rng);
    VectorIndex idx = VectorIndex::build(corpus, IndexMode::flat);
    REQUIRE(idx.search(corpus[0].second, 100).size() == 5);
    REQUIRE_THROWS_AS(idx.search(corpus[0].second, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(idx.search({0.0, 0.0, 0.0, 0.0}, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(idx.search({1.0, 0.0}, 1), std::invalid_argument);
}

TEST_CASE("flat search equals brute force exactly, ties included") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 20 + rng.below_int(80);
        const int d = 4 + rng.below_int(12);
        auto corpus = random_corpus(n, d, rng);
        // inject exact duplicates to force score ties
        for (int dup = 0; dup < 5; ++dup) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "dup%02d", dup);
            corpus.emplace_back(buf, corpus[rng.below_int(n)].second);
        }
        VectorIndex idx = VectorIndex::build(corpus, IndexMode::flat);
        std::vector<double> q = unit_vector(d, rng);
        const int k = 1 + rng.below_int(static_cast<int>(corpus.size()));
        RetrievalResult got = idx.search(q, k);
        RetrievalResult want = brute_force(corpus, q, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            REQUIRE(got[i].id == want[i].id);
            REQUIRE(got[i].score == want[i].score);
        }
    }
}

TEST_CASE("graph search recall against flat") {
    Rng rng(4);
    const int n = 5000, d = 16, k = 10;
    auto corpus = random_corpus(n, d, rng);
    VectorIndex flat = VectorIndex::build(corpus, IndexMode::flat);
    VectorIndex graph = VectorIndex::build(corpus, IndexMode::graph);
    double overlap_sum = 0.0;
    const int n_queries = 100;
    for (int t = 0; t < n_queries; ++t) {
        std::vector<double> q = unit_vector(d, rng);
        RetrievalResult exact = flat.search(q, k);
        RetrievalResult approx = graph.search(q, k);
        int overlap = 0;
        for (const ScoredId& a : approx) {
            for (const ScoredId& e : exact) {
                if (a.id == e.id) {
                    ++overlap;
                    break;
                }
            }
        }
        overlap_sum += static_cast<double>(overlap) / k;
        // scores are always true cosines, approximate or not
        for (const ScoredId& a : approx) {
            for (const auto& [id, vec] : corpus) {
                if (id == a.id) {
                    double dot = 0.0;
                    for (int j = 0; j < d; ++j) dot += q[j] * vec[j];
                    REQUIRE_THAT(a.score, Catch::Matchers::WithinAbs(dot, 1e-6));
                }
            }
        }
    }
    REQUIRE(overlap_sum / n_queries >= 0.95);
}

TEST_CASE("graph build is deterministic for fixed seed") {
    Rng rng(5);
    auto corpus = random_corpus(300, 8, rng);
    VectorIndex a = VectorIndex::build(corpus, IndexMode::graph, GraphParams{8, 32, 7});
    VectorIndex b = VectorIndex::build(corpus, IndexMode::graph, GraphParams{8, 32, 7});
    REQUIRE(a.serialize() == b.serialize());
}

TEST_CASE("persistence round trip is byte identical and searches are read-only") {
    Rng rng(6);
    auto corpus = random_corpus(200, 8, rng);
    for (IndexMode mode : {IndexMode::flat, IndexMode::graph}) {
        VectorIndex idx = VectorIndex::build(corpus, mode, GraphParams{8, 32, 1});
        const std::string bytes = idx.serialize();
        VectorIndex loaded = VectorIndex::deserialize(bytes);
        REQUIRE(loaded.serialize() == bytes);
        // queries leave the index unchanged
        for (int t = 0; t < 10; ++t) loaded.search(unit_vector(8, rng), 5);
        REQUIRE(loaded.serialize() == bytes);
        // loaded index answers like the original
        std::vector<double> q = unit_vector(8, rng);
        RetrievalResult r1 = idx.search(q, 7);
        RetrievalResult r2 = loaded.search(q, 7);
        REQUIRE(r1.size() == r2.size());
        for (std::size_t i = 0; i < r1.size(); ++i) REQUIRE(r1[i].id == r2[i].id);
    }
}

TEST_CASE("corrupt files are rejected") {
    Rng rng(7);
    auto corpus = random_corpus(10, 4, rng);
    VectorIndex idx = VectorIndex::build(corpus, IndexMode::flat);
    std::string bytes = idx.serialize();
    SECTION("bad magic") {
        bytes[0] = 'X';
        REQUIRE_THROWS_AS(VectorIndex::deserialize(bytes), FormatError);
    }
    SECTION("bad version") {
        bytes[4] = 99;
        REQUIRE_THROWS_AS(VectorIndex::deserialize(bytes), FormatError);
    }
    SECTION("truncated") {
        REQUIRE_THROWS_AS(VectorIndex::deserialize(bytes.substr(0, bytes.size() - 8)), FormatError);
    }
}

TEST_CASE("10k vector graph build stays under the time budget") {
    Rng rng(8);
    auto corpus = random_corpus(10000, 16, rng);
    const auto t0 = std::chrono::steady_clock::now();
    VectorIndex idx = VectorIndex::build(corpus, IndexMode::graph);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE(idx.size() == 10000);
    REQUIRE(secs < 30.0);
}
