#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "cpte/rng.hpp"
#include "cpte/tokenizer.hpp"

using namespace cpte;

TEST_CASE("encode wraps content in side delimiters") {
    Vocabulary v = Vocabulary::byte_level(64);
    TokenSequence s = v.encode("ab", Side::x);
    REQUIRE(s.ids == std::vector<int>{256, 'a', 'b', 257});
    REQUIRE(s.side == Side::x);
}

TEST_CASE("sides differ only in delimiters") {
    Vocabulary v = Vocabulary::byte_level(64);
    TokenSequence sx = v.encode("hello", Side::x);
    TokenSequence sy = v.encode("hello", Side::y);
    REQUIRE(sx.ids.size() == sy.ids.size());
    REQUIRE(sx.ids.front() != sy.ids.front());
    REQUIRE(sx.ids.back() != sy.ids.back());
    for (std::size_t i = 1; i + 1 < sx.ids.size(); ++i) REQUIRE(sx.ids[i] == sy.ids[i]);
}

TEST_CASE("truncation keeps the prefix and re-appends EOS") {
    Vocabulary v = Vocabulary::byte_level(64);
    std::string big(1000, 'z');
    TokenSequence s = v.encode(big, Side::x);
    REQUIRE(s.ids.size() == 64);
    REQUIRE(s.ids.front() == v.specials().sos_x);
    REQUIRE(s.ids.back() == v.specials().eos_x);
    for (std::size_t i = 1; i + 1 < s.ids.size(); ++i) REQUIRE(s.ids[i] == 'z');
}

TEST_CASE("empty text is rejected") {
    Vocabulary v = Vocabulary::byte_level(64);
    REQUIRE_THROWS_AS(v.encode("", Side::x), std::invalid_argument);
}

TEST_CASE("decode round trip") {
    Vocabulary v = Vocabulary::byte_level(64);
    REQUIRE(v.decode(v.encode("hello", Side::x)) == "hello");
    REQUIRE(v.decode(v.encode("h\xc3\xa9llo", Side::y)) == "h\xc3\xa9llo");  // multi-byte preserved
}

TEST_CASE("decode rejects malformed sequences") {
    Vocabulary v = Vocabulary::byte_level(64);
    TokenSequence s = v.encode("abc", Side::x);
    SECTION("missing EOS") {
        s.ids.pop_back();
        REQUIRE_THROWS_AS(v.decode(s), std::invalid_argument);
    }
    SECTION("wrong side delimiters") {
        s.side = Side::y;
        REQUIRE_THROWS_AS(v.decode(s), std::invalid_argument);
    }
    SECTION("delimiter id inside content") {
        s.ids[1] = v.specials().pad;
        REQUIRE_THROWS_AS(v.decode(s), std::invalid_argument);
    }
}

TEST_CASE("round trip property over random byte strings") {
    Vocabulary v = Vocabulary::byte_level(64);
    Rng rng(123);
    for (int trial = 0; trial < 500; ++trial) {
        const int len = 1 + rng.below_int(62);
        std::string s;
        for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(rng.below_int(256)));
        const Side side = (trial % 2 == 0) ? Side::x : Side::y;
        TokenSequence seq = v.encode(s, side);
        REQUIRE(v.decode(seq) == s);
        // no content id collides with a reserved id
        for (std::size_t i = 1; i + 1 < seq.ids.size(); ++i) {
            REQUIRE(seq.ids[i] < Vocabulary::kContentIds);
        }
    }
}

TEST_CASE("delimiter ids are pairwise distinct and above content range") {
    Vocabulary v = Vocabulary::byte_level(64);
    const SpecialTokens& t = v.specials();
    std::vector<int> ids = {t.sos_x, t.eos_x, t.sos_y, t.eos_y, t.pad};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        REQUIRE(ids[i] >= Vocabulary::kContentIds);
        REQUIRE(ids[i] < v.size());
        for (std::size_t j = i + 1; j < ids.size(); ++j) REQUIRE(ids[i] != ids[j]);
    }
}

TEST_CASE("vocabulary json round trip") {
    Vocabulary v = Vocabulary::byte_level(48);
    Vocabulary w = Vocabulary::from_json(v.to_json());
    REQUIRE(w.max_seq_len() == 48);
    REQUIRE(w.size() == v.size());
    REQUIRE(w.specials().eos_y == v.specials().eos_y);
}
