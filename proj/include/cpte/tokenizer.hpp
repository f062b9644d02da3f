#pragma once

// Byte-level tokenizer with side-specific sequence delimiters. Each input
// side gets its own start/end ids so queries and documents never share
// boundary tokens.

#include <string>
#include <string_view>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace cpte {

enum class Side { x, y };

inline const char* side_name(Side s) { return s == Side::x ? "x" : "y"; }

inline Side side_from_name(std::string_view s) {
    if (s == "x") return Side::x;
    if (s == "y") return Side::y;
    throw std::invalid_argument("unknown side '" + std::string(s) + "' (expected x or y)");
}

struct SpecialTokens {
    int sos_x = 256;
    int eos_x = 257;
    int sos_y = 258;
    int eos_y = 259;
    int pad = 260;

    int sos(Side s) const { return s == Side::x ? sos_x : sos_y; }
    int eos(Side s) const { return s == Side::x ? eos_x : eos_y; }
};

struct TokenSequence {
    std::vector<int> ids;
    Side side = Side::x;

    int length() const { return static_cast<int>(ids.size()); }
};

// 256 content ids (identity byte map) plus 5 reserved delimiter/pad ids.
class Vocabulary {
public:
    static constexpr int kContentIds = 256;
    static constexpr int kReservedIds = 5;

    static Vocabulary byte_level(int max_seq_len = 64) {
        if (max_seq_len < 3) {
            throw std::invalid_argument("max_seq_len must be at least 3 (SOS + 1 content byte + EOS)");
        }
        Vocabulary v;
        v.max_seq_len_ = max_seq_len;
        return v;
    }

    int size() const { return kContentIds + kReservedIds; }
    int max_seq_len() const { return max_seq_len_; }
    const SpecialTokens& specials() const { return specials_; }

    TokenSequence encode(std::string_view text, Side side) const {
        if (text.empty()) throw std::invalid_argument("encode: empty text has no embedding");
        TokenSequence seq;
        seq.side = side;
        const std::size_t budget = static_cast<std::size_t>(max_seq_len_) - 2;
        const std::size_t n = std::min(text.size(), budget);
        seq.ids.reserve(n + 2);
        seq.ids.push_back(specials_.sos(side));
        for (std::size_t i = 0; i < n; ++i) {
            seq.ids.push_back(static_cast<int>(static_cast<unsigned char>(text[i])));
        }
        seq.ids.push_back(specials_.eos(side));
        return seq;
    }

    std::string decode(const TokenSequence& seq) const {
        if (seq.ids.size() < 2) throw std::invalid_argument("decode: sequence too short to carry delimiters");
        if (seq.ids.front() != specials_.sos(seq.side)) {
            throw std::invalid_argument("decode: sequence does not start with SOS_" + std::string(side_name(seq.side)));
        }
        if (seq.ids.back() != specials_.eos(seq.side)) {
            throw std::invalid_argument("decode: sequence does not end with EOS_" + std::string(side_name(seq.side)));
        }
        std::string out;
        out.reserve(seq.ids.size() - 2);
        for (std::size_t i = 1; i + 1 < seq.ids.size(); ++i) {
            const int id = seq.ids[i];
            if (id < 0 || id >= kContentIds) {
                throw std::invalid_argument("decode: non-content id " + std::to_string(id) + " inside sequence");
            }
            out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        }
        return out;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"type", "byte"},
                              {"size", size()},
                              {"max_seq_len", max_seq_len_},
                              {"sos_x", specials_.sos_x},
                              {"eos_x", specials_.eos_x},
                              {"sos_y", specials_.sos_y},
                              {"eos_y", specials_.eos_y},
                              {"pad", specials_.pad}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        if (j.at("type").get<std::string>() != "byte") {
            throw std::runtime_error("vocabulary: unsupported type '" + j.at("type").get<std::string>() + "'");
        }
        Vocabulary v = byte_level(j.at("max_seq_len").get<int>());
        v.specials_.sos_x = j.at("sos_x").get<int>();
        v.specials_.eos_x = j.at("eos_x").get<int>();
        v.specials_.sos_y = j.at("sos_y").get<int>();
        v.specials_.eos_y = j.at("eos_y").get<int>();
        v.specials_.pad = j.at("pad").get<int>();
        return v;
    }

private:
    int max_seq_len_ = 64;
    SpecialTokens specials_;
};

}  // namespace cpte
