#pragma once

// Dataset ingestion: JSONL pair/corpus/classification/similarity readers,
// qrels TSV, the (text, code) pair miner, and a synthetic pair generator.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cpte/evalkit.hpp"
#include "cpte/rng.hpp"

namespace cpte {

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct PairExample {
    std::string x;
    std::string y;
    std::vector<std::string> hard_negatives;
    std::string pair_id;
};

namespace detail {

template <class Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": invalid json: " + e.what());
        }
        try {
            fn(j, lineno);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace detail

// {"x": str, "y": str, "negatives": [str]?, "id": str?}
inline std::vector<PairExample> read_pairs_jsonl(const std::string& path) {
    std::vector<PairExample> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        PairExample p;
        p.x = j.at("x").get<std::string>();
        p.y = j.at("y").get<std::string>();
        if (p.x.empty() || p.y.empty()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": empty x or y text");
        }
        if (j.contains("negatives")) p.hard_negatives = j.at("negatives").get<std::vector<std::string>>();
        for (const std::string& n : p.hard_negatives) {
            if (n.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": empty negative text");
        }
        p.pair_id = j.value("id", "line" + std::to_string(lineno));
        out.push_back(std::move(p));
    });
    if (out.empty()) throw DataError(path + ": no examples");
    return out;
}

inline void write_pairs_jsonl(const std::string& path, const std::vector<PairExample>& pairs) {
    std::ostringstream os;
    for (const PairExample& p : pairs) {
        nlohmann::json j{{"x", p.x}, {"y", p.y}, {"id", p.pair_id}};
        if (!p.hard_negatives.empty()) j["negatives"] = p.hard_negatives;
        os << j.dump() << "\n";
    }
    atomic_write_file(path, os.str());
}

struct IdText {
    std::string id;
    std::string text;
};

// {"id": str|int (optional), "text": str}
inline std::vector<IdText> read_corpus_jsonl(const std::string& path) {
    std::vector<IdText> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        IdText row;
        if (!j.contains("id")) {
            row.id = "line" + std::to_string(lineno);
        } else if (j.at("id").is_number()) {
            row.id = std::to_string(j.at("id").get<std::int64_t>());
        } else {
            row.id = j.at("id").get<std::string>();
        }
        row.text = j.at("text").get<std::string>();
        if (row.text.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": empty text");
        out.push_back(std::move(row));
    });
    if (out.empty()) throw DataError(path + ": no rows");
    return out;
}

struct LabeledText {
    std::string text;
    std::string label;
};

// {"text": str, "label": str|int}
inline std::vector<LabeledText> read_labeled_jsonl(const std::string& path) {
    std::vector<LabeledText> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        LabeledText row;
        row.text = j.at("text").get<std::string>();
        row.label = j.at("label").is_number() ? std::to_string(j.at("label").get<std::int64_t>())
                                              : j.at("label").get<std::string>();
        if (row.text.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": empty text");
        out.push_back(std::move(row));
    });
    if (out.empty()) throw DataError(path + ": no rows");
    return out;
}

// {"a": str, "b": str, "score": number}
inline std::vector<SimilarityPair> read_similarity_jsonl(const std::string& path) {
    std::vector<SimilarityPair> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
        out.push_back(SimilarityPair{j.at("a").get<std::string>(), j.at("b").get<std::string>(),
                                     j.at("score").get<double>()});
    });
    if (out.empty()) throw DataError(path + ": no rows");
    return out;
}

// Tab-separated (query_id, doc_id, relevance); a header line is tolerated.
inline QRels read_qrels_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    QRels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string qid, did, rel;
        if (!std::getline(ls, qid, '\t') || !std::getline(ls, did, '\t') || !std::getline(ls, rel, '\t')) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 3 tab-separated columns");
        }
        char* end = nullptr;
        const double r = std::strtod(rel.c_str(), &end);
        if (end == rel.c_str()) {
            if (lineno == 1) continue;  // header
            throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric relevance '" + rel + "'");
        }
        auto& set = qrels.relevant[qid];
        if (r > 0) set.insert(did);
    }
    if (qrels.relevant.empty()) throw DataError(path + ": no judgments");
    return qrels;
}

// ---------------------------------------------------------------------------
// (text, code) pair miner
// ---------------------------------------------------------------------------

struct MinedPair {
    std::string docstring;
    std::string code;
    std::string source_path;
    std::string language;
};

struct MineStats {
    std::size_t files_processed = 0;
    std::size_t files_skipped = 0;
};

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string join_lines(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        if (i > from) out += "\n";
        out += lines[i];
    }
    return out;
}

inline bool is_blank(const std::string& s) { return trim(s).empty(); }

// Indentation-delimited functions: top-level `def name(...):` whose first
// body statement is a triple-quoted string.
inline void mine_indent_file(const std::string& path, const std::string& content, std::vector<MinedPair>& out) {
    const std::vector<std::string> lines = split_lines(content);
    std::size_t i = 0;
    while (i < lines.size()) {
        const std::string& line = lines[i];
        const bool is_def = line.rfind("def ", 0) == 0 || line.rfind("async def ", 0) == 0;
        if (!(is_def && trim(line).back() == ':')) {
            ++i;
            continue;
        }
        // body: lines until the next non-blank column-0 line
        std::size_t end = i + 1;
        while (end < lines.size() && (is_blank(lines[end]) || lines[end][0] == ' ' || lines[end][0] == '\t')) ++end;
        std::size_t body_end = end;
        while (body_end > i + 1 && is_blank(lines[body_end - 1])) --body_end;

        // docstring: first non-blank body line opening with triple quotes
        std::size_t ds_start = i + 1;
        while (ds_start < body_end && is_blank(lines[ds_start])) ++ds_start;
        std::string doc;
        std::size_t ds_end = ds_start;  // one past the docstring lines
        bool has_doc = false;
        if (ds_start < body_end) {
            const std::string first = trim(lines[ds_start]);
            for (const char* quote : {"\"\"\"", "'''"}) {
                if (first.rfind(quote, 0) != 0) continue;
                const std::string q(quote);
                std::string interior = first.substr(3);
                const std::size_t close_same = interior.find(q);
                if (close_same != std::string::npos) {
                    doc = trim(interior.substr(0, close_same));
                    ds_end = ds_start + 1;
                    has_doc = true;
                } else {
                    std::vector<std::string> doc_lines{interior};
                    std::size_t k = ds_start + 1;
                    for (; k < body_end; ++k) {
                        const std::size_t close = lines[k].find(q);
                        if (close != std::string::npos) {
                            doc_lines.push_back(lines[k].substr(0, close));
                            break;
                        }
                        doc_lines.push_back(lines[k]);
                    }
                    if (k < body_end) {
                        std::string joined;
                        for (std::size_t d = 0; d < doc_lines.size(); ++d) {
                            if (d) joined += "\n";
                            joined += trim(doc_lines[d]);
                        }
                        doc = trim(joined);
                        ds_end = k + 1;
                        has_doc = true;
                    }
                }
                break;
            }
        }
        if (has_doc && !doc.empty()) {
            std::string code = lines[i];
            for (std::size_t k = i + 1; k < body_end; ++k) {
                if (k >= ds_start && k < ds_end) continue;
                code += "\n" + lines[k];
            }
            out.push_back(MinedPair{doc, code, path, "python"});
        }
        i = end;
    }
}

// Scan past strings and comments to the brace that closes depth 0.
// Returns one past the closing line, or npos when unbalanced.
inline std::size_t find_function_end(const std::vector<std::string>& lines, std::size_t start) {
    int depth = 0;
    bool seen_open = false;
    bool in_block_comment = false;
    for (std::size_t i = start; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        char in_string = 0;
        for (std::size_t c = 0; c < line.size(); ++c) {
            const char ch = line[c];
            if (in_block_comment) {
                if (ch == '*' && c + 1 < line.size() && line[c + 1] == '/') {
                    in_block_comment = false;
                    ++c;
                }
                continue;
            }
            if (in_string) {
                if (ch == '\\') {
                    ++c;
                } else if (ch == in_string) {
                    in_string = 0;
                }
                continue;
            }
            if (ch == '"' || ch == '\'' || ch == '`') {
                in_string = ch;
            } else if (ch == '/' && c + 1 < line.size() && line[c + 1] == '/') {
                break;
            } else if (ch == '/' && c + 1 < line.size() && line[c + 1] == '*') {
                in_block_comment = true;
                ++c;
            } else if (ch == '{') {
                ++depth;
                seen_open = true;
            } else if (ch == '}') {
                --depth;
                if (seen_open && depth == 0) return i + 1;
                if (depth < 0) return std::string::npos;
            }
        }
    }
    return std::string::npos;
}

// Brace-delimited functions: top-level `function name(...) {` carrying an
// immediately preceding doc comment (/** */ block or contiguous // lines).
inline bool mine_brace_file(const std::string& path, const std::string& content, std::vector<MinedPair>& out) {
    const std::vector<std::string> lines = split_lines(content);
    std::size_t i = 0;
    while (i < lines.size()) {
        const std::string& line = lines[i];
        const bool is_fn = line.rfind("function ", 0) == 0 || line.rfind("async function ", 0) == 0;
        if (!is_fn) {
            ++i;
            continue;
        }
        // harvest the adjacent doc comment above
        std::string doc;
        if (i > 0) {
            const std::string above = trim(lines[i - 1]);
            if (above == "*/" || above.size() >= 2 && above.substr(above.size() - 2) == "*/") {
                std::size_t k = i;  // find the opening /**
                while (k > 0) {
                    --k;
                    if (trim(lines[k]).rfind("/*", 0) == 0) break;
                }
                std::string joined;
                for (std::size_t d = k; d < i; ++d) {
                    std::string t = trim(lines[d]);
                    if (t.rfind("/**", 0) == 0) t = trim(t.substr(3));
                    else if (t.rfind("/*", 0) == 0) t = trim(t.substr(2));
                    if (t.size() >= 2 && t.substr(t.size() - 2) == "*/") t = trim(t.substr(0, t.size() - 2));
                    else if (t.rfind("*", 0) == 0) t = trim(t.substr(1));
                    if (!t.empty()) {
                        if (!joined.empty()) joined += "\n";
                        joined += t;
                    }
                }
                doc = joined;
            } else if (above.rfind("//", 0) == 0) {
                std::size_t k = i;
                while (k > 0 && trim(lines[k - 1]).rfind("//", 0) == 0) --k;
                std::string joined;
                for (std::size_t d = k; d < i; ++d) {
                    std::string t = trim(lines[d]).substr(2);
                    if (!t.empty() && t[0] == ' ') t = t.substr(1);
                    if (!joined.empty()) joined += "\n";
                    joined += t;
                }
                doc = trim(joined);
            }
        }
        const std::size_t end = find_function_end(lines, i);
        if (end == std::string::npos) return false;  // unparseable
        if (!doc.empty()) {
            out.push_back(MinedPair{doc, join_lines(lines, i, end), path, "javascript"});
        }
        i = end;
    }
    return true;
}

}  // namespace detail

// Top-level documented functions from .py (indentation grammar) and .js
// (brace grammar) files, in (path order, position) order. Unparseable or
// unsupported files are skipped with a warning on stderr.
inline std::vector<MinedPair> mine_code_pairs(const std::vector<std::string>& paths, MineStats* stats = nullptr) {
    std::vector<MinedPair> out;
    MineStats local;
    for (const std::string& path : paths) {
        std::string content;
        try {
            content = read_file(path);
        } catch (const IoError& e) {
            std::fprintf(stderr, "warning: %s, skipped\n", e.what());
            ++local.files_skipped;
            continue;
        }
        const std::size_t dot = path.find_last_of('.');
        const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
        if (ext == ".py") {
            detail::mine_indent_file(path, content, out);
            ++local.files_processed;
        } else if (ext == ".js") {
            std::vector<MinedPair> file_pairs;
            if (detail::mine_brace_file(path, content, file_pairs)) {
                out.insert(out.end(), file_pairs.begin(), file_pairs.end());
                ++local.files_processed;
            } else {
                std::fprintf(stderr, "warning: unbalanced braces in '%s', skipped\n", path.c_str());
                ++local.files_skipped;
            }
        } else {
            std::fprintf(stderr, "warning: unsupported extension on '%s', skipped\n", path.c_str());
            ++local.files_skipped;
        }
    }
    if (stats) *stats = local;
    return out;
}

// ---------------------------------------------------------------------------
// synthetic pairs
// ---------------------------------------------------------------------------

struct SyntheticOptions {
    int n_pairs = 2000;
    int topics = 0;  // 0: independent random texts; >0: shared topic prefix words
    int word_len = 5;
    double noise_rate = 0.1;  // per-character corruption on the y side
    std::uint64_t seed = 0;
};

// Positive pairs where y is a noised copy of x. With topics > 0, x starts
// with one of `topics` shared prefix words, so batches routinely contain
// same-topic distractors.
inline std::vector<PairExample> make_synthetic_pairs(const SyntheticOptions& opts) {
    if (opts.n_pairs < 1) throw std::invalid_argument("make_synthetic_pairs: n_pairs must be positive");
    Rng rng(mix_seed(opts.seed, 0xda7a));
    auto word = [&](int len) {
        std::string w;
        for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.below_int(26)));
        return w;
    };
    std::vector<std::string> topic_words;
    for (int t = 0; t < opts.topics; ++t) topic_words.push_back(word(opts.word_len));

    std::vector<PairExample> out;
    out.reserve(opts.n_pairs);
    for (int i = 0; i < opts.n_pairs; ++i) {
        std::string x;
        if (opts.topics > 0) x = topic_words[rng.below_int(opts.topics)] + " ";
        x += word(opts.word_len) + " " + word(opts.word_len);
        std::string y = x;
        for (char& c : y) {
            if (c != ' ' && rng.uniform01() < opts.noise_rate) c = static_cast<char>('a' + rng.below_int(26));
        }
        const int suffix = rng.below_int(3);
        if (suffix > 0) y += " " + word(suffix);
        PairExample p;
        p.x = std::move(x);
        p.y = std::move(y);
        p.pair_id = "p" + std::to_string(i);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace cpte
