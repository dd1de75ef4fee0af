#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ontotrain/errors.hpp"

namespace ontotrain {

// SMILES split into grammar tokens. Concatenating `tokens` reproduces `source`.
struct TokenSequence {
    std::vector<std::string> tokens;
    std::string source;
};

namespace detail {

inline bool is_single_atom(char c) {
    switch (c) {
        case 'B': case 'C': case 'N': case 'O': case 'P': case 'S':
        case 'F': case 'I':
        case 'b': case 'c': case 'n': case 'o': case 's': case 'p':
            return true;
        default:
            return false;
    }
}

inline bool is_structural(char c) {
    switch (c) {
        case '-': case '=': case '#': case '$': case ':': case '/':
        case '\\': case '(': case ')': case '.': case '+': case '@':
        case '*':
            return true;
        default:
            return false;
    }
}

}  // namespace detail

// Longest-match tokenizer over, in priority order: bracket atoms `[...]`,
// `%nn` ring closures, two-letter elements Cl/Br, single-character atoms,
// digits, and bond/branch/structural characters.
inline TokenSequence tokenize(std::string_view smiles) {
    if (smiles.empty()) throw TokenizeError("empty SMILES", 0);
    TokenSequence seq;
    seq.source.assign(smiles);
    std::size_t i = 0;
    const std::size_t n = smiles.size();
    while (i < n) {
        const char c = smiles[i];
        const unsigned char uc = static_cast<unsigned char>(c);
        if (uc < 0x21 || uc > 0x7e)
            throw TokenizeError("non-printable or non-ASCII byte", i);
        if (c == '[') {
            const std::size_t close = smiles.find(']', i);
            if (close == std::string_view::npos)
                throw TokenizeError("unterminated '['", i);
            seq.tokens.emplace_back(smiles.substr(i, close - i + 1));
            i = close + 1;
            continue;
        }
        if (c == '%') {
            if (i + 2 >= n || !std::isdigit(static_cast<unsigned char>(smiles[i + 1])) ||
                !std::isdigit(static_cast<unsigned char>(smiles[i + 2])))
                throw TokenizeError("'%' ring closure requires two digits", i);
            seq.tokens.emplace_back(smiles.substr(i, 3));
            i += 3;
            continue;
        }
        if (c == 'C' && i + 1 < n && smiles[i + 1] == 'l') {
            seq.tokens.emplace_back("Cl");
            i += 2;
            continue;
        }
        if (c == 'B' && i + 1 < n && smiles[i + 1] == 'r') {
            seq.tokens.emplace_back("Br");
            i += 2;
            continue;
        }
        if (detail::is_single_atom(c) || std::isdigit(static_cast<unsigned char>(c)) ||
            detail::is_structural(c)) {
            seq.tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        throw TokenizeError(std::string("unrecognized character '") + c + "'", i);
    }
    return seq;
}

// Bijective token-text <-> id map. Ids 0-3 are reserved for the specials and
// never collide with grammar tokens; grammar ids follow contiguously.
class Vocabulary {
public:
    static constexpr std::int32_t pad_id = 0;
    static constexpr std::int32_t cls_id = 1;
    static constexpr std::int32_t mask_id = 2;
    static constexpr std::int32_t unk_id = 3;
    static constexpr std::size_t num_specials = 4;

    static const std::array<std::string, num_specials>& special_names() {
        static const std::array<std::string, num_specials> names = {"[PAD]", "[CLS]", "[MASK]",
                                                                    "[UNK]"};
        return names;
    }

    Vocabulary() {
        for (const auto& name : special_names()) append(name);
    }

    std::size_t size() const { return texts_.size(); }

    std::optional<std::int32_t> id_of(std::string_view text) const {
        auto it = ids_.find(std::string(text));
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& text_of(std::int32_t id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= texts_.size())
            throw VocabOverflow("id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(texts_.size()));
        return texts_[static_cast<std::size_t>(id)];
    }

    static bool is_special(std::int32_t id) { return id >= 0 && id < static_cast<std::int32_t>(num_specials); }

    // Appends a grammar token with the next id. Duplicates and texts equal to a
    // special name are rejected.
    void add_token(std::string text) {
        if (text.empty()) throw InvalidConfig("vocabulary token text must be non-empty");
        const auto& specials = special_names();
        if (std::find(specials.begin(), specials.end(), text) != specials.end())
            throw InvalidConfig("grammar token collides with special name: " + text);
        if (ids_.count(text))
            throw InvalidConfig("duplicate vocabulary token: " + text);
        append(std::move(text));
    }

    void save(std::ostream& out) const {
        for (const auto& text : texts_) out << text << '\n';
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open vocabulary file for writing: " + path);
        save(out);
    }

    static Vocabulary load(std::istream& in) {
        Vocabulary vocab;
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line_no < static_cast<long>(num_specials)) {
                if (line != special_names()[static_cast<std::size_t>(line_no)])
                    throw ParseError("vocabulary line " + std::to_string(line_no) +
                                         " must be " + special_names()[static_cast<std::size_t>(line_no)],
                                     line_no);
            } else {
                if (line.empty()) throw ParseError("empty vocabulary token", line_no);
                vocab.add_token(line);
            }
            ++line_no;
        }
        if (line_no < static_cast<long>(num_specials))
            throw ParseError("vocabulary file shorter than the four special lines", line_no);
        return vocab;
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open vocabulary file: " + path);
        return load(in);
    }

private:
    void append(std::string text) {
        ids_.emplace(text, static_cast<std::int32_t>(texts_.size()));
        texts_.push_back(std::move(text));
    }

    std::vector<std::string> texts_;
    std::unordered_map<std::string, std::int32_t> ids_;
};

// Specials first, then grammar tokens by descending corpus frequency with ties
// broken lexicographically, truncated at max_size. Tokenize failures carry the
// 1-based corpus line number.
inline Vocabulary build_vocabulary(const std::vector<std::string>& corpus, std::size_t max_size) {
    if (max_size < Vocabulary::num_specials + 1)
        throw InvalidConfig("max_size must be at least " +
                            std::to_string(Vocabulary::num_specials + 1));
    std::unordered_map<std::string, std::uint64_t> counts;
    long line_no = 0;
    for (const auto& smiles : corpus) {
        ++line_no;
        try {
            for (auto& tok : tokenize(smiles).tokens) counts[std::move(tok)] += 1;
        } catch (const TokenizeError& e) {
            throw TokenizeError(e.what(), e.offset(), line_no);
        }
    }
    std::vector<std::pair<std::string, std::uint64_t>> entries(counts.begin(), counts.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary vocab;
    const auto& specials = Vocabulary::special_names();
    for (auto& [text, count] : entries) {
        (void)count;
        if (vocab.size() >= max_size) break;
        if (std::find(specials.begin(), specials.end(), text) != specials.end())
            continue;  // unrepresentable as a grammar token; encodes as UNK
        vocab.add_token(std::move(text));
    }
    return vocab;
}

inline Vocabulary build_vocabulary(std::istream& corpus, std::size_t max_size) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(corpus, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return build_vocabulary(lines, max_size);
}

// Fixed-length encoding: [CLS] + token ids (+ PAD), with a mask marking real
// positions. Unknown token texts map to UNK.
struct Encoded {
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;

    int real_len() const {
        int n = 0;
        for (auto m : mask) n += m ? 1 : 0;
        return n;
    }
};

inline Encoded encode(const TokenSequence& seq, const Vocabulary& vocab, int max_len) {
    if (max_len < 2) throw InvalidConfig("max_len must be >= 2");
    if (seq.tokens.size() > static_cast<std::size_t>(max_len - 1))
        throw SequenceTooLong(seq.tokens.size(), max_len);
    Encoded out;
    out.ids.assign(static_cast<std::size_t>(max_len), Vocabulary::pad_id);
    out.mask.assign(static_cast<std::size_t>(max_len), 0);
    out.ids[0] = Vocabulary::cls_id;
    out.mask[0] = 1;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        const auto id = vocab.id_of(seq.tokens[i]);
        // a grammar token spelled like a special name must not alias its id
        out.ids[i + 1] = id && !Vocabulary::is_special(*id) ? *id : Vocabulary::unk_id;
        out.mask[i + 1] = 1;
    }
    return out;
}

}  // namespace ontotrain
