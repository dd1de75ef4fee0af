#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ontotrain/errors.hpp"
#include "ontotrain/smiles.hpp"

namespace ontotrain {

// One molecule with a dense label vector and a presence mask of equal length.
// labels[i] is meaningful only where present[i] = 1; absent cells hold a 0
// placeholder that losses and metrics never read.
struct LabeledRow {
    TokenSequence seq;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> present;
};

struct LabeledSet {
    std::vector<std::string> label_names;
    std::vector<LabeledRow> rows;

    std::size_t label_count() const { return label_names.size(); }
    std::size_t size() const { return rows.size(); }

    void check_invariants() const {
        for (const auto& row : rows) {
            if (row.labels.size() != label_names.size() ||
                row.present.size() != label_names.size())
                throw ShapeError("labeled row width disagrees with label names");
        }
    }
};

// Text format: header line of tab-separated label names, then one row per
// molecule: SMILES, tab, labels as 0/1 characters, tab, presence as 0/1
// characters.
inline void save_labeled_set(const LabeledSet& set, std::ostream& out) {
    for (std::size_t i = 0; i < set.label_names.size(); ++i) {
        if (i) out << '\t';
        out << set.label_names[i];
    }
    out << '\n';
    std::string labels, present;
    for (const auto& row : set.rows) {
        labels.clear();
        present.clear();
        for (auto v : row.labels) labels.push_back(v ? '1' : '0');
        for (auto v : row.present) present.push_back(v ? '1' : '0');
        out << row.seq.source << '\t' << labels << '\t' << present << '\n';
    }
}

inline void save_labeled_set(const LabeledSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open labeled set file for writing: " + path);
    save_labeled_set(set, out);
}

inline LabeledSet load_labeled_set(std::istream& in) {
    LabeledSet set;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("labeled set file has no header", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = 0;
    while (start <= line.size() && !line.empty()) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            set.label_names.push_back(line.substr(start));
            break;
        }
        set.label_names.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw ParseError("labeled set row needs SMILES, labels, presence", line_no);
        LabeledRow row;
        try {
            row.seq = tokenize(line.substr(0, t1));
        } catch (const TokenizeError& e) {
            throw ParseError(std::string("bad SMILES: ") + e.what(), line_no);
        }
        const std::string labels = line.substr(t1 + 1, t2 - t1 - 1);
        const std::string present = line.substr(t2 + 1);
        if (labels.size() != set.label_names.size() || present.size() != set.label_names.size())
            throw ParseError("label vector width disagrees with header", line_no);
        row.labels.reserve(labels.size());
        row.present.reserve(present.size());
        for (char c : labels) {
            if (c != '0' && c != '1') throw ParseError("label characters must be 0 or 1", line_no);
            row.labels.push_back(c == '1');
        }
        for (char c : present) {
            if (c != '0' && c != '1') throw ParseError("presence characters must be 0 or 1", line_no);
            row.present.push_back(c == '1');
        }
        set.rows.push_back(std::move(row));
    }
    return set;
}

inline LabeledSet load_labeled_set(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open labeled set file: " + path);
    return load_labeled_set(in);
}

}  // namespace ontotrain
