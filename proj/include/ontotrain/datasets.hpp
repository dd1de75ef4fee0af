#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ontotrain/detail/text.hpp"
#include "ontotrain/errors.hpp"
#include "ontotrain/labeled_set.hpp"
#include "ontotrain/rng.hpp"
#include "ontotrain/smiles.hpp"

namespace ontotrain {

// Canonical toxicity endpoint order; loaders reorder permuted input columns to
// match it.
inline const std::array<std::string, 12>& tox21_endpoints() {
    static const std::array<std::string, 12> names = {
        "NR-AR",        "NR-AR-LBD", "NR-AhR",  "NR-Aromatase", "NR-ER",  "NR-ER-LBD",
        "NR-PPAR-gamma", "SR-ARE",    "SR-ATAD5", "SR-HSE",       "SR-MMP", "SR-p53"};
    return names;
}

// Trimmed non-empty lines, one SMILES each.
inline std::vector<std::string> load_pretrain_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t b = 0, e = line.size();
        while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
        if (e > b) out.push_back(line.substr(b, e - b));
    }
    return out;
}

struct LoadReport {
    std::size_t rows = 0;
    std::size_t skipped_tokenize = 0;
    std::size_t skipped_too_long = 0;
    std::size_t skipped_bad_value = 0;

    std::size_t skipped() const { return skipped_tokenize + skipped_too_long + skipped_bad_value; }
};

namespace detail {

// Splits one CSV/TSV record, honoring double-quoted fields.
inline std::vector<std::string> split_delimited(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

// Column-name canonicalization: case-insensitive, with '.', '_' and ' '
// treated as '-'.
inline std::string canonical_column(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        if (c == '.' || c == '_' || c == ' ') {
            out.push_back('-');
        } else {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    while (!out.empty() && (out.front() == '-')) out.erase(out.begin());
    while (!out.empty() && (out.back() == '-')) out.pop_back();
    return out;
}

// Endpoint cell values: 0/1 (also 0.0/1.0); empty and NA-like markers denote a
// missing measurement.
enum class CellValue { active, inactive, missing, invalid };

inline CellValue parse_endpoint_cell(std::string_view raw) {
    std::string v;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c))) v.push_back(c);
    if (v.empty()) return CellValue::missing;
    const std::string lw = lowercase(v);
    if (lw == "na" || lw == "n/a" || lw == "nan" || lw == "x") return CellValue::missing;
    if (v == "1" || v == "1.0") return CellValue::active;
    if (v == "0" || v == "0.0") return CellValue::inactive;
    return CellValue::invalid;
}

}  // namespace detail

// Loads a Tox21-style table (comma- or tab-separated, sniffed from the header)
// into canonical endpoint order. Missing cells become (label 0, present 0).
// Rows with an unparseable SMILES or endpoint value are skipped and counted.
inline LabeledSet load_tox21_csv(const std::string& path, const Vocabulary& vocab, int max_len,
                                 LoadReport* report = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open Tox21 file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty Tox21 file: " + path, 0);
    const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
    const auto columns = detail::split_delimited(header, delim);

    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < columns.size(); ++i)
        by_name.emplace(detail::canonical_column(columns[i]), i);

    auto smiles_it = by_name.find("smiles");
    if (smiles_it == by_name.end()) throw MissingColumn("smiles");
    const std::size_t smiles_col = smiles_it->second;

    std::array<std::size_t, 12> endpoint_col{};
    for (std::size_t i = 0; i < tox21_endpoints().size(); ++i) {
        auto it = by_name.find(detail::canonical_column(tox21_endpoints()[i]));
        if (it == by_name.end()) throw MissingColumn(tox21_endpoints()[i]);
        endpoint_col[i] = it->second;
    }

    LabeledSet set;
    set.label_names.assign(tox21_endpoints().begin(), tox21_endpoints().end());
    LoadReport stats;
    std::string line;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_delimited(line, delim);
        if (fields.size() != columns.size())
            throw ParseError("row has " + std::to_string(fields.size()) + " fields, header has " +
                                 std::to_string(columns.size()),
                             line_no);
        LabeledRow row;
        row.labels.assign(12, 0);
        row.present.assign(12, 0);
        bool bad_value = false;
        for (std::size_t i = 0; i < 12; ++i) {
            switch (detail::parse_endpoint_cell(fields[endpoint_col[i]])) {
                case detail::CellValue::active:
                    row.labels[i] = 1;
                    row.present[i] = 1;
                    break;
                case detail::CellValue::inactive:
                    row.present[i] = 1;
                    break;
                case detail::CellValue::missing:
                    break;
                case detail::CellValue::invalid:
                    bad_value = true;
                    break;
            }
        }
        if (bad_value) {
            ++stats.skipped_bad_value;
            continue;
        }
        try {
            row.seq = tokenize(fields[smiles_col]);
            encode(row.seq, vocab, max_len);
        } catch (const TokenizeError&) {
            ++stats.skipped_tokenize;
            continue;
        } catch (const SequenceTooLong&) {
            ++stats.skipped_too_long;
            continue;
        }
        set.rows.push_back(std::move(row));
        ++stats.rows;
    }
    if (report) *report = stats;
    return set;
}

struct SplitSpec {
    double train = 0.85;
    double validation = 0.075;
    double test = 0.075;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train, validation, test;
};

// Seeded shuffle then contiguous slices; part sizes are floor(n * fraction)
// with the remainder assigned to train.
inline std::tuple<LabeledSet, LabeledSet, LabeledSet> split(const LabeledSet& set,
                                                            const SplitSpec& spec,
                                                            SplitIndices* indices = nullptr) {
    auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_unit(spec.train) || !in_unit(spec.validation) || !in_unit(spec.test))
        throw InvalidConfig("split fractions must each lie in (0, 1)");
    const double sum = spec.train + spec.validation + spec.test;
    if (sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9)
        throw InvalidConfig("split fractions must sum to 1");

    const std::size_t n = set.rows.size();
    // floor with a tolerance so fractions like 0.075 * 40 land on the integer
    auto sized = [n](double fraction) {
        return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    };
    const std::size_t n_val = sized(spec.validation);
    const std::size_t n_test = sized(spec.test);
    if (n < n_val + n_test)
        throw DegenerateSplit("split fractions exceed the available " + std::to_string(n) + " rows");
    const std::size_t n_train = n - n_val - n_test;  // floor(train) plus the remainder
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw DegenerateSplit("split of " + std::to_string(n) +
                              " rows leaves an empty part (train " + std::to_string(n_train) +
                              ", validation " + std::to_string(n_val) + ", test " +
                              std::to_string(n_test) + ")");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(order);

    SplitIndices idx;
    idx.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    idx.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                          order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    idx.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());

    auto take = [&](const std::vector<std::size_t>& which) {
        LabeledSet part;
        part.label_names = set.label_names;
        part.rows.reserve(which.size());
        for (std::size_t i : which) part.rows.push_back(set.rows[i]);
        return part;
    };
    auto result = std::make_tuple(take(idx.train), take(idx.validation), take(idx.test));
    if (indices) *indices = std::move(idx);
    return result;
}

inline void save_split_manifest(const SplitIndices& idx, std::ostream& out) {
    for (auto i : idx.train) out << "train\t" << i << '\n';
    for (auto i : idx.validation) out << "validation\t" << i << '\n';
    for (auto i : idx.test) out << "test\t" << i << '\n';
}

// The challenge distribution ships pre-assigned roles; no re-splitting.
inline std::tuple<LabeledSet, LabeledSet, LabeledSet> load_challenge_sets(
    const std::string& train_path, const std::string& validation_path,
    const std::string& test_path, const Vocabulary& vocab, int max_len,
    LoadReport* train_report = nullptr, LoadReport* validation_report = nullptr,
    LoadReport* test_report = nullptr) {
    auto load_role = [&](const std::string& path, const char* role, LoadReport* report) {
        try {
            return load_tox21_csv(path, vocab, max_len, report);
        } catch (const IoError& e) {
            throw IoError(std::string(role) + " set: " + e.what());
        }
    };
    return std::make_tuple(load_role(train_path, "train", train_report),
                           load_role(validation_path, "validation", validation_report),
                           load_role(test_path, "test", test_report));
}

}  // namespace ontotrain
