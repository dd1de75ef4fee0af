#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ontotrain/detail/text.hpp"
#include "ontotrain/errors.hpp"
#include "ontotrain/labeled_set.hpp"
#include "ontotrain/smiles.hpp"

namespace ontotrain {

struct OntologyClass {
    std::string id;
    std::string name;
    std::vector<std::string> parents;  // is-a targets
    std::optional<std::string> smiles;
};

// Immutable after parse; is-a edges form a DAG. Classes are stored sorted by
// identifier so downstream outputs are independent of stanza order.
class OntologyGraph {
public:
    explicit OntologyGraph(std::vector<OntologyClass> classes,
                           std::vector<std::string> dangling = {})
        : classes_(std::move(classes)), dangling_parents_(std::move(dangling)) {
        std::sort(classes_.begin(), classes_.end(),
                  [](const OntologyClass& a, const OntologyClass& b) { return a.id < b.id; });
        for (std::size_t i = 0; i < classes_.size(); ++i) index_.emplace(classes_[i].id, i);
        parent_idx_.resize(classes_.size());
        for (std::size_t i = 0; i < classes_.size(); ++i) {
            for (const auto& pid : classes_[i].parents) {
                auto it = index_.find(pid);
                if (it != index_.end()) parent_idx_[i].push_back(it->second);
            }
        }
        check_acyclic();
    }

    std::size_t size() const { return classes_.size(); }
    const std::vector<OntologyClass>& classes() const { return classes_; }
    const std::vector<std::string>& dangling_parents() const { return dangling_parents_; }

    bool contains(std::string_view id) const { return index_.count(std::string(id)) > 0; }

    std::size_t index_of(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) throw UnknownClass(std::string(id));
        return it->second;
    }

    const OntologyClass& at(std::string_view id) const { return classes_[index_of(id)]; }

    std::optional<std::string> id_by_name(std::string_view name) const {
        for (const auto& c : classes_)
            if (c.name == name) return c.id;
        return std::nullopt;
    }

    // Reflexive-transitive closure over is-a edges, as class indices.
    std::vector<std::size_t> ancestor_indices(std::size_t start) const {
        std::vector<std::size_t> out;
        std::vector<std::uint8_t> seen(classes_.size(), 0);
        std::vector<std::size_t> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            out.push_back(cur);
            for (std::size_t p : parent_idx_[cur]) {
                if (!seen[p]) {
                    seen[p] = 1;
                    stack.push_back(p);
                }
            }
        }
        return out;
    }

private:
    void check_acyclic() const {
        // iterative three-color DFS; on a back edge, reconstruct the cycle
        std::vector<std::uint8_t> color(classes_.size(), 0);  // 0 white, 1 gray, 2 black
        std::vector<std::size_t> parent_in_dfs(classes_.size(), SIZE_MAX);
        for (std::size_t root = 0; root < classes_.size(); ++root) {
            if (color[root]) continue;
            std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
            color[root] = 1;
            while (!stack.empty()) {
                auto& [node, next] = stack.back();
                if (next < parent_idx_[node].size()) {
                    const std::size_t target = parent_idx_[node][next++];
                    if (color[target] == 0) {
                        color[target] = 1;
                        parent_in_dfs[target] = node;
                        stack.emplace_back(target, 0);
                    } else if (color[target] == 1) {
                        std::string cycle = classes_[target].id;
                        for (std::size_t walk = node;; walk = parent_in_dfs[walk]) {
                            cycle = classes_[walk].id + " -> " + cycle;
                            if (walk == target) break;
                        }
                        throw CycleError(cycle);
                    }
                } else {
                    color[node] = 2;
                    stack.pop_back();
                }
            }
        }
    }

    std::vector<OntologyClass> classes_;
    std::vector<std::string> dangling_parents_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::size_t>> parent_idx_;
};

namespace detail {

// Strips OBO trailing comment (`! ...`) and qualifier block (`{...}`).
inline std::string strip_obo_trailers(std::string_view value) {
    std::size_t cut = value.size();
    const std::size_t bang = value.find('!');
    if (bang != std::string_view::npos) cut = std::min(cut, bang);
    const std::size_t brace = value.find('{');
    if (brace != std::string_view::npos) cut = std::min(cut, brace);
    return trim(value.substr(0, cut));
}

// property_value: <property> "<value>" [datatype]; returns (property, value).
inline std::optional<std::pair<std::string, std::string>> parse_property_value(
    std::string_view value) {
    const std::string body = strip_obo_trailers(value);
    const std::size_t space = body.find(' ');
    if (space == std::string::npos) return std::nullopt;
    const std::string prop = trim(std::string_view(body).substr(0, space));
    const std::size_t open = body.find('"', space);
    if (open == std::string::npos) return std::nullopt;
    std::string val;
    std::size_t i = open + 1;
    while (i < body.size() && body[i] != '"') {
        if (body[i] == '\\' && i + 1 < body.size()) ++i;
        val.push_back(body[i]);
        ++i;
    }
    if (i >= body.size()) return std::nullopt;  // unterminated quote
    return std::make_pair(prop, val);
}

inline bool property_is_smiles(const std::string& prop) {
    std::string tail = lowercase(prop);
    const std::size_t slash = tail.find_last_of("/#");
    if (slash != std::string::npos) tail = tail.substr(slash + 1);
    return tail == "smiles";
}

}  // namespace detail

// OBO 1.2/1.4 [Term] stanzas: `is_a:` lines become parent edges, SMILES comes
// from `property_value:` lines with a SMILES property, obsolete terms are
// dropped. Parent references to unknown ids are removed and reported on the
// graph. Throws CycleError when the is-a relation is cyclic.
inline OntologyGraph parse_obo(std::istream& in) {
    std::vector<OntologyClass> classes;
    std::unordered_set<std::string> ids_seen;
    std::string line;
    long line_no = 0;
    bool in_term = false;
    bool obsolete = false;
    long stanza_line = 0;
    OntologyClass current;

    auto flush = [&]() {
        if (!in_term) return;
        if (current.id.empty())
            throw ParseError("[Term] stanza without an id", stanza_line);
        if (!obsolete) {
            if (!ids_seen.insert(current.id).second)
                throw ParseError("duplicate term id: " + current.id, stanza_line);
            classes.push_back(std::move(current));
        }
        current = OntologyClass{};
        obsolete = false;
    };

    while (std::getline(in, line)) {
        ++line_no;
        std::string text = detail::trim(line);
        if (text.empty()) continue;
        if (text.front() == '[') {
            flush();
            in_term = (text == "[Term]");
            stanza_line = line_no;
            continue;
        }
        if (!in_term) continue;
        const std::size_t colon = text.find(':');
        if (colon == std::string::npos)
            throw ParseError("expected `tag: value` inside [Term]", line_no);
        const std::string tag = text.substr(0, colon);
        const std::string value = detail::trim(std::string_view(text).substr(colon + 1));
        if (tag == "id") {
            current.id = detail::strip_obo_trailers(value);
            if (current.id.empty()) throw ParseError("empty id", line_no);
        } else if (tag == "name") {
            current.name = detail::strip_obo_trailers(value);
        } else if (tag == "is_a") {
            std::string target = detail::strip_obo_trailers(value);
            const std::size_t space = target.find(' ');
            if (space != std::string::npos) target = target.substr(0, space);
            if (target.empty()) throw ParseError("empty is_a target", line_no);
            current.parents.push_back(target);
        } else if (tag == "is_obsolete") {
            if (detail::strip_obo_trailers(value) == "true") obsolete = true;
        } else if (tag == "property_value") {
            const auto pv = detail::parse_property_value(value);
            if (pv && detail::property_is_smiles(pv->first)) current.smiles = pv->second;
        }
        // other tags are not part of the subsumption task and are skipped
    }
    flush();

    std::vector<std::string> dangling;
    for (auto& c : classes) {
        auto& parents = c.parents;
        parents.erase(std::remove_if(parents.begin(), parents.end(),
                                     [&](const std::string& p) {
                                         if (ids_seen.count(p)) return false;
                                         dangling.push_back(c.id + " -> " + p);
                                         return true;
                                     }),
                      parents.end());
    }
    return OntologyGraph(std::move(classes), std::move(dangling));
}

inline OntologyGraph parse_obo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open OBO file: " + path);
    return parse_obo(in);
}

// Reflexive-transitive is-a closure of `id`, as identifiers.
inline std::vector<std::string> ancestors(const OntologyGraph& graph, const std::string& id) {
    std::vector<std::string> out;
    for (std::size_t idx : graph.ancestor_indices(graph.index_of(id)))
        out.push_back(graph.classes()[idx].id);
    std::sort(out.begin(), out.end());
    return out;
}

// Every strict descendant of `root` with at least `min_members` strict
// descendants carrying a SMILES annotation, sorted by identifier.
inline std::vector<std::string> select_label_classes(const OntologyGraph& graph,
                                                     std::size_t min_members,
                                                     const std::string& root) {
    if (min_members < 1) throw InvalidConfig("min_members must be >= 1");
    const std::size_t root_idx = graph.index_of(root);
    std::vector<std::size_t> member_count(graph.size(), 0);
    for (std::size_t i = 0; i < graph.size(); ++i) {
        if (!graph.classes()[i].smiles) continue;
        for (std::size_t a : graph.ancestor_indices(i))
            if (a != i) ++member_count[a];
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        if (i == root_idx || member_count[i] < min_members) continue;
        const auto anc = graph.ancestor_indices(i);
        if (std::find(anc.begin(), anc.end(), root_idx) == anc.end()) continue;
        out.push_back(graph.classes()[i].id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct DatasetBuildReport {
    std::size_t rows = 0;
    std::size_t skipped_tokenize = 0;
    std::size_t skipped_too_long = 0;
};

// One row per SMILES-annotated class, labeled with its reflexive is-a closure
// restricted to `space`. Rows whose SMILES fails tokenization or does not fit
// max_len are skipped and counted.
inline LabeledSet build_ontology_dataset(const OntologyGraph& graph,
                                         const std::vector<std::string>& space,
                                         const Vocabulary& vocab, int max_len,
                                         DatasetBuildReport* report = nullptr) {
    if (space.empty()) throw InvalidConfig("label space must be non-empty");
    std::unordered_map<std::string, std::size_t> space_pos;
    for (std::size_t i = 0; i < space.size(); ++i) {
        graph.index_of(space[i]);  // validates membership
        space_pos.emplace(space[i], i);
    }
    LabeledSet set;
    set.label_names = space;
    DatasetBuildReport stats;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const auto& cls = graph.classes()[i];
        if (!cls.smiles) continue;
        TokenSequence seq;
        try {
            seq = tokenize(*cls.smiles);
            encode(seq, vocab, max_len);  // length check under the real encoding
        } catch (const TokenizeError&) {
            ++stats.skipped_tokenize;
            continue;
        } catch (const SequenceTooLong&) {
            ++stats.skipped_too_long;
            continue;
        }
        LabeledRow row;
        row.seq = std::move(seq);
        row.labels.assign(space.size(), 0);
        row.present.assign(space.size(), 1);
        for (std::size_t a : graph.ancestor_indices(i)) {
            auto it = space_pos.find(graph.classes()[a].id);
            if (it != space_pos.end()) row.labels[it->second] = 1;
        }
        set.rows.push_back(std::move(row));
        ++stats.rows;
    }
    if (report) *report = stats;
    return set;
}

}  // namespace ontotrain
