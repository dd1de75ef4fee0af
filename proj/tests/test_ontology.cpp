#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "ontotrain/ontology.hpp"
#include "oracles.hpp"

using namespace ontotrain;

namespace {

OntologyGraph parse(const std::string& text) {
    std::istringstream in(text);
    return parse_obo(in);
}

const char* k_basic_obo = R"(format-version: 1.2
date: 01:01:2020

[Term]
id: X:A
name: alpha

[Term]
id: X:B
name: beta
is_a: X:A ! alpha
)";

// root -> A -> m1..m5 (with SMILES); root -> B -> m6 (no SMILES)
std::string selection_fixture() {
    std::string obo = "[Term]\nid: X:root\nname: root\n\n";
    obo += "[Term]\nid: X:A\nname: a\nis_a: X:root\n\n";
    obo += "[Term]\nid: X:B\nname: b\nis_a: X:root\n\n";
    for (int i = 1; i <= 5; ++i)
        obo += "[Term]\nid: X:m" + std::to_string(i) +
               "\nis_a: X:A\nproperty_value: http://purl.obolibrary.org/obo/chebi/smiles \"CC" +
               std::string(static_cast<std::size_t>(i), 'C') + "\" xsd:string\n\n";
    obo += "[Term]\nid: X:m6\nis_a: X:B\n\n";
    return obo;
}

}  // namespace

TEST_CASE("parse_obo basics") {
    SECTION("two terms with one edge") {
        const OntologyGraph g = parse(k_basic_obo);
        REQUIRE(g.size() == 2);
        CHECK(g.at("X:B").parents == std::vector<std::string>{"X:A"});
        CHECK(g.at("X:A").parents.empty());
        CHECK(g.at("X:A").name == "alpha");
    }
    SECTION("obsolete terms are excluded") {
        const OntologyGraph g = parse(
            "[Term]\nid: X:A\n\n[Term]\nid: X:B\nis_obsolete: true\nis_a: X:A\n");
        CHECK(g.size() == 1);
        CHECK(g.contains("X:A"));
        CHECK(!g.contains("X:B"));
    }
    SECTION("cycles are rejected") {
        try {
            parse("[Term]\nid: X:A\nis_a: X:B\n\n[Term]\nid: X:B\nis_a: X:A\n");
            FAIL("expected CycleError");
        } catch (const CycleError& e) {
            CHECK(std::string(e.what()).find("X:") != std::string::npos);
        }
        CHECK_THROWS_AS(parse("[Term]\nid: X:A\nis_a: X:A\n"), CycleError);
    }
    SECTION("dangling parents are dropped and reported") {
        const OntologyGraph g = parse("[Term]\nid: X:A\nis_a: X:GHOST\n");
        CHECK(g.size() == 1);
        CHECK(g.at("X:A").parents.empty());
        REQUIRE(g.dangling_parents().size() == 1);
        CHECK(g.dangling_parents()[0] == "X:A -> X:GHOST");
    }
    SECTION("stanza without id") {
        CHECK_THROWS_AS(parse("[Term]\nname: nameless\n"), ParseError);
    }
    SECTION("duplicate ids") {
        CHECK_THROWS_AS(parse("[Term]\nid: X:A\n\n[Term]\nid: X:A\n"), ParseError);
    }
    SECTION("SMILES property value, qualifiers, Typedef stanzas") {
        const OntologyGraph g = parse(
            "[Term]\nid: X:A\nname: mol\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"C(=O)O\" xsd:string\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/mass \"46.03\" xsd:string\n"
            "\n[Typedef]\nid: part_of\n\n"
            "[Term]\nid: X:B\nis_a: X:A {source=\"x\"} ! comment\n");
        REQUIRE(g.at("X:A").smiles.has_value());
        CHECK(*g.at("X:A").smiles == "C(=O)O");
        CHECK(!g.at("X:B").smiles.has_value());
        CHECK(g.at("X:B").parents == std::vector<std::string>{"X:A"});
        CHECK(!g.contains("part_of"));
    }
}

TEST_CASE("ancestors closure") {
    const OntologyGraph chain = parse(
        "[Term]\nid: X:A\n\n[Term]\nid: X:B\nis_a: X:A\n\n[Term]\nid: X:C\nis_a: X:B\n");
    CHECK(ancestors(chain, "X:C") == std::vector<std::string>{"X:A", "X:B", "X:C"});
    CHECK(ancestors(chain, "X:A") == std::vector<std::string>{"X:A"});
    CHECK_THROWS_AS(ancestors(chain, "X:missing"), UnknownClass);

    // diamond: D -> {B, C}, B -> A, C -> A
    const OntologyGraph diamond = parse(
        "[Term]\nid: X:A\n\n[Term]\nid: X:B\nis_a: X:A\n\n[Term]\nid: X:C\nis_a: X:A\n\n"
        "[Term]\nid: X:D\nis_a: X:B\nis_a: X:C\n");
    CHECK(ancestors(diamond, "X:D") == std::vector<std::string>{"X:A", "X:B", "X:C", "X:D"});
}

TEST_CASE("ancestors matches the path-enumeration oracle on random DAGs") {
    Rng rng(90210);
    for (int trial = 0; trial < 200; ++trial) {
        const oracles::RandomDag dag = oracles::make_random_dag(rng);
        std::vector<std::size_t> order(dag.ids.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        std::istringstream in(oracles::dag_to_obo(dag, order));
        const OntologyGraph g = parse_obo(in);
        for (const auto& id : dag.ids) {
            const auto got = ancestors(g, id);
            const auto expected = oracles::ancestors_by_paths(dag.parents, id);
            REQUIRE(std::set<std::string>(got.begin(), got.end()) == expected);
        }
    }
}

TEST_CASE("select_label_classes") {
    const OntologyGraph g = parse(selection_fixture());
    SECTION("members counted over strict SMILES descendants") {
        CHECK(select_label_classes(g, 3, "X:root") == std::vector<std::string>{"X:A"});
        CHECK(select_label_classes(g, 5, "X:root") == std::vector<std::string>{"X:A"});
        CHECK(select_label_classes(g, 6, "X:root").empty());
    }
    SECTION("a class does not count itself") {
        // D has a SMILES itself plus two annotated children; with min 3 it is out
        const OntologyGraph h = parse(
            "[Term]\nid: Y:root\n\n"
            "[Term]\nid: Y:D\nis_a: Y:root\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"C\" xsd:string\n\n"
            "[Term]\nid: Y:c1\nis_a: Y:D\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"CC\" xsd:string\n\n"
            "[Term]\nid: Y:c2\nis_a: Y:D\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"CO\" xsd:string\n");
        CHECK(select_label_classes(h, 2, "Y:root") == std::vector<std::string>{"Y:D"});
        CHECK(select_label_classes(h, 3, "Y:root").empty());
    }
    SECTION("unknown root") {
        CHECK_THROWS_AS(select_label_classes(g, 1, "X:none"), UnknownClass);
    }
    SECTION("invariant under stanza permutation") {
        Rng rng(5150);
        for (int trial = 0; trial < 20; ++trial) {
            const oracles::RandomDag dag = oracles::make_random_dag(rng);
            std::vector<std::size_t> order(dag.ids.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::istringstream in_a(oracles::dag_to_obo(dag, order));
            const auto base = select_label_classes(parse_obo(in_a), 2, dag.ids[0]);
            rng.shuffle(order);
            std::istringstream in_b(oracles::dag_to_obo(dag, order));
            REQUIRE(select_label_classes(parse_obo(in_b), 2, dag.ids[0]) == base);
        }
    }
}

TEST_CASE("build_ontology_dataset") {
    const Vocabulary vocab = build_vocabulary({"CCO", "CCN"}, 100);
    SECTION("labels restricted to the space, closure applied") {
        // m1 is under A only; space [A, B]
        const OntologyGraph g = parse(
            "[Term]\nid: X:A\n\n[Term]\nid: X:B\n\n"
            "[Term]\nid: X:m1\nis_a: X:A\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"CCO\" xsd:string\n");
        DatasetBuildReport report;
        const LabeledSet set = build_ontology_dataset(g, {"X:A", "X:B"}, vocab, 16, &report);
        REQUIRE(set.rows.size() == 1);
        CHECK(set.label_names == std::vector<std::string>{"X:A", "X:B"});
        CHECK(set.rows[0].labels == std::vector<std::uint8_t>{1, 0});
        CHECK(set.rows[0].present == std::vector<std::uint8_t>{1, 1});
        CHECK(report.rows == 1);
    }
    SECTION("a class in the space is its own superclass target") {
        const OntologyGraph g = parse(
            "[Term]\nid: X:A\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"CC\" xsd:string\n");
        const LabeledSet set = build_ontology_dataset(g, {"X:A"}, vocab, 16);
        REQUIRE(set.rows.size() == 1);
        CHECK(set.rows[0].labels == std::vector<std::uint8_t>{1});
    }
    SECTION("unusable SMILES are skipped and counted") {
        const OntologyGraph g = parse(
            "[Term]\nid: X:A\n\n"
            "[Term]\nid: X:m1\nis_a: X:A\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"C?C\" xsd:string\n\n"
            "[Term]\nid: X:m2\nis_a: X:A\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"CCCCCCCCCCCCCCCCCCCC\" "
            "xsd:string\n\n"
            "[Term]\nid: X:m3\nis_a: X:A\n"
            "property_value: http://purl.obolibrary.org/obo/chebi/smiles \"CO\" xsd:string\n");
        DatasetBuildReport report;
        const LabeledSet set = build_ontology_dataset(g, {"X:A"}, vocab, 8, &report);
        CHECK(set.rows.size() == 1);
        CHECK(report.rows == 1);
        CHECK(report.skipped_tokenize == 1);
        CHECK(report.skipped_too_long == 1);
    }
    SECTION("empty space is rejected") {
        const OntologyGraph g = parse("[Term]\nid: X:A\n");
        CHECK_THROWS_AS(build_ontology_dataset(g, {}, vocab, 16), InvalidConfig);
    }
    SECTION("hierarchy closure holds on random DAG datasets") {
        Rng rng(777);
        for (int trial = 0; trial < 50; ++trial) {
            const oracles::RandomDag dag = oracles::make_random_dag(rng);
            std::vector<std::size_t> order(dag.ids.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::istringstream in(oracles::dag_to_obo(dag, order));
            const OntologyGraph g = parse_obo(in);
            const std::vector<std::string> space(dag.ids.begin(), dag.ids.end());
            const LabeledSet set = build_ontology_dataset(g, space, vocab, 32);
            // superclass label implied by subclass label
            for (const auto& row : set.rows)
                for (std::size_t j = 0; j < space.size(); ++j) {
                    if (!row.labels[j]) continue;
                    for (const auto& anc_id : ancestors(g, space[j])) {
                        const auto it = std::find(space.begin(), space.end(), anc_id);
                        REQUIRE(it != space.end());
                        REQUIRE(row.labels[static_cast<std::size_t>(it - space.begin())] == 1);
                    }
                }
        }
    }
}

TEST_CASE("labeled set file round trip") {
    const OntologyGraph g = parse(selection_fixture());
    const Vocabulary vocab = build_vocabulary({"CCO"}, 100);
    const LabeledSet set =
        build_ontology_dataset(g, select_label_classes(g, 3, "X:root"), vocab, 32);
    std::ostringstream out;
    save_labeled_set(set, out);
    std::istringstream in(out.str());
    const LabeledSet loaded = load_labeled_set(in);
    REQUIRE(loaded.rows.size() == set.rows.size());
    CHECK(loaded.label_names == set.label_names);
    for (std::size_t i = 0; i < set.rows.size(); ++i) {
        CHECK(loaded.rows[i].seq.source == set.rows[i].seq.source);
        CHECK(loaded.rows[i].labels == set.rows[i].labels);
        CHECK(loaded.rows[i].present == set.rows[i].present);
    }
    std::istringstream bad("A\tB\nCC\t10\t1\n");
    CHECK_THROWS_AS(load_labeled_set(bad), ParseError);
}
