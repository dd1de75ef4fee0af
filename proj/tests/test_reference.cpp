#include <catch2/catch_amalgamated.hpp>

#include "ontotrain/reference.hpp"

using namespace ontotrain;

namespace {

void check_dataset(const reference::DatasetReference& ref) {
    REQUIRE(ref.endpoints.size() == tox21_endpoints().size());
    for (const auto& e : ref.endpoints) {
        for (const auto& v :
             {e.f1_pretrained, e.f1_baseline, e.auc_pretrained, e.auc_baseline}) {
            if (v) {
                CHECK(*v >= 0.0);
                CHECK(*v <= 1.0);
            }
        }
        // AUC was always defined at full scale
        CHECK(e.auc_pretrained.has_value());
        CHECK(e.auc_baseline.has_value());
    }
    CHECK(ref.entropy_pretrained > 0.0);
    CHECK(ref.entropy_pretrained < 1.0);
    CHECK(ref.entropy_baseline < 1.0);
    // the ontology-pre-trained arm attends more sharply
    CHECK(ref.entropy_pretrained < ref.entropy_baseline);
}

}  // namespace

TEST_CASE("full-scale reference constants") {
    CHECK(reference::pretrain_corpus_molecules == 365512);
    CHECK(reference::ontology_label_classes == 856);
    CHECK(reference::ontology_dataset_rows == 129187);
    CHECK(reference::moleculenet_molecules == 7831);
    CHECK(reference::moleculenet_with_missing_labels == 4752);
    CHECK(reference::default_min_members == 100);

    check_dataset(reference::moleculenet());
    check_dataset(reference::challenge());

    // spot values
    CHECK(reference::moleculenet().endpoints[10].auc_pretrained == 0.9);   // SR-MMP
    CHECK(reference::moleculenet().endpoints[6].f1_baseline == std::nullopt);  // NR-PPAR-gamma
    CHECK(reference::challenge().endpoints[0].f1_pretrained == 0.1);       // NR-AR
    CHECK(reference::challenge().endpoints[11].auc_baseline == 0.78);      // SR-p53
    CHECK(reference::moleculenet().entropy_pretrained == 0.79);
    CHECK(reference::challenge().entropy_baseline == 0.9);
}
