#include <catch2/catch_amalgamated.hpp>

#include "ontotrain/metrics.hpp"
#include "ontotrain/train.hpp"
#include "oracles.hpp"

using namespace ontotrain;

namespace {

PredictionBatch random_batch(Rng& rng, int max_rows = 8, int max_cols = 5, bool with_ties = true) {
    const int rows = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_rows)));
    const int cols = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_cols)));
    PredictionBatch b;
    b.scores.resize(rows, cols);
    b.labels.resize(rows, cols);
    b.present.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = rng.uniform();
            if (with_ties && rng.bernoulli(0.3)) s = std::round(s * 4.0) / 4.0;  // force ties
            b.scores(r, c) = s;
            b.labels(r, c) = rng.bernoulli(0.5) ? 1.0 : 0.0;
            b.present(r, c) = rng.bernoulli(0.75) ? 1.0 : 0.0;
        }
    return b;
}

AttentionMaps single_map(const Mat& rows) {
    AttentionMaps maps;
    maps.reset(1, 1, static_cast<int>(rows.rows()));
    maps.at(0, 0) = rows;
    return maps;
}

}  // namespace

TEST_CASE("micro_f1") {
    SECTION("perfect and worst cases") {
        PredictionBatch b;
        b.scores.resize(1, 2);
        b.scores << 0.9, 0.1;
        b.labels.resize(1, 2);
        b.labels << 1, 0;
        b.present = Mat::Ones(1, 2);
        CHECK(micro_f1(b, 0.5) == 1.0);

        PredictionBatch w;
        w.scores.resize(1, 1);
        w.scores << 0.9;
        w.labels = Mat::Zero(1, 1);
        w.present = Mat::Ones(1, 1);
        CHECK(micro_f1(w, 0.5) == 0.0);
    }
    SECTION("empty denominator returns 0") {
        PredictionBatch b;
        b.scores = Mat::Zero(2, 2);  // all predictions negative
        b.labels = Mat::Zero(2, 2);  // no positives
        b.present = Mat::Ones(2, 2);
        CHECK(micro_f1(b, 0.5) == 0.0);
    }
    SECTION("matches exhaustive cell counting") {
        Rng rng(123);
        for (int trial = 0; trial < 300; ++trial) {
            const PredictionBatch b = random_batch(rng);
            const double threshold = 0.5;
            oracles::F1Cells cells;
            for (Eigen::Index r = 0; r < b.scores.rows(); ++r)
                for (Eigen::Index c = 0; c < b.scores.cols(); ++c) {
                    if (b.present(r, c) == 0.0) continue;
                    const bool pred = b.scores(r, c) >= threshold;
                    const bool truth = b.labels(r, c) != 0.0;
                    cells.tp += pred && truth;
                    cells.fp += pred && !truth;
                    cells.fn += !pred && truth;
                }
            REQUIRE(micro_f1(b, threshold) == cells.f1());
        }
    }
    SECTION("absent cells cannot influence the score") {
        Rng rng(321);
        const PredictionBatch b = random_batch(rng);
        PredictionBatch scribbled = b;
        for (Eigen::Index r = 0; r < b.scores.rows(); ++r)
            for (Eigen::Index c = 0; c < b.scores.cols(); ++c)
                if (b.present(r, c) == 0.0) scribbled.labels(r, c) = 1.0 - b.labels(r, c);
        CHECK(micro_f1(b, 0.5) == micro_f1(scribbled, 0.5));
    }
    SECTION("threshold validation and shape errors") {
        PredictionBatch b;
        b.scores = Mat::Zero(1, 1);
        b.labels = Mat::Zero(1, 1);
        b.present = Mat::Ones(1, 1);
        CHECK_THROWS_AS(micro_f1(b, 0.0), InvalidConfig);
        b.labels = Mat::Zero(1, 2);
        CHECK_THROWS_AS(micro_f1(b, 0.5), ShapeError);
        b.labels = Mat::Zero(1, 1);
        b.scores(0, 0) = 1.5;
        CHECK_THROWS_AS(micro_f1(b, 0.5), ShapeError);
    }
}

TEST_CASE("roc_auc_per_class") {
    SECTION("separated and tied endpoints") {
        PredictionBatch b;
        b.scores.resize(2, 1);
        b.scores << 0.9, 0.1;
        b.labels.resize(2, 1);
        b.labels << 1, 0;
        b.present = Mat::Ones(2, 1);
        CHECK(roc_auc_per_class(b)[0] == std::optional<double>{1.0});

        PredictionBatch t;
        t.scores = Mat::Constant(2, 1, 0.4);
        t.labels.resize(2, 1);
        t.labels << 1, 0;
        t.present = Mat::Ones(2, 1);
        CHECK(roc_auc_per_class(t)[0] == std::optional<double>{0.5});
    }
    SECTION("undefined without both outcomes") {
        PredictionBatch b;
        b.scores = Mat::Constant(3, 2, 0.5);
        b.labels = Mat::Ones(3, 2);
        b.labels(0, 1) = 0.0;
        b.present = Mat::Ones(3, 2);
        b.present(0, 1) = 0.0;  // the only negative of class 1 is masked out
        const auto aucs = roc_auc_per_class(b);
        CHECK(!aucs[0].has_value());
        CHECK(!aucs[1].has_value());
    }
    SECTION("equals the all-pairs oracle exactly") {
        Rng rng(777);
        for (int trial = 0; trial < 500; ++trial) {
            const PredictionBatch b = random_batch(rng, 200, 3);
            const auto aucs = roc_auc_per_class(b);
            for (Eigen::Index c = 0; c < b.scores.cols(); ++c) {
                std::vector<double> scores;
                std::vector<int> labels;
                for (Eigen::Index r = 0; r < b.scores.rows(); ++r) {
                    if (b.present(r, c) == 0.0) continue;
                    scores.push_back(b.scores(r, c));
                    labels.push_back(b.labels(r, c) != 0.0 ? 1 : 0);
                }
                const long long pos = std::count(labels.begin(), labels.end(), 1);
                const long long neg = static_cast<long long>(labels.size()) - pos;
                if (pos == 0 || neg == 0) {
                    REQUIRE(!aucs[static_cast<std::size_t>(c)].has_value());
                } else {
                    REQUIRE(aucs[static_cast<std::size_t>(c)].has_value());
                    REQUIRE(std::abs(*aucs[static_cast<std::size_t>(c)] -
                                     oracles::pair_auc(scores, labels)) <= 1e-12);
                }
            }
        }
    }
    SECTION("invariant under strictly monotone score transforms") {
        Rng rng(888);
        for (int trial = 0; trial < 100; ++trial) {
            const PredictionBatch b = random_batch(rng, 40, 2);
            PredictionBatch t = b;
            t.scores = b.scores.unaryExpr([](double s) { return s * s * 0.9 + 0.05 * s; });
            const auto a1 = roc_auc_per_class(b);
            const auto a2 = roc_auc_per_class(t);
            for (std::size_t c = 0; c < a1.size(); ++c) {
                REQUIRE(a1[c].has_value() == a2[c].has_value());
                if (a1[c]) REQUIRE(*a1[c] == Catch::Approx(*a2[c]).margin(1e-12));
            }
        }
    }
    SECTION("absent cells cannot influence the AUC") {
        Rng rng(999);
        for (int trial = 0; trial < 50; ++trial) {
            const PredictionBatch b = random_batch(rng, 30, 3);
            PredictionBatch scribbled = b;
            for (Eigen::Index r = 0; r < b.scores.rows(); ++r)
                for (Eigen::Index c = 0; c < b.scores.cols(); ++c)
                    if (b.present(r, c) == 0.0) scribbled.labels(r, c) = 1.0 - b.labels(r, c);
            const auto a1 = roc_auc_per_class(b);
            const auto a2 = roc_auc_per_class(scribbled);
            REQUIRE(a1.size() == a2.size());
            for (std::size_t c = 0; c < a1.size(); ++c) REQUIRE(a1[c] == a2[c]);
        }
    }
    SECTION("macro averaging ignores undefined classes") {
        CHECK(macro_auc({std::optional<double>{0.5}, std::nullopt, std::optional<double>{1.0}}) ==
              0.75);
        CHECK(std::isnan(macro_auc({std::nullopt, std::nullopt})));
    }
}

TEST_CASE("normalized_entropy") {
    EntropyOptions raw;
    raw.exclude_specials = false;
    SECTION("uniform row gives 1") {
        const Mat row = Mat::Constant(4, 4, 0.25);
        const EntropyReport rep = normalized_entropy(single_map(row), raw);
        CHECK(rep.overall == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("one-hot row gives 0") {
        Mat rows = Mat::Zero(4, 4);
        for (int q = 0; q < 4; ++q) rows(q, (q + 1) % 4) = 1.0;
        const EntropyReport rep = normalized_entropy(single_map(rows), raw);
        CHECK(rep.overall == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("(1/2, 1/2, 0, 0) gives 1/2") {
        Mat rows(1, 4);
        rows << 0.5, 0.5, 0.0, 0.0;
        Mat padded(4, 4);
        for (int q = 0; q < 4; ++q) padded.row(q) = rows.row(0);
        const EntropyReport rep = normalized_entropy(single_map(padded), raw);
        CHECK(rep.overall == Catch::Approx(0.5).margin(1e-9));
    }
    SECTION("permutation of key positions leaves entropy unchanged") {
        Rng rng(42);
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 3 + static_cast<int>(rng.below(6));
            Mat rows(n, n);
            for (int q = 0; q < n; ++q) {
                double sum = 0.0;
                for (int k = 0; k < n; ++k) {
                    rows(q, k) = rng.uniform() + 1e-9;
                    sum += rows(q, k);
                }
                rows.row(q) /= sum;
            }
            const double base = normalized_entropy(single_map(rows), raw).overall;
            std::vector<int> perm(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
            rng.shuffle(perm);
            Mat permuted(n, n);
            for (int q = 0; q < n; ++q)
                for (int k = 0; k < n; ++k)
                    permuted(q, k) = rows(q, perm[static_cast<std::size_t>(k)]);
            REQUIRE(normalized_entropy(single_map(permuted), raw).overall ==
                    Catch::Approx(base).margin(1e-12));
            REQUIRE(base >= 0.0);
            REQUIRE(base <= 1.0);
        }
    }
    SECTION("CLS exclusion renormalizes over molecule tokens") {
        // with CLS dropped, each row is (1/2, 1/2) over the two remaining keys
        Mat rows(3, 3);
        rows << 0.5, 0.25, 0.25, 0.5, 0.25, 0.25, 0.5, 0.25, 0.25;
        EntropyOptions opt;  // exclude_specials = true
        const EntropyReport rep = normalized_entropy(single_map(rows), opt);
        CHECK(rep.rows == 2);  // queries 1 and 2
        CHECK(rep.overall == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("degenerate sequences are skipped and counted") {
        // 2 positions with CLS exclusion leaves a single key
        Mat rows = Mat::Constant(2, 2, 0.5);
        CHECK_THROWS_AS(normalized_entropy(single_map(rows)), DegenerateSequence);

        EntropyAccumulator acc;
        acc.add(single_map(rows));                          // skipped
        acc.add(single_map(Mat::Constant(3, 3, 1.0 / 3)));  // usable
        const EntropyReport rep = acc.report();
        CHECK(rep.skipped == 1);
        CHECK(rep.rows == 2);
    }
}

TEST_CASE("evaluate") {
    ModelConfig c;
    c.vocab_size = 16;
    c.hidden = 8;
    c.heads = 2;
    c.layers = 2;
    c.max_len = 12;
    c.ff_multiplier = 2;
    const Vocabulary vocab = build_vocabulary({"CCNO"}, 16);

    LabeledSet set;
    set.label_names = {"a", "b", "c"};
    for (int i = 0; i < 6; ++i) {
        LabeledRow row;
        row.seq = tokenize(i % 2 ? "CCN" : "CO");
        row.labels = {static_cast<std::uint8_t>(i % 2), 0,
                      static_cast<std::uint8_t>((i + 1) % 2)};
        row.present = {1, 0, 1};  // class "b" fully missing
        set.rows.push_back(row);
    }

    SECTION("shape mismatch is rejected") {
        const Parameters wrong = init(c, HeadSpec::multi(5), 0);
        CHECK_THROWS_AS(evaluate(wrong, set, vocab), ShapeMismatch);
        const Parameters headless = init(c, HeadSpec::electra(), 0);
        CHECK_THROWS_AS(evaluate(headless, set, vocab), ShapeMismatch);
    }
    SECTION("fully-missing class reports absent metrics") {
        const Parameters p = init(c, HeadSpec::multi(3), 3);
        const EvalReport rep = evaluate(p, set, vocab);
        REQUIRE(rep.per_class.size() == 3);
        CHECK(rep.per_class[0].f1.has_value());
        CHECK(!rep.per_class[1].f1.has_value());
        CHECK(!rep.per_class[1].roc_auc.has_value());
        CHECK(rep.rows == 6);
        REQUIRE(rep.entropy.has_value());
        CHECK(rep.entropy->overall >= 0.0);
        CHECK(rep.entropy->overall <= 1.0);
    }
    SECTION("report serialization") {
        const Parameters p = init(c, HeadSpec::multi(3), 3);
        const EvalReport rep = evaluate(p, set, vocab);
        const auto j = eval_report_to_json(rep);
        CHECK(j.at("per_class").size() == 3);
        CHECK(j.at("per_class")[1].at("f1").is_null());
        std::ostringstream csv;
        eval_report_to_csv(rep, csv);
        CHECK(csv.str().find("label,f1,roc_auc") == 0);
        CHECK(csv.str().find("\nb,,") != std::string::npos);
    }
}
