#include <catch2/catch_amalgamated.hpp>

#include "ontotrain/model.hpp"
#include "ontotrain/smiles.hpp"
#include "ontotrain/svg.hpp"

using namespace ontotrain;

namespace {

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t count = 0, pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

}  // namespace

TEST_CASE("curve SVG carries one polyline per series") {
    Series a{"with", {{1, 0.2}, {2, 0.4}, {3, 0.6}}};
    Series b{"without", {{1, 0.1}, {2, 0.3}, {3, 0.5}}};
    const std::string two = svg_curves({a, b}, "title", "epoch", "f1");
    CHECK(count_occurrences(two, "<polyline") == 2);
    CHECK(two.find("with") != std::string::npos);
    const std::string one = svg_curves({a}, "title", "epoch", "f1");
    CHECK(count_occurrences(one, "<polyline") == 1);
    CHECK(one.rfind("<svg", 0) == 0);
}

TEST_CASE("non-finite points are dropped from polylines") {
    Series a{"log", {{1, std::numeric_limits<double>::quiet_NaN()}, {2, 0.5}, {3, 0.6}}};
    const std::string svg = svg_curves({a}, "t", "x", "y");
    CHECK(count_occurrences(svg, "<polyline") == 1);
    CHECK(svg.find("nan") == std::string::npos);
}

TEST_CASE("attention heatmap has seq_len^2 cells per head") {
    ModelConfig c;
    c.vocab_size = 10;
    c.hidden = 8;
    c.heads = 2;
    c.layers = 2;
    c.max_len = 8;
    c.ff_multiplier = 2;
    const Parameters p = init(c, HeadSpec::multi(2), 1);
    const Vocabulary vocab = build_vocabulary({"CCO"}, 10);
    const Encoded e = encode(tokenize("CCO"), vocab, c.max_len);
    ForwardOptions opts;
    opts.want_attention = true;
    const ForwardResult r = forward(p, {e}, opts);
    std::vector<std::string> tokens = {"[CLS]", "C", "C", "O"};
    const std::string svg = svg_attention_layer(tokens, r.attention[0], 0);
    CHECK(count_occurrences(svg, "class=\"cell\"") ==
          static_cast<std::size_t>(c.heads) * 4 * 4);
    CHECK(svg.find("head 0") != std::string::npos);
    CHECK(svg.find("head 1") != std::string::npos);
    CHECK_THROWS_AS(svg_attention_layer(tokens, r.attention[0], 5), ShapeError);
    std::vector<std::string> wrong = {"[CLS]", "C"};
    CHECK_THROWS_AS(svg_attention_layer(wrong, r.attention[0], 0), ShapeError);
}
