#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "ontotrain/rng.hpp"
#include "ontotrain/smiles.hpp"

using namespace ontotrain;

namespace {

std::vector<std::string> toks(const std::string& smiles) { return tokenize(smiles).tokens; }

// Random grammar-valid string assembled from whole tokens. Concatenation of
// tokens from disjoint productions cannot create new match boundaries, so the
// result must tokenize and round-trip.
std::string random_grammar_string(Rng& rng) {
    static const std::vector<std::string> pool = {
        "C",  "N",  "O",  "S",    "P",    "F",     "I",     "B",     "c",      "n",
        "o",  "s",  "p",  "b",    "Cl",   "Br",    "1",     "2",     "3",      "9",
        "0",  "(",  ")",  "=",    "#",    "-",     "+",     ".",     "/",      "\\",
        "@",  "*",  ":",  "$",    "%10",  "%99",   "[nH]",  "[O-]",  "[C@@H]", "[13C]",
        "[Fe+2]", "[Na+]", "[*]", "[se]", "[N+](=O)"};
    const int n = 1 + static_cast<int>(rng.below(30));
    std::string s;
    for (int i = 0; i < n; ++i) s += pool[rng.below(pool.size())];
    return s;
}

}  // namespace

TEST_CASE("tokenizer grammar productions") {
    CHECK(toks("CCO") == std::vector<std::string>{"C", "C", "O"});
    CHECK(toks("C(Cl)Br") == std::vector<std::string>{"C", "(", "Cl", ")", "Br"});
    CHECK(toks("c1ccccc1") ==
          std::vector<std::string>{"c", "1", "c", "c", "c", "c", "c", "1"});
    CHECK(toks("[nH]") == std::vector<std::string>{"[nH]"});
    CHECK(toks("C%12CC%12") == std::vector<std::string>{"C", "%12", "C", "C", "%12"});
    CHECK(toks("F/C=C/F") == std::vector<std::string>{"F", "/", "C", "=", "C", "/", "F"});
    CHECK(toks("N[C@@H](C)C(=O)O") ==
          std::vector<std::string>{"N", "[C@@H]", "(", "C", ")", "C", "(", "=", "O", ")", "O"});
    CHECK(toks("CC.O") == std::vector<std::string>{"C", "C", ".", "O"});
    CHECK(toks("[Na+].[Cl-]") == std::vector<std::string>{"[Na+]", ".", "[Cl-]"});
}

TEST_CASE("tokenizer error offsets") {
    SECTION("unterminated bracket") {
        try {
            tokenize("C[nH");
            FAIL("expected TokenizeError");
        } catch (const TokenizeError& e) {
            CHECK(e.offset() == 1);
        }
    }
    SECTION("short percent closure") {
        try {
            tokenize("C%1");
            FAIL("expected TokenizeError");
        } catch (const TokenizeError& e) {
            CHECK(e.offset() == 1);
        }
    }
    SECTION("unknown character") {
        try {
            tokenize("CC~C");
            FAIL("expected TokenizeError");
        } catch (const TokenizeError& e) {
            CHECK(e.offset() == 2);
        }
    }
    CHECK_THROWS_AS(tokenize(""), TokenizeError);
    CHECK_THROWS_AS(tokenize("C C"), TokenizeError);
    CHECK_THROWS_AS(tokenize("C\xc3\xa9"), TokenizeError);
    // lowercase l / r are only valid as the second letter of Cl / Br
    CHECK_THROWS_AS(tokenize("l"), TokenizeError);
    CHECK_THROWS_AS(tokenize("Dl"), TokenizeError);
}

TEST_CASE("tokenizer round trip") {
    const std::vector<std::string> tricky = {
        "CCO",
        "c1ccc2cc3ccccc3cc2c1",
        "O=C(O)c1ccccc1OC(=O)C",
        "C1CC2(CC1)CC2",
        "[13CH3][C@H](N)C(=O)[O-]",
        "CC(C)(C)OC(=O)N1CCC%11CC1CC%11",
        "F/C=C\\F",
        "[Fe+2].[O-]S(=O)(=O)[O-]",
        "N#Cc1ccc(cc1)S(=O)(=O)N",
        "CCCCCCCCCCCCCCCC(=O)OCC(COP(=O)([O-])OCC[N+](C)(C)C)O",
    };
    for (const auto& s : tricky) {
        TokenSequence seq = tokenize(s);
        std::string joined;
        for (const auto& t : seq.tokens) joined += t;
        CHECK(joined == s);
        CHECK(seq.source == s);
    }

    Rng rng(20240817);
    for (int i = 0; i < 500; ++i) {
        const std::string s = random_grammar_string(rng);
        std::string joined;
        for (const auto& t : tokenize(s).tokens) joined += t;
        REQUIRE(joined == s);
    }
}

TEST_CASE("vocabulary build order and contents") {
    SECTION("frequency then lexicographic") {
        const Vocabulary v = build_vocabulary({"CCO", "CC"}, 10);
        CHECK(v.size() == 6);
        REQUIRE(v.id_of("C"));
        REQUIRE(v.id_of("O"));
        CHECK(*v.id_of("C") == 4);
        CHECK(*v.id_of("O") == 5);
    }
    SECTION("lexicographic tie break") {
        const Vocabulary v = build_vocabulary({"OC"}, 10);
        CHECK(*v.id_of("C") < *v.id_of("O"));
    }
    SECTION("empty corpus keeps only specials") {
        const Vocabulary v = build_vocabulary(std::vector<std::string>{}, 10);
        CHECK(v.size() == Vocabulary::num_specials);
    }
    SECTION("truncation at max_size") {
        std::vector<std::string> corpus;
        for (int i = 0; i < 700; ++i)
            corpus.push_back("[X" + std::to_string(i) + "]");  // distinct bracket atoms
        const Vocabulary v = build_vocabulary(corpus, 100);
        CHECK(v.size() == 100);
    }
    SECTION("max_size below specials + 1") {
        CHECK_THROWS_AS(build_vocabulary({"C"}, 4), InvalidConfig);
    }
    SECTION("tokenize failure carries corpus line number") {
        try {
            build_vocabulary({"CC", "C~C"}, 10);
            FAIL("expected TokenizeError");
        } catch (const TokenizeError& e) {
            CHECK(e.line() == 2);
            CHECK(e.offset() == 1);
        }
    }
    SECTION("grammar token colliding with a special name is dropped") {
        const Vocabulary v = build_vocabulary({"[PAD]C"}, 10);
        CHECK((!v.id_of("[PAD]").has_value() || *v.id_of("[PAD]") == Vocabulary::pad_id));
        const Encoded e = encode(tokenize("[PAD]"), v, 4);
        CHECK(e.ids[1] == Vocabulary::unk_id);
    }
}

TEST_CASE("vocabulary file round trip and determinism") {
    const std::vector<std::string> corpus = {"CCO", "c1ccccc1", "ClCCl", "[nH]1cccc1"};
    const Vocabulary a = build_vocabulary(corpus, 1400);
    const Vocabulary b = build_vocabulary(corpus, 1400);
    std::ostringstream sa, sb;
    a.save(sa);
    b.save(sb);
    CHECK(sa.str() == sb.str());

    std::istringstream in(sa.str());
    const Vocabulary loaded = Vocabulary::load(in);
    std::ostringstream sc;
    loaded.save(sc);
    CHECK(sc.str() == sa.str());

    std::istringstream bad("[PAD]\n[CLS]\n[FOO]\n[UNK]\nC\n");
    CHECK_THROWS_AS(Vocabulary::load(bad), ParseError);
}

TEST_CASE("encode layout") {
    const Vocabulary v = build_vocabulary({"CCO"}, 10);
    SECTION("CLS, ids, padding, mask") {
        const Encoded e = encode(tokenize("CC"), v, 5);
        CHECK(e.ids == std::vector<std::int32_t>{Vocabulary::cls_id, *v.id_of("C"), *v.id_of("C"),
                                                 Vocabulary::pad_id, Vocabulary::pad_id});
        CHECK(e.mask == std::vector<std::uint8_t>{1, 1, 1, 0, 0});
        CHECK(e.real_len() == 3);
    }
    SECTION("unknown token maps to UNK") {
        const Encoded e = encode(tokenize("CN"), v, 5);
        CHECK(e.ids[2] == Vocabulary::unk_id);
    }
    SECTION("too long is rejected") {
        std::string long_smiles(300, 'C');
        CHECK_THROWS_AS(encode(tokenize(long_smiles), v, 256), SequenceTooLong);
        // max_len - 1 real tokens still fit
        std::string fits(255, 'C');
        CHECK(encode(tokenize(fits), v, 256).real_len() == 256);
    }
    SECTION("max_len below 2") {
        CHECK_THROWS_AS(encode(tokenize("C"), v, 1), InvalidConfig);
    }
}

TEST_CASE("encode/decode round trip for in-vocabulary sequences") {
    const Vocabulary v = build_vocabulary({"CCO", "c1ccccc1", "ClBr[nH]%10", "NPS=#()"}, 1400);
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> texts;
        const int n = 1 + static_cast<int>(rng.below(20));
        for (int i = 0; i < n; ++i) {
            std::int32_t id;
            do {
                id = static_cast<std::int32_t>(
                    Vocabulary::num_specials +
                    rng.below(v.size() - Vocabulary::num_specials));
            } while (Vocabulary::is_special(id));
            texts.push_back(v.text_of(id));
        }
        TokenSequence seq;
        seq.tokens = texts;
        for (const auto& t : texts) seq.source += t;
        const Encoded e = encode(seq, v, 64);
        std::vector<std::string> decoded;
        for (std::size_t i = 0; i < e.ids.size(); ++i) {
            if (!e.mask[i] || Vocabulary::is_special(e.ids[i])) continue;
            decoded.push_back(v.text_of(e.ids[i]));
        }
        REQUIRE(decoded == texts);
    }
}
