#include "test_support.hpp"

#include "verigrag/dedup.hpp"

#include <doctest.h>

#include <cmath>

using namespace verigrag;
using namespace verigrag::dedup;

namespace {

netlist::VerilogSource src(const std::string& name, const std::string& text) {
    return netlist::VerilogSource::from_text(name, text);
}

}  // namespace

TEST_SUITE("dedup") {
    TEST_CASE("normalization drops comments and whitespace") {
        const std::vector<std::string> expected{"assign", "y", "=", "a;"};
        CHECK(normalized_tokens("assign  y // c\n = /* x\n y */ a;") == expected);
        CHECK(shingle_set("a b c d") == shingle_set("a  b\nc // z\n d"));
        CHECK(shingle_set("a b c d").size() == 2);
        CHECK(shingle_set("a b").size() == 1);
    }

    TEST_CASE("exact Jaccard on small sets") {
        const std::vector<std::uint64_t> a{1, 2, 3}, b{2, 3, 4}, e{};
        CHECK(exact_jaccard(a, b) == 0.5);
        CHECK(exact_jaccard(a, a) == 1.0);
        CHECK(exact_jaccard(e, e) == 1.0);
        CHECK(exact_jaccard(a, e) == 0.0);
    }

    TEST_CASE("an identical pair loses its duplicate at 0.8") {
        const std::string text = "module m (input a, output y); assign y = a; endmodule";
        const auto kept = jaccard_minhash_dedup({src("a.v", text), src("b.v", text)}, 0.8, 256, 0);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].path == "a.v");
    }

    TEST_CASE("half-overlapping sets both survive and the estimate is near 0.5") {
        const std::vector<std::vector<std::uint64_t>> sets{{11, 22, 33}, {22, 33, 44}};
        CHECK(retained_indices(sets, 0.8, 256, 0) == std::vector<std::size_t>{0, 1});
        const auto sa = minhash_signature(sets[0], 256, 0);
        const auto sb = minhash_signature(sets[1], 256, 0);
        CHECK(std::abs(estimate_jaccard(sa, sb) - 0.5) <= 0.1);
    }

    TEST_CASE("a single source is returned unchanged") {
        const auto one = src("x.v", "module x (input a, output y); assign y = a; endmodule");
        const auto kept = jaccard_minhash_dedup({one});
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].text == one.text);
        CHECK(kept[0].sha256 == one.sha256);
    }

    TEST_CASE("threshold extremes") {
        std::vector<netlist::VerilogSource> sources;
        for (const auto& m : toy::modules(6, 0)) sources.push_back(src(m.name + ".v", m.code));
        const auto zero = jaccard_minhash_dedup(sources, 0.0, 64, 0);
        REQUIRE(zero.size() == 1);
        CHECK(zero[0].path == sources[0].path);
        CHECK(jaccard_minhash_dedup(sources, 1.01, 64, 0).size() == sources.size());
    }

    TEST_CASE("signatures are deterministic per seed") {
        const auto s = shingle_set("a b c d e f g");
        CHECK(minhash_signature(s, 32, 5) == minhash_signature(s, 32, 5));
        CHECK(minhash_signature(s, 32, 5) != minhash_signature(s, 32, 6));
        CHECK(minhash_signature(s, 32, 5).size() == 32);
    }

    TEST_CASE("retained pairs are not near-duplicates in exact terms") {
        std::mt19937_64 rng(17);
        std::uniform_int_distribution<int> tok(0, 11);
        std::vector<std::vector<std::uint64_t>> sets;
        for (int i = 0; i < 40; ++i) {
            std::string text;
            for (int t = 0; t < 12; ++t) text += "t" + std::to_string(tok(rng)) + " ";
            sets.push_back(shingle_set(text));
        }
        const double threshold = 0.5;
        const auto kept = retained_indices(sets, threshold, 256, 1);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            for (std::size_t j = i + 1; j < kept.size(); ++j) {
                CHECK(exact_jaccard(sets[kept[i]], sets[kept[j]]) < threshold + 0.1);
            }
        }
    }
}
