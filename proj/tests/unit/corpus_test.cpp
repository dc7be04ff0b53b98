#include "test_support.hpp"

#include "verigrag/corpus.hpp"
#include "verigrag/errors.hpp"

#include <doctest.h>

#include <set>

using namespace verigrag;

TEST_SUITE("corpus") {
    TEST_CASE("toy corpus is deterministic, distinct and includes the flip-flop") {
        const auto a = toy::modules(64, 0);
        const auto b = toy::modules(64, 0);
        REQUIRE(a.size() == 64);
        std::set<std::string> names;
        bool has_ff = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].code == b[i].code);
            names.insert(a[i].name);
            has_ff = has_ff || a[i].code == toy::flip_flop().code;
        }
        CHECK(names.size() == a.size());
        CHECK(has_ff);
        CHECK_THROWS_AS(toy::modules(1000, 0), ConfigError);
    }

    TEST_CASE("every toy module extracts into a valid graph") {
        const auto ex = testing::toy_extract(65, 0);
        CHECK(ex.skipped.empty());
        CHECK(ex.modules.size() == 65);
        CHECK(ex.manifest.num_graphs == 65);
        for (const auto& m : ex.modules) {
            CHECK_NOTHROW(netlist::validate_graph(m.graph));
            CHECK_FALSE(m.description.empty());
            CHECK_FALSE(m.synthesized);
        }
    }

    TEST_CASE("unparsable files are skipped with a message") {
        std::vector<netlist::VerilogSource> sources{
            netlist::VerilogSource::from_text("good.v", toy::flip_flop().code),
            netlist::VerilogSource::from_text("bad.v", "module broken ("),
            netlist::VerilogSource::from_text("undriven.v", testing::read_fixture("verilog/undriven.v"))};
        const auto ex = corpus::extract_sources(sources, {"", "", ""});
        REQUIRE(ex.modules.size() == 1);
        CHECK(ex.skipped.size() == 2);
        CHECK(ex.modules[0].synthesized);
        CHECK(ex.modules[0].description.find("clk") != std::string::npos);
    }

    TEST_CASE("descriptions attach by file stem") {
        testing::TempDir dir;
        write_text_file(dir / "d_flip_flop.v", toy::flip_flop().code);
        write_text_file(dir / "d_flip_flop.txt", "stores d on the clock edge\n");
        const auto ex = corpus::extract_directory(dir.path());
        REQUIRE(ex.modules.size() == 1);
        CHECK(ex.modules[0].description == "stores d on the clock edge");
        CHECK(ex.modules[0].code.rfind("module d_flip_flop", 0) == 0);
    }

    TEST_CASE("graph ids disambiguate name collisions") {
        auto g = testing::toy_extract(1, 0).modules[0].graph;
        auto h = g;
        h.source_sha256 = std::string(64, 'a');
        const auto ids = corpus::assign_graph_ids({g, h, h});
        CHECK(ids[0] == g.module_name);
        CHECK(ids[1] == g.module_name + "@aaaaaaaa");
        CHECK(ids[2] != ids[1]);
        CHECK(ids[2].rfind(ids[1], 0) == 0);
    }

    TEST_CASE("graphs and pairs round-trip through JSONL") {
        const auto ex = testing::toy_extract(5, 0);
        testing::TempDir dir;
        std::vector<netlist::DataPathGraph> graphs;
        std::vector<corpus::PairRecord> pairs;
        for (const auto& m : ex.modules) {
            graphs.push_back(m.graph);
            pairs.push_back({m.description, m.graph_id, m.code, m.synthesized});
        }
        corpus::write_graphs_jsonl(dir / "g.jsonl", graphs);
        corpus::write_pairs_jsonl(dir / "p.jsonl", pairs);
        const auto g2 = corpus::read_graphs_jsonl(dir / "g.jsonl");
        const auto p2 = corpus::read_pairs_jsonl(dir / "p.jsonl");
        REQUIRE(g2.size() == graphs.size());
        REQUIRE(p2.size() == pairs.size());
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            CHECK(netlist::structurally_equal(g2[i], graphs[i]));
            CHECK(p2[i].code == pairs[i].code);
            CHECK(p2[i].graph_id == pairs[i].graph_id);
        }
    }

    TEST_CASE("structural text ignores names") {
        auto g = testing::toy_extract(1, 0).modules[0].graph;
        auto h = g;
        h.module_name = "renamed";
        h.source_sha256 = std::string(64, 'f');
        CHECK(corpus::graph_structural_text(g) == corpus::graph_structural_text(h));
    }
}
