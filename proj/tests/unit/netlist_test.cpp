#include "test_support.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/graph.hpp"
#include "verigrag/verilog.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <set>
#include <variant>

using namespace verigrag;
using namespace verigrag::netlist;

namespace {

std::vector<ModuleAST> parse_fixture(const char* name) {
    return parse_verilog(VerilogSource::from_text(name, testing::read_fixture(std::string("verilog/") + name)));
}

DataPathGraph elaborate_text(const std::string& code, int w_max) {
    const auto mods = parse_verilog(VerilogSource::from_text("inline.v", code));
    REQUIRE(mods.size() == 1);
    return elaborate_to_graph(mods.front(), w_max);
}

}  // namespace

TEST_SUITE("netlist") {
    TEST_CASE("flip-flop parses to three ports and one register update") {
        const auto mods = parse_fixture("flip_flop.v");
        REQUIRE(mods.size() == 1);
        const auto& m = mods.front();
        CHECK(m.name == "d_flip_flop");
        REQUIRE(m.ports.size() == 3);
        CHECK(m.ports[0].name == "clk");
        CHECK(m.ports[2].direction == PortDirection::out);
        CHECK(m.ports[2].is_reg);
        REQUIRE(m.items.size() == 1);
        const auto* upd = std::get_if<RegisterUpdate>(&m.items.front());
        REQUIRE(upd != nullptr);
        CHECK(upd->clock == "clk");
        CHECK(upd->target == "q");
    }

    TEST_CASE("empty input and garbage raise SyntaxError") {
        CHECK_THROWS_AS(parse_verilog(VerilogSource::from_text("e.v", "")), SyntaxError);
        CHECK_THROWS_AS(parse_verilog(VerilogSource::from_text("e.v", "  // nothing\n")), SyntaxError);
        CHECK_THROWS_AS(parse_verilog(VerilogSource::from_text("e.v", "module m (input a; endmodule")), SyntaxError);
    }

    TEST_CASE("modules come back in source order") {
        const auto mods = parse_fixture("two_modules.v");
        REQUIRE(mods.size() == 2);
        CHECK(mods[0].name == "first");
        CHECK(mods[1].name == "second");
        CHECK(mods[0].source_end <= mods[1].source_begin);
    }

    TEST_CASE("unsupported constructs are reported by name") {
        try {
            parse_fixture("unsupported_initial.v");
            FAIL("expected UnsupportedConstruct");
        } catch (const UnsupportedConstruct& e) {
            CHECK(e.construct() == "initial");
        }
    }

    TEST_CASE("flip-flop elaborates to four nodes and three unit-width edges") {
        const auto g = elaborate_to_graph(parse_fixture("flip_flop.v").front(), 1);
        REQUIRE(g.nodes.size() == 4);
        std::multiset<std::pair<std::string, std::string>> seen;
        for (const auto& n : g.nodes) {
            seen.emplace(to_string(n.kind), n.kind == NodeKind::cell ? n.op_type : n.port_names.front());
        }
        const std::multiset<std::pair<std::string, std::string>> expected{
            {"port_in", "clk"}, {"port_in", "d"}, {"cell", "dff"}, {"port_out", "q"}};
        CHECK(seen == expected);
        REQUIRE(g.edges.size() == 3);
        for (const auto& e : g.edges) CHECK(e.width_norm == 1.0);
        CHECK_NOTHROW(validate_graph(g));
    }

    TEST_CASE("an 8-bit passthrough is two ports and one edge") {
        const auto g = elaborate_to_graph(parse_fixture("passthrough8.v").front(), 8);
        REQUIRE(g.nodes.size() == 2);
        REQUIRE(g.edges.size() == 1);
        CHECK(g.edges[0].src == 0);
        CHECK(g.edges[0].dst == 1);
        CHECK(g.edges[0].width == 8);
        CHECK(g.edges[0].width_norm == 1.0);
        CHECK(elaborate_to_graph(parse_fixture("passthrough8.v").front(), 32).edges[0].width_norm == 0.25);
    }

    TEST_CASE("structural errors raise ElaborationError") {
        CHECK_THROWS_AS(elaborate_to_graph(parse_fixture("undriven.v").front(), 1), ElaborationError);
        CHECK_THROWS_AS(elaborate_to_graph(parse_fixture("multi_driven.v").front(), 1), ElaborationError);
        CHECK_THROWS_AS(elaborate_to_graph(parse_fixture("comb_loop.v").front(), 1), ElaborationError);
        CHECK_THROWS_AS(elaborate_to_graph(parse_fixture("passthrough8.v").front(), 4), DomainError);
    }

    TEST_CASE("instances are flattened through the module library") {
        const auto mods = parse_fixture("hierarchy.v");
        REQUIRE(mods.size() == 2);
        ModuleLibrary lib{{mods[0].name, &mods[0]}, {mods[1].name, &mods[1]}};
        const auto g = elaborate_to_graph(mods[1], 1, &lib);
        CHECK_NOTHROW(validate_graph(g));
        CHECK(acyclic_without_registers(g));
        CHECK_THROWS_AS(elaborate_to_graph(mods[1], 1), ElaborationError);
    }

    TEST_CASE("edge width normalization") {
        CHECK(normalize_edge_width(64, 64) == 1.0);
        CHECK(normalize_edge_width(1, 64) == 0.015625);
        CHECK(normalize_edge_width(8, 32) == 0.25);
        CHECK_THROWS_AS(normalize_edge_width(0, 8), DomainError);
        CHECK_THROWS_AS(normalize_edge_width(9, 8), DomainError);
        CHECK_THROWS_AS(normalize_edge_width(4, 0), DomainError);
    }

    TEST_CASE("graph JSON carries the schema version, nodes and edges") {
        const auto g = elaborate_to_graph(parse_fixture("flip_flop.v").front(), 1);
        const auto j = nlohmann::json::parse(serialize_graph(g));
        CHECK(j.at("schema_version") == 1);
        CHECK(j.at("module_name") == "d_flip_flop");
        CHECK(j.at("nodes").size() == 4);
        CHECK(j.at("edges").size() == 3);
        for (const auto& n : j.at("nodes")) {
            if (n.at("kind") == "cell") CHECK(n.at("io_type").is_null());
            if (n.at("kind") == "port_in") CHECK(n.at("io_type") == "input");
        }
    }

    TEST_CASE("graph JSON round-trips and rejects foreign schema versions") {
        const auto g = elaborate_to_graph(parse_fixture("flip_flop.v").front(), 1);
        const auto text = serialize_graph(g);
        CHECK(structurally_equal(load_graph(text), g));
        CHECK(serialize_graph(load_graph(text)) == text);

        auto j = nlohmann::json::parse(text);
        j["schema_version"] = 99;
        CHECK_THROWS_AS(load_graph(j.dump()), SchemaError);
        auto k = nlohmann::json::parse(text);
        k.erase("edges");
        CHECK_THROWS_AS(load_graph(k.dump()), SchemaError);
    }

    TEST_CASE("random graphs round-trip through JSON") {
        std::mt19937_64 rng(7);
        for (int i = 0; i < 50; ++i) {
            const auto g = testing::random_graph(rng, 12);
            CHECK(structurally_equal(load_graph(serialize_graph(g)), g));
        }
    }

    TEST_CASE("elaboration is deterministic") {
        const std::string code =
            "module acc (input clk, input [3:0] x, output reg [3:0] s);\n"
            "  always @(posedge clk) s <= s + x;\nendmodule\n";
        CHECK(serialize_graph(elaborate_text(code, 4)) == serialize_graph(elaborate_text(code, 4)));
    }

    TEST_CASE("register feedback keeps the combinational part acyclic") {
        const auto g = elaborate_text(
            "module acc (input clk, input [3:0] x, output reg [3:0] s);\n"
            "  always @(posedge clk) s <= s + x;\nendmodule\n",
            4);
        CHECK(acyclic_without_registers(g));
        bool feedback = false;
        for (const auto& e : g.edges) {
            if (g.nodes[static_cast<std::size_t>(e.src)].op_type == "dff" &&
                g.nodes[static_cast<std::size_t>(e.dst)].kind == NodeKind::cell)
                feedback = true;
        }
        CHECK(feedback);
    }

    TEST_CASE("port nodes respect direction") {
        std::mt19937_64 rng(3);
        for (const auto& m : toy::modules(16, 0)) {
            const auto g = elaborate_text(m.code, 32);
            for (const auto& e : g.edges) {
                CHECK(g.nodes[static_cast<std::size_t>(e.dst)].kind != NodeKind::port_in);
                CHECK(g.nodes[static_cast<std::size_t>(e.src)].kind != NodeKind::port_out);
            }
            for (const auto& n : g.nodes) {
                if (n.kind == NodeKind::port_in) CHECK(n.io_type == std::optional<std::string>("input"));
                if (n.kind == NodeKind::port_out) CHECK(n.io_type == std::optional<std::string>("output"));
                if (n.kind == NodeKind::cell) CHECK_FALSE(n.io_type.has_value());
            }
        }
    }

    TEST_CASE("manifest round-trips") {
        CorpusManifest m;
        m.w_max = 32;
        m.num_graphs = 5;
        m.dedup = {0.7, 128, 9};
        const auto back = load_manifest(serialize_manifest(m));
        CHECK(back.w_max == 32);
        CHECK(back.num_graphs == 5);
        CHECK(back.dedup.threshold == 0.7);
        CHECK(back.dedup.num_hashes == 128);
        CHECK(back.dedup.seed == 9);
    }
}
