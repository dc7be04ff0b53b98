#pragma once

#include "verigrag/verilog.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace verigrag::netlist {

enum class NodeKind { port_in, port_out, cell, constant };

const char* to_string(NodeKind k);
NodeKind node_kind_from_string(std::string_view s);

struct GraphNode {
    int id = 0;
    NodeKind kind = NodeKind::cell;
    std::string op_type;
    std::optional<std::string> io_type;  // ports only
    std::vector<std::string> port_names;
    std::vector<std::pair<std::string, std::string>> params;
};

struct GraphEdge {
    int src = 0;
    int dst = 0;
    int width = 1;
    double width_norm = 1.0;  // width / corpus-wide maximum
};

struct DataPathGraph {
    std::string module_name;
    std::string source_sha256;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
};

/// Modules that instances may refer to, keyed by module name.
using ModuleLibrary = std::map<std::string, const ModuleAST*, std::less<>>;

/// width / w_max. Throws DomainError unless 1 <= width <= w_max.
double normalize_edge_width(int width, int w_max);

/// Node order: ports in declaration order, then items in source order with
/// operator nodes emitted in post-order ahead of the register or instance
/// they feed. Edges follow the same order; edges into output ports come last.
DataPathGraph elaborate_to_graph(const ModuleAST& ast, int w_max, const ModuleLibrary* library = nullptr);

/// Throws SchemaError when ids are not 0..N-1, an endpoint is missing, a
/// port direction is violated or a width is out of range.
void validate_graph(const DataPathGraph& g);

/// Same attributes and edge list; width_norm compared within `tol`.
bool structurally_equal(const DataPathGraph& a, const DataPathGraph& b, double tol = 1e-6);

/// True when the graph minus every edge leaving a "dff" cell is acyclic.
bool acyclic_without_registers(const DataPathGraph& g);

inline constexpr int kGraphSchemaVersion = 1;

/// Single-line canonical JSON (fixed key order, 6 significant digits).
std::string serialize_graph(const DataPathGraph& g);
/// Throws SchemaError on an unknown schema_version, a missing field or a broken invariant.
DataPathGraph load_graph(std::string_view text);

struct DedupSettings {
    double threshold = 0.8;
    int num_hashes = 256;
    std::uint64_t seed = 0;
};

struct CorpusManifest {
    int w_max = 1;
    int num_graphs = 0;
    DedupSettings dedup;
};

std::string serialize_manifest(const CorpusManifest& m);
CorpusManifest load_manifest(std::string_view text);

}  // namespace verigrag::netlist
