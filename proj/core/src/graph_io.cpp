#include "verigrag/graph.hpp"

#include "verigrag/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

namespace verigrag::netlist {

namespace {

using nlohmann::json;

std::string quote(const std::string& s) { return json(s).dump(); }

// Six significant digits; always carries a '.' or exponent so readers see a float.
std::string format_float(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    std::string s(buf);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

const json& field(const json& obj, const char* key) {
    if (!obj.is_object()) throw SchemaError("expected a JSON object");
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(std::string("missing field '") + key + "'");
    return *it;
}

template <typename T>
T field_as(const json& obj, const char* key) {
    try {
        return field(obj, key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("field '") + key + "' has the wrong type: " + e.what());
    }
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("invalid JSON: ") + e.what());
    }
}

void check_version(const json& j) {
    const int v = field_as<int>(j, "schema_version");
    if (v != kGraphSchemaVersion) throw SchemaError("unsupported schema_version " + std::to_string(v));
}

}  // namespace

std::string serialize_graph(const DataPathGraph& g) {
    validate_graph(g);
    std::string out;
    out.reserve(256 + 128 * g.nodes.size() + 64 * g.edges.size());
    out += "{\"schema_version\":" + std::to_string(kGraphSchemaVersion);
    out += ",\"module_name\":" + quote(g.module_name);
    out += ",\"source_sha256\":" + quote(g.source_sha256);
    out += ",\"nodes\":[";
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        if (i) out += ',';
        out += "{\"id\":" + std::to_string(n.id);
        out += ",\"kind\":" + quote(to_string(n.kind));
        out += ",\"op_type\":" + quote(n.op_type);
        out += ",\"io_type\":" + (n.io_type ? quote(*n.io_type) : std::string("null"));
        out += ",\"port_names\":[";
        for (std::size_t k = 0; k < n.port_names.size(); ++k) {
            if (k) out += ',';
            out += quote(n.port_names[k]);
        }
        out += "],\"params\":[";
        for (std::size_t k = 0; k < n.params.size(); ++k) {
            if (k) out += ',';
            out += "[" + quote(n.params[k].first) + "," + quote(n.params[k].second) + "]";
        }
        out += "]}";
    }
    out += "],\"edges\":[";
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        const auto& e = g.edges[i];
        if (i) out += ',';
        out += "{\"src\":" + std::to_string(e.src) + ",\"dst\":" + std::to_string(e.dst) +
               ",\"width\":" + std::to_string(e.width) + ",\"width_norm\":" + format_float(e.width_norm) + "}";
    }
    out += "]}";
    return out;
}

DataPathGraph load_graph(std::string_view text) {
    const json j = parse_json(text);
    check_version(j);
    DataPathGraph g;
    g.module_name = field_as<std::string>(j, "module_name");
    g.source_sha256 = field_as<std::string>(j, "source_sha256");
    const json& nodes = field(j, "nodes");
    const json& edges = field(j, "edges");
    if (!nodes.is_array() || !edges.is_array()) throw SchemaError("nodes and edges must be arrays");
    for (const auto& rec : nodes) {
        GraphNode n;
        n.id = field_as<int>(rec, "id");
        n.kind = node_kind_from_string(field_as<std::string>(rec, "kind"));
        n.op_type = field_as<std::string>(rec, "op_type");
        const json& io = field(rec, "io_type");
        if (!io.is_null()) {
            if (!io.is_string()) throw SchemaError("io_type must be a string or null");
            n.io_type = io.get<std::string>();
        }
        n.port_names = field_as<std::vector<std::string>>(rec, "port_names");
        for (const auto& p : field(rec, "params")) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
                throw SchemaError("params entries must be [name, value] string pairs");
            }
            n.params.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
        }
        g.nodes.push_back(std::move(n));
    }
    for (const auto& rec : edges) {
        GraphEdge e;
        e.src = field_as<int>(rec, "src");
        e.dst = field_as<int>(rec, "dst");
        e.width = field_as<int>(rec, "width");
        e.width_norm = field_as<double>(rec, "width_norm");
        g.edges.push_back(e);
    }
    validate_graph(g);
    return g;
}

std::string serialize_manifest(const CorpusManifest& m) {
    nlohmann::ordered_json j;
    j["schema_version"] = kGraphSchemaVersion;
    j["w_max"] = m.w_max;
    j["num_graphs"] = m.num_graphs;
    j["dedup"] = {{"threshold", m.dedup.threshold}, {"num_hashes", m.dedup.num_hashes}, {"seed", m.dedup.seed}};
    return j.dump(2) + "\n";
}

CorpusManifest load_manifest(std::string_view text) {
    const json j = parse_json(text);
    check_version(j);
    CorpusManifest m;
    m.w_max = field_as<int>(j, "w_max");
    m.num_graphs = field_as<int>(j, "num_graphs");
    const json& d = field(j, "dedup");
    m.dedup.threshold = field_as<double>(d, "threshold");
    m.dedup.num_hashes = field_as<int>(d, "num_hashes");
    m.dedup.seed = field_as<std::uint64_t>(d, "seed");
    if (m.w_max < 1 || m.num_graphs < 0) throw SchemaError("manifest values out of range");
    return m;
}

}  // namespace verigrag::netlist
