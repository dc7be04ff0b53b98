#include "verigrag/graph_encoder.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

namespace verigrag::gnn {

std::vector<std::string> NodeFeaturizer::tokens(const netlist::GraphNode& node) {
    std::vector<std::string> t;
    t.reserve(3 + node.port_names.size() + node.params.size());
    t.push_back(std::string("kind=") + netlist::to_string(node.kind));
    t.push_back("op=" + node.op_type);
    t.push_back("io=" + node.io_type.value_or("none"));
    // Port names only mean something relative to the cell type, so they are crossed with it.
    for (const auto& p : node.port_names) t.push_back("port=" + node.op_type + "." + p);
    for (const auto& [k, v] : node.params) t.push_back("param=" + k + "=" + v);
    return t;
}

RowVector NodeFeaturizer::featurize(const netlist::GraphNode& node) const {
    if (output_dim < 1) throw ConfigError("featurizer output_dim must be positive");
    RowVector v = RowVector::Zero(output_dim);
    for (const auto& tok : tokens(node)) {
        const std::uint64_t h = fnv1a64(tok, seed);
        const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(output_dim));
        v(bucket) += (h >> 63) ? -1.0 : 1.0;
    }
    const double norm = v.norm();
    if (norm == 0.0) {
        // Exact cancellation of signed buckets; fall back to a fixed unit vector.
        v(0) = 1.0;
        return v;
    }
    return v / norm;
}

Matrix NodeFeaturizer::featurize_graph(const netlist::DataPathGraph& g) const {
    Matrix x(static_cast<Eigen::Index>(g.nodes.size()), output_dim);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = featurize(g.nodes[i]);
    return x;
}

GraphView make_view(const netlist::DataPathGraph& g, const NodeFeaturizer& featurizer) {
    GraphView v;
    v.x = featurizer.featurize_graph(g);
    v.edges.reserve(g.edges.size());
    v.e.resize(static_cast<Eigen::Index>(g.edges.size()), 1);
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        v.edges.emplace_back(g.edges[i].src, g.edges[i].dst);
        v.e(static_cast<Eigen::Index>(i), 0) = g.edges[i].width_norm;
    }
    return v;
}

}  // namespace verigrag::gnn
