#include "verigrag/graph.hpp"

#include "verigrag/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

namespace verigrag::netlist {

const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::port_in: return "port_in";
        case NodeKind::port_out: return "port_out";
        case NodeKind::cell: return "cell";
        case NodeKind::constant: return "const";
    }
    return "cell";
}

NodeKind node_kind_from_string(std::string_view s) {
    if (s == "port_in") return NodeKind::port_in;
    if (s == "port_out") return NodeKind::port_out;
    if (s == "cell") return NodeKind::cell;
    if (s == "const") return NodeKind::constant;
    throw SchemaError("unknown node kind '" + std::string(s) + "'");
}

double normalize_edge_width(int width, int w_max) {
    if (width <= 0 || w_max <= 0) throw DomainError("edge widths must be positive");
    if (width > w_max) {
        throw DomainError("edge width " + std::to_string(width) + " exceeds w_max " + std::to_string(w_max));
    }
    return static_cast<double>(width) / static_cast<double>(w_max);
}

namespace {

// Source of an edge: a node, or a net whose driver is resolved after all items are seen.
struct Source {
    int node = -1;
    std::string net;
};

struct PendingEdge {
    Source src;
    int dst;
    int width;
};

// A net is driven by a node or aliases another net (`assign a = b;`).
struct Driver {
    int node = -1;
    std::string alias;
    SourceLoc loc;
};

std::string where(SourceLoc loc) { return " at " + std::to_string(loc.line) + ":" + std::to_string(loc.column); }

class Elaborator {
public:
    Elaborator(const ModuleAST& m, int w_max, const ModuleLibrary* lib) : m_(m), w_max_(w_max), lib_(lib) {}

    DataPathGraph run() {
        if (m_.ports.empty() && m_.items.empty()) throw ElaborationError("module '" + m_.name + "' is empty");
        if (w_max_ < max_width(m_)) {
            throw DomainError("w_max " + std::to_string(w_max_) + " is below the widest signal in '" + m_.name + "'");
        }
        g_.module_name = m_.name;
        g_.source_sha256 = m_.source_sha256;

        std::vector<std::pair<const PortDecl*, int>> outputs;
        for (const auto& p : m_.ports) {
            const bool is_out = p.direction == PortDirection::out;
            const int id = add_node(is_out ? NodeKind::port_out : NodeKind::port_in, "port",
                                    {p.name}, {{"WIDTH", std::to_string(p.width)}});
            g_.nodes[static_cast<std::size_t>(id)].io_type = to_string(p.direction);
            if (is_out) {
                outputs.emplace_back(&p, id);
            } else {
                drive(p.name, Driver{id, {}, p.loc});
            }
        }

        for (const auto& item : m_.items) {
            if (const auto* a = std::get_if<ContinuousAssign>(&item)) {
                assign(*a);
            } else if (const auto* r = std::get_if<RegisterUpdate>(&item)) {
                register_update(*r);
            } else {
                instance(std::get<Instance>(item));
            }
        }

        for (const auto& [port, id] : outputs) {
            if (!drivers_.count(port->name)) {
                throw ElaborationError("output '" + port->name + "' of '" + m_.name + "' is never driven");
            }
            pending_.push_back({Source{-1, port->name}, id, port->width});
        }

        for (const auto& e : pending_) {
            const int src = e.src.node >= 0 ? e.src.node : resolve(e.src.net);
            g_.edges.push_back({src, e.dst, e.width, normalize_edge_width(e.width, w_max_)});
        }
        if (!acyclic_without_registers(g_)) {
            throw ElaborationError("combinational loop in '" + m_.name + "'");
        }
        return std::move(g_);
    }

private:
    const ModuleAST& m_;
    int w_max_;
    const ModuleLibrary* lib_;
    DataPathGraph g_;
    std::unordered_map<std::string, Driver> drivers_;
    std::vector<PendingEdge> pending_;

    int add_node(NodeKind kind, std::string op, std::vector<std::string> ports,
                 std::vector<std::pair<std::string, std::string>> params) {
        GraphNode n;
        n.id = static_cast<int>(g_.nodes.size());
        n.kind = kind;
        n.op_type = std::move(op);
        n.port_names = std::move(ports);
        n.params = std::move(params);
        g_.nodes.push_back(std::move(n));
        return g_.nodes.back().id;
    }

    void drive(const std::string& net, Driver d) {
        auto [it, inserted] = drivers_.emplace(net, d);
        if (!inserted) throw ElaborationError("net '" + net + "' is driven more than once" + where(d.loc));
    }

    int resolve(const std::string& net) {
        std::string cur = net;
        for (std::size_t hops = 0; hops <= drivers_.size(); ++hops) {
            auto it = drivers_.find(cur);
            if (it == drivers_.end()) throw ElaborationError("net '" + cur + "' is used but never driven");
            if (it->second.node >= 0) return it->second.node;
            cur = it->second.alias;
        }
        throw ElaborationError("combinational loop through net '" + net + "'");
    }

    // Emits nodes for `e` in post-order; returns how the value reaches its consumer.
    Source lower(const Expr& e) {
        switch (e.kind) {
            case Expr::Kind::identifier: return Source{-1, e.name};
            case Expr::Kind::constant:
                return Source{add_node(NodeKind::constant, "const", {"Y"},
                                       {{"VALUE", std::to_string(e.value)}, {"WIDTH", std::to_string(e.width)}}),
                              {}};
            case Expr::Kind::select: {
                const int base_w = m_.width_of(e.name);
                const int base_lsb = m_.find_port(e.name) ? m_.find_port(e.name)->lsb : m_.find_net(e.name)->lsb;
                const int base_msb = base_lsb + base_w - 1;
                if (e.lsb < base_lsb || e.msb > base_msb) {
                    throw ElaborationError("select of '" + e.name + "' is out of range" + where(e.loc));
                }
                const int w = e.msb - e.lsb + 1;
                const int id = add_node(NodeKind::cell, "slice", {"A", "Y"},
                                        {{"OFFSET", std::to_string(e.lsb - base_lsb)},
                                         {"A_WIDTH", std::to_string(base_w)},
                                         {"Y_WIDTH", std::to_string(w)}});
                pending_.push_back({Source{-1, e.name}, id, base_w});
                return Source{id, {}};
            }
            default: break;
        }
        std::vector<Source> inputs;
        std::vector<int> widths;
        for (const auto& o : e.operands) {
            inputs.push_back(lower(o));
            widths.push_back(expr_width(o, m_));
        }
        const int y = expr_width(e, m_);
        int id = -1;
        if (e.kind == Expr::Kind::unary) {
            id = add_node(NodeKind::cell, e.op, {"A", "Y"},
                          {{"A_WIDTH", std::to_string(widths[0])}, {"Y_WIDTH", std::to_string(y)}});
        } else if (e.kind == Expr::Kind::binary) {
            id = add_node(NodeKind::cell, e.op, {"A", "B", "Y"},
                          {{"A_WIDTH", std::to_string(widths[0])},
                           {"B_WIDTH", std::to_string(widths[1])},
                           {"Y_WIDTH", std::to_string(y)}});
        } else if (e.kind == Expr::Kind::ternary) {
            id = add_node(NodeKind::cell, "mux", {"S", "B", "A", "Y"}, {{"WIDTH", std::to_string(y)}});
        } else {
            std::vector<std::string> ports;
            for (std::size_t i = 0; i < inputs.size(); ++i) ports.push_back("IN" + std::to_string(i));
            ports.emplace_back("Y");
            id = add_node(NodeKind::cell, "concat", std::move(ports), {{"Y_WIDTH", std::to_string(y)}});
        }
        for (std::size_t i = 0; i < inputs.size(); ++i) pending_.push_back({inputs[i], id, widths[i]});
        return Source{id, {}};
    }

    void assign(const ContinuousAssign& a) {
        const auto* port = m_.find_port(a.target);
        if (port && port->direction == PortDirection::in) {
            throw ElaborationError("continuous assignment to input '" + a.target + "'" + where(a.loc));
        }
        if (m_.is_reg(a.target)) {
            throw ElaborationError("continuous assignment to reg '" + a.target + "'" + where(a.loc));
        }
        const Source s = lower(a.value);
        if (s.node >= 0) {
            drive(a.target, Driver{s.node, {}, a.loc});
        } else {
            if (s.net == a.target) throw ElaborationError("net '" + a.target + "' is assigned to itself" + where(a.loc));
            drive(a.target, Driver{-1, s.net, a.loc});
        }
    }

    void register_update(const RegisterUpdate& r) {
        if (!m_.is_reg(r.target)) {
            throw ElaborationError("nonblocking assignment to non-reg '" + r.target + "'" + where(r.loc));
        }
        const int w = m_.width_of(r.target);
        const Source d = lower(r.value);
        const int id = add_node(NodeKind::cell, "dff", {"CLK", "D", "Q"},
                                {{"WIDTH", std::to_string(w)}, {"CLK_POLARITY", "1"}});
        pending_.push_back({Source{-1, r.clock}, id, m_.width_of(r.clock)});
        pending_.push_back({d, id, expr_width(r.value, m_)});
        drive(r.target, Driver{id, {}, r.loc});
    }

    void instance(const Instance& inst) {
        const ModuleAST* child = nullptr;
        if (lib_) {
            auto it = lib_->find(inst.module_name);
            if (it != lib_->end()) child = it->second;
        }
        if (!child) {
            throw ElaborationError("instance '" + inst.instance_name + "' refers to unknown module '" +
                                   inst.module_name + "'" + where(inst.loc));
        }
        if (inst.positional && inst.connections.size() > child->ports.size()) {
            throw ElaborationError("instance '" + inst.instance_name + "' has too many connections" + where(inst.loc));
        }
        // Resolve every connection to a child port before lowering anything.
        std::vector<std::pair<const PortDecl*, const PortConnection*>> bound;
        for (std::size_t i = 0; i < inst.connections.size(); ++i) {
            const auto& c = inst.connections[i];
            const PortDecl* formal = inst.positional ? &child->ports[i] : child->find_port(c.formal);
            if (!formal) {
                throw ElaborationError("module '" + child->name + "' has no port '" + c.formal + "'" + where(c.loc));
            }
            if (std::any_of(bound.begin(), bound.end(), [&](const auto& b) { return b.first == formal; })) {
                throw ElaborationError("port '" + formal->name + "' connected twice" + where(c.loc));
            }
            bound.emplace_back(formal, &c);
        }
        std::vector<std::pair<Source, int>> inputs;
        std::vector<std::string> driven;
        for (const auto& [formal, conn] : bound) {
            if (!conn->actual) continue;
            if (formal->direction == PortDirection::out) {
                if (conn->actual->kind != Expr::Kind::identifier) {
                    throw ElaborationError("output '" + formal->name + "' of instance '" + inst.instance_name +
                                           "' must connect to a plain net" + where(conn->loc));
                }
                const auto* p = m_.find_port(conn->actual->name);
                if (p && p->direction == PortDirection::in) {
                    throw ElaborationError("instance output drives input '" + p->name + "'" + where(conn->loc));
                }
                driven.push_back(conn->actual->name);
            } else {
                inputs.emplace_back(lower(*conn->actual), expr_width(*conn->actual, m_));
            }
        }
        std::vector<std::string> ports;
        for (const auto& p : child->ports) ports.push_back(p.name);
        const int id = add_node(NodeKind::cell, child->name, std::move(ports), {});
        for (const auto& [src, w] : inputs) pending_.push_back({src, id, w});
        for (const auto& net : driven) {
            if (m_.is_reg(net)) throw ElaborationError("instance output drives reg '" + net + "'" + where(inst.loc));
            drive(net, Driver{id, {}, inst.loc});
        }
    }
};

}  // namespace

DataPathGraph elaborate_to_graph(const ModuleAST& ast, int w_max, const ModuleLibrary* library) {
    return Elaborator(ast, w_max, library).run();
}

bool acyclic_without_registers(const DataPathGraph& g) {
    const std::size_t n = g.nodes.size();
    std::vector<std::vector<int>> out(n);
    std::vector<int> indeg(n, 0);
    for (const auto& e : g.edges) {
        if (g.nodes[static_cast<std::size_t>(e.src)].op_type == "dff") continue;
        out[static_cast<std::size_t>(e.src)].push_back(e.dst);
        ++indeg[static_cast<std::size_t>(e.dst)];
    }
    std::deque<int> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
    }
    std::size_t seen = 0;
    while (!ready.empty()) {
        const int v = ready.front();
        ready.pop_front();
        ++seen;
        for (int w : out[static_cast<std::size_t>(v)]) {
            if (--indeg[static_cast<std::size_t>(w)] == 0) ready.push_back(w);
        }
    }
    return seen == n;
}

void validate_graph(const DataPathGraph& g) {
    if (g.nodes.empty()) throw SchemaError("graph '" + g.module_name + "' has no nodes");
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        if (g.nodes[i].id != static_cast<int>(i)) throw SchemaError("node ids must be contiguous from 0");
    }
    const int n = static_cast<int>(g.nodes.size());
    for (const auto& e : g.edges) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) throw SchemaError("edge endpoint out of range");
        if (e.width < 1) throw SchemaError("edge width must be positive");
        if (!(e.width_norm > 0.0 && e.width_norm <= 1.0)) throw SchemaError("width_norm must lie in (0, 1]");
        if (g.nodes[static_cast<std::size_t>(e.dst)].kind == NodeKind::port_in) {
            throw SchemaError("edge enters an input port");
        }
        if (g.nodes[static_cast<std::size_t>(e.src)].kind == NodeKind::port_out) {
            throw SchemaError("edge leaves an output port");
        }
    }
}

bool structurally_equal(const DataPathGraph& a, const DataPathGraph& b, double tol) {
    if (a.module_name != b.module_name || a.source_sha256 != b.source_sha256) return false;
    if (a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size()) return false;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        const auto& x = a.nodes[i];
        const auto& y = b.nodes[i];
        if (x.id != y.id || x.kind != y.kind || x.op_type != y.op_type || x.io_type != y.io_type ||
            x.port_names != y.port_names || x.params != y.params) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.edges.size(); ++i) {
        const auto& x = a.edges[i];
        const auto& y = b.edges[i];
        if (x.src != y.src || x.dst != y.dst || x.width != y.width) return false;
        if (std::abs(x.width_norm - y.width_norm) > tol) return false;
    }
    return true;
}

}  // namespace verigrag::netlist
