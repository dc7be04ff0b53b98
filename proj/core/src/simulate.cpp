#include "verigrag/simulate.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/graph.hpp"
#include "verigrag/nn.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace verigrag::sim {

using netlist::Expr;
using netlist::ModuleAST;
using netlist::PortDirection;

namespace {

std::uint64_t mask(int width) { return width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1; }

const ModuleAST* find_module(const std::vector<ModuleAST>& modules, std::string_view name) {
    for (const auto& m : modules) {
        if (m.name == name) return &m;
    }
    return nullptr;
}

}  // namespace

// One elaborated module instance. Values are memoized per cycle and cleared
// by begin_cycle(); register state survives until tick_commit().
struct Simulator::Instance {
    struct NetDriver {
        enum class Kind { input, reg, assign, child } kind;
        const Expr* expr = nullptr;
        std::size_t child = 0;
        std::string formal;
    };

    const ModuleAST& m;
    std::function<std::uint64_t(const std::string&)> input_fn;
    std::unordered_map<std::string, NetDriver> drivers;
    std::unordered_map<std::string, std::uint64_t> regs;
    std::vector<const netlist::RegisterUpdate*> updates;
    std::vector<std::unique_ptr<Instance>> children;
    std::unordered_map<std::string, std::uint64_t> memo;
    std::unordered_set<std::string> active;

    Instance(const ModuleAST& mod, const std::vector<ModuleAST>& lib, int depth) : m(mod) {
        if (depth > 64) throw ElaborationError("instance hierarchy too deep (recursive instantiation?)");
        for (const auto& p : m.ports) {
            if (p.direction != PortDirection::out) drivers[p.name] = {NetDriver::Kind::input, nullptr, 0, {}};
        }
        for (const auto& item : m.items) {
            if (const auto* a = std::get_if<netlist::ContinuousAssign>(&item)) {
                drivers[a->target] = {NetDriver::Kind::assign, &a->value, 0, {}};
            } else if (const auto* r = std::get_if<netlist::RegisterUpdate>(&item)) {
                drivers[r->target] = {NetDriver::Kind::reg, nullptr, 0, {}};
                regs[r->target] = 0;
                updates.push_back(r);
            } else {
                const auto& inst = std::get<netlist::Instance>(item);
                const ModuleAST* child = find_module(lib, inst.module_name);
                if (!child) throw ElaborationError("unknown module '" + inst.module_name + "'");
                const std::size_t idx = children.size();
                auto sim = std::make_unique<Instance>(*child, lib, depth + 1);
                std::unordered_map<std::string, const Expr*> bound;
                for (std::size_t i = 0; i < inst.connections.size(); ++i) {
                    const auto& c = inst.connections[i];
                    const auto& formal = inst.positional ? child->ports[i].name : c.formal;
                    if (!c.actual) continue;
                    const auto* port = child->find_port(formal);
                    if (port->direction == PortDirection::out) {
                        drivers[c.actual->name] = {NetDriver::Kind::child, nullptr, idx, formal};
                    } else {
                        bound[formal] = &*c.actual;
                    }
                }
                Instance* self = this;
                const ModuleAST* cm = child;
                sim->input_fn = [self, bound, cm](const std::string& formal) -> std::uint64_t {
                    auto it = bound.find(formal);
                    if (it == bound.end()) return 0;  // unconnected inputs read as 0
                    const int w = cm->width_of(formal);
                    return self->eval(*it->second, std::max(w, netlist::expr_width(*it->second, self->m))) & mask(w);
                };
                children.push_back(std::move(sim));
            }
        }
    }

    void begin_cycle() {
        memo.clear();
        for (auto& c : children) c->begin_cycle();
    }

    std::uint64_t net(const std::string& name) {
        if (auto it = memo.find(name); it != memo.end()) return it->second;
        if (!active.insert(name).second) throw ElaborationError("combinational loop through '" + name + "'");
        const int w = m.width_of(name);
        auto it = drivers.find(name);
        if (it == drivers.end()) throw ElaborationError("net '" + name + "' is never driven");
        std::uint64_t v = 0;
        switch (it->second.kind) {
            case NetDriver::Kind::input: v = input_fn ? input_fn(name) : 0; break;
            case NetDriver::Kind::reg: v = regs.at(name); break;
            case NetDriver::Kind::assign:
                v = eval(*it->second.expr, std::max(w, netlist::expr_width(*it->second.expr, m)));
                break;
            case NetDriver::Kind::child: v = children[it->second.child]->net(it->second.formal); break;
        }
        v &= mask(w);
        active.erase(name);
        memo.emplace(name, v);
        return v;
    }

    // Unsigned evaluation in a context of `ctx` bits (operands widen to the context).
    std::uint64_t eval(const Expr& e, int ctx) {
        const int w = std::max(ctx, netlist::expr_width(e, m));
        switch (e.kind) {
            case Expr::Kind::identifier: return net(e.name);
            case Expr::Kind::constant: return e.value;
            case Expr::Kind::select: {
                const auto* p = m.find_port(e.name);
                const int base_lsb = p ? p->lsb : m.find_net(e.name)->lsb;
                return (net(e.name) >> (e.lsb - base_lsb)) & mask(e.msb - e.lsb + 1);
            }
            case Expr::Kind::unary: return ~eval(e.operands[0], w) & mask(w);
            case Expr::Kind::binary: {
                if (e.op == "eq") {
                    const int ow = std::max(netlist::expr_width(e.operands[0], m), netlist::expr_width(e.operands[1], m));
                    return eval(e.operands[0], ow) == eval(e.operands[1], ow) ? 1 : 0;
                }
                const std::uint64_t a = eval(e.operands[0], w);
                const std::uint64_t b = eval(e.operands[1], w);
                std::uint64_t r = 0;
                if (e.op == "add") r = a + b;
                else if (e.op == "sub") r = a - b;
                else if (e.op == "and") r = a & b;
                else if (e.op == "or") r = a | b;
                else if (e.op == "xor") r = a ^ b;
                return r & mask(w);
            }
            case Expr::Kind::ternary: {
                const int cw = netlist::expr_width(e.operands[0], m);
                return eval(e.operands[0], cw) != 0 ? eval(e.operands[1], w) : eval(e.operands[2], w);
            }
            case Expr::Kind::concat: {
                std::uint64_t r = 0;
                for (const auto& o : e.operands) {
                    const int ow = netlist::expr_width(o, m);
                    r = (ow >= 64 ? 0 : r << ow) | (eval(o, ow) & mask(ow));
                }
                return r;
            }
        }
        return 0;
    }

    // Two-phase so every register in the hierarchy samples the same cycle.
    std::vector<std::pair<std::string, std::uint64_t>> pending;

    void tick_prepare() {
        pending.clear();
        for (const auto* r : updates) {
            const int w = m.width_of(r->target);
            pending.emplace_back(r->target, eval(r->value, std::max(w, netlist::expr_width(r->value, m))) & mask(w));
        }
        for (auto& c : children) c->tick_prepare();
    }

    void tick_commit() {
        for (auto& [k, v] : pending) regs[k] = v;
        for (auto& c : children) c->tick_commit();
    }

    void reset() {
        for (auto& [_, v] : regs) v = 0;
        for (auto& c : children) c->reset();
        memo.clear();
    }
};

Simulator::Simulator(const std::vector<ModuleAST>& modules, const std::string& top) {
    const ModuleAST* t = find_module(modules, top);
    if (!t) throw ElaborationError("no module named '" + top + "'");
    netlist::ModuleLibrary lib;
    for (const auto& m : modules) lib.emplace(m.name, &m);
    for (const auto& m : modules) netlist::elaborate_to_graph(m, std::max(1, netlist::max_width(m)), &lib);
    root_ = std::make_unique<Instance>(*t, modules, 0);

    // A top input is a clock when any register in the hierarchy is clocked by a
    // net that aliases it through instance connections.
    std::set<std::string> clocks;
    std::function<void(const ModuleAST&, const std::unordered_map<std::string, std::string>&)> walk =
        [&](const ModuleAST& m, const std::unordered_map<std::string, std::string>& to_top) {
            for (const auto& item : m.items) {
                if (const auto* r = std::get_if<netlist::RegisterUpdate>(&item)) {
                    if (auto it = to_top.find(r->clock); it != to_top.end()) clocks.insert(it->second);
                } else if (const auto* inst = std::get_if<netlist::Instance>(&item)) {
                    const ModuleAST* child = find_module(modules, inst->module_name);
                    std::unordered_map<std::string, std::string> child_map;
                    for (std::size_t i = 0; i < inst->connections.size(); ++i) {
                        const auto& c = inst->connections[i];
                        if (!c.actual || c.actual->kind != Expr::Kind::identifier) continue;
                        const auto& formal = inst->positional ? child->ports[i].name : c.formal;
                        if (auto it = to_top.find(c.actual->name); it != to_top.end()) child_map[formal] = it->second;
                    }
                    walk(*child, child_map);
                }
            }
        };
    std::unordered_map<std::string, std::string> identity;
    for (const auto& p : t->ports) {
        if (p.direction != PortDirection::out) identity[p.name] = p.name;
    }
    walk(*t, identity);
    clocks_.assign(clocks.begin(), clocks.end());
}

Simulator::~Simulator() = default;

void Simulator::reset() { root_->reset(); }

const ModuleAST& Simulator::top() const { return root_->m; }

const std::vector<std::string>& Simulator::clock_inputs() const { return clocks_; }

Values Simulator::step(const Values& inputs) {
    root_->input_fn = [&inputs](const std::string& name) -> std::uint64_t {
        auto it = inputs.find(name);
        return it == inputs.end() ? 0 : it->second;
    };
    root_->begin_cycle();
    Values out;
    for (const auto& p : root_->m.ports) {
        if (p.direction == PortDirection::out) out[p.name] = root_->net(p.name);
    }
    root_->tick_prepare();
    root_->tick_commit();
    root_->input_fn = nullptr;
    return out;
}

std::string top_module_name(const std::vector<ModuleAST>& modules) {
    if (modules.empty()) throw ElaborationError("no modules");
    std::unordered_set<std::string> instantiated;
    for (const auto& m : modules) {
        for (const auto& item : m.items) {
            if (const auto* inst = std::get_if<netlist::Instance>(&item)) instantiated.insert(inst->module_name);
        }
    }
    for (auto it = modules.rbegin(); it != modules.rend(); ++it) {
        if (!instantiated.count(it->name)) return it->name;
    }
    return modules.back().name;
}

EquivalenceResult check_equivalence(const std::vector<ModuleAST>& reference, const std::vector<ModuleAST>& candidate,
                                    const EquivalenceOptions& options) {
    EquivalenceResult result;
    std::unique_ptr<Simulator> ref, cand;
    try {
        ref = std::make_unique<Simulator>(reference, top_module_name(reference));
    } catch (const ElaborationError& e) {
        throw ConfigError(std::string("reference does not elaborate: ") + e.what());
    }
    try {
        cand = std::make_unique<Simulator>(candidate, top_module_name(candidate));
    } catch (const ElaborationError& e) {
        result.message = std::string("candidate does not elaborate: ") + e.what();
        return result;
    }
    const auto& rt = ref->top();
    const auto& ct = cand->top();
    if (rt.ports.size() != ct.ports.size()) {
        result.message = "port count differs";
        return result;
    }
    for (const auto& p : rt.ports) {
        const auto* q = ct.find_port(p.name);
        if (!q || q->direction != p.direction || q->width != p.width) {
            result.message = "port '" + p.name + "' is missing or has a different direction or width";
            return result;
        }
    }
    const auto& clocks = ref->clock_inputs();
    auto rng = nn::seeded_rng(options.seed, 0x51u);
    for (int trial = 0; trial < options.trials; ++trial) {
        ref->reset();
        cand->reset();
        for (int cycle = 0; cycle < options.cycles; ++cycle) {
            Values in;
            for (const auto& p : rt.ports) {
                if (p.direction == PortDirection::out) continue;
                const bool is_clock = std::find(clocks.begin(), clocks.end(), p.name) != clocks.end();
                in[p.name] = is_clock ? 0 : rng() & mask(p.width);
            }
            const Values a = ref->step(in);
            const Values b = cand->step(in);
            for (const auto& [name, v] : a) {
                if (b.at(name) != v) {
                    result.message = "output '" + name + "' differs in trial " + std::to_string(trial) + ", cycle " +
                                     std::to_string(cycle) + ": expected " + std::to_string(v) + ", got " +
                                     std::to_string(b.at(name));
                    return result;
                }
            }
        }
    }
    result.equivalent = true;
    result.message = "equivalent on " + std::to_string(options.trials * options.cycles) + " random cycles";
    return result;
}

}  // namespace verigrag::sim
