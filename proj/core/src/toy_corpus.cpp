#include "verigrag/toy_corpus.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/nn.hpp"

#include <algorithm>

namespace verigrag::toy {

namespace {

struct BinaryOp {
    const char* key;
    const char* symbol;
    const char* noun;    // "adder"
    const char* result;  // "the sum"
};

constexpr BinaryOp kOps[] = {
    {"and", "&", "AND gate", "the bitwise AND"},
    {"or", "|", "OR gate", "the bitwise OR"},
    {"xor", "^", "XOR gate", "the bitwise XOR"},
    {"add", "+", "adder", "the sum"},
    {"sub", "-", "subtractor", "the difference"},
};

std::string range(int w) { return w == 1 ? "" : "[" + std::to_string(w - 1) + ":0] "; }

std::string bits(int w) { return std::to_string(w) + "-bit"; }

ToyModule comb_binary(const BinaryOp& op, int w) {
    const std::string name = std::string(op.key) + "_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input " + r + "a,\n  input " + r + "b,\n  output " + r + "y\n);\n" +
                "  assign y = a " + op.symbol + " b;\nendmodule\n",
            "A " + bits(w) + " combinational " + op.noun + " that drives y with " + op.result +
                " of inputs a and b."};
}

ToyModule reg_binary(const BinaryOp& op, int w) {
    const std::string name = std::string(op.key) + "_reg_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input clk,\n  input " + r + "a,\n  input " + r + "b,\n  output reg " + r +
                "q\n);\n  always @(posedge clk) q <= a " + op.symbol + " b;\nendmodule\n",
            "A " + bits(w) + " registered " + op.noun + " that stores " + op.result +
                " of inputs a and b in q on every rising clock edge."};
}

ToyModule inverter(int w) {
    const std::string name = "not_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input " + r + "a,\n  output " + r + "y\n);\n  assign y = ~a;\nendmodule\n",
            "A " + bits(w) + " inverter that drives y with the bitwise complement of input a."};
}

ToyModule reg_inverter(int w) {
    const std::string name = "not_reg_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input clk,\n  input " + r + "a,\n  output reg " + r +
                "q\n);\n  always @(posedge clk) q <= ~a;\nendmodule\n",
            "A " + bits(w) + " registered inverter that stores the complement of input a in q on every rising "
                             "clock edge."};
}

ToyModule mux(int w) {
    const std::string name = "mux2_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input s,\n  input " + r + "a,\n  input " + r + "b,\n  output " + r +
                "y\n);\n  assign y = s ? a : b;\nendmodule\n",
            "A " + bits(w) + " two-input multiplexer that drives y with a when select s is high and b otherwise."};
}

ToyModule reg_mux(int w) {
    const std::string name = "mux2_reg_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input clk,\n  input s,\n  input " + r + "a,\n  input " + r + "b,\n  output reg " +
                r + "q\n);\n  always @(posedge clk) q <= s ? a : b;\nendmodule\n",
            "A " + bits(w) + " registered multiplexer that stores a in q when select s is high and b otherwise, "
                             "on every rising clock edge."};
}

ToyModule counter(int w, bool up) {
    const std::string name = std::string(up ? "up" : "down") + "_counter_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input clk,\n  output reg " + r + "q\n);\n  always @(posedge clk) q <= q " +
                (up ? "+" : "-") + " 1;\nendmodule\n",
            "A " + bits(w) + " free-running " + (up ? "up" : "down") + " counter whose output q " +
                (up ? "increments" : "decrements") + " by one on every rising clock edge."};
}

ToyModule accumulator(int w) {
    const std::string name = "accumulator_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input clk,\n  input " + r + "d,\n  output reg " + r +
                "q\n);\n  always @(posedge clk) q <= q + d;\nendmodule\n",
            "A " + bits(w) + " accumulator that adds input d to the running total q on every rising clock edge."};
}

ToyModule plain_register(int w) {
    const std::string name = "register_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input clk,\n  input " + r + "d,\n  output reg " + r +
                "q\n);\n  always @(posedge clk) q <= d;\nendmodule\n",
            "A " + bits(w) + " register that loads input d into output q on every rising clock edge."};
}

ToyModule comparator(int w) {
    const std::string name = "eq_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input " + r + "a,\n  input " + r + "b,\n  output eq\n);\n" +
                "  assign eq = a == b;\nendmodule\n",
            "A " + bits(w) + " equality comparator whose single-bit output eq is high when inputs a and b are "
                             "equal."};
}

ToyModule joiner(int w) {
    const std::string name = "concat_w" + std::to_string(w);
    const std::string r = range(w);
    return {name,
            "module " + name + " (\n  input " + r + "a,\n  input " + r + "b,\n  output " + range(2 * w) +
                "y\n);\n  assign y = {a, b};\nendmodule\n",
            "A " + bits(w) + " concatenation unit that joins inputs a and b into the " + bits(2 * w) +
                " output y with a in the upper half."};
}

ToyModule half_adder() {
    return {"half_adder",
            "module half_adder (\n  input a,\n  input b,\n  output s,\n  output c\n);\n  assign s = a ^ b;\n"
            "  assign c = a & b;\nendmodule\n",
            "A single-bit half adder with sum output s equal to a XOR b and carry output c equal to a AND b."};
}

ToyModule toggle() {
    return {"toggle_ff",
            "module toggle_ff (\n  input clk,\n  output reg q\n);\n  always @(posedge clk) q <= ~q;\nendmodule\n",
            "A toggle flip-flop whose single-bit output q inverts on every rising clock edge."};
}

}  // namespace

ToyModule flip_flop() {
    return {"d_flip_flop",
            "module d_flip_flop (\n  input clk,\n  input d,\n  output reg q\n);\n"
            "  always @(posedge clk) q <= d;\nendmodule\n",
            "A D flip-flop that captures input d on the rising edge of clk and holds it on output q."};
}

std::vector<ToyModule> all_modules(std::uint64_t seed) {
    std::vector<ToyModule> out;
    for (const auto& op : kOps) {
        for (int w : {1, 4, 8, 16}) out.push_back(comb_binary(op, w));
        for (int w : {4, 8, 16}) out.push_back(reg_binary(op, w));
    }
    for (int w : {1, 8, 16}) out.push_back(inverter(w));
    for (int w : {4, 8}) out.push_back(reg_inverter(w));
    for (int w : {1, 4, 8, 16}) out.push_back(mux(w));
    for (int w : {4, 8}) out.push_back(reg_mux(w));
    for (int w : {4, 8, 16}) {
        out.push_back(counter(w, true));
        out.push_back(counter(w, false));
    }
    for (int w : {4, 8, 16}) out.push_back(accumulator(w));
    out.push_back(flip_flop());
    for (int w : {8, 16}) out.push_back(plain_register(w));
    for (int w : {4, 8, 16}) out.push_back(comparator(w));
    for (int w : {4, 8}) out.push_back(joiner(w));
    out.push_back(half_adder());
    out.push_back(toggle());
    auto rng = nn::seeded_rng(seed, 0x70fu);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::vector<ToyModule> modules(std::size_t count, std::uint64_t seed) {
    auto all = all_modules(seed);
    if (count > all.size()) {
        throw ConfigError("the toy corpus has only " + std::to_string(all.size()) + " modules");
    }
    all.resize(count);
    return all;
}

}  // namespace verigrag::toy
