#pragma once

// Front end for the supported Verilog subset:
//
//   module/endmodule with ANSI or non-ANSI port lists
//   input/output/inout, wire and reg declarations with [msb:lsb] ranges
//   assign with ~ & | ^ + - ?: == {concatenation}, constant bit/part selects
//   always @(posedge clk) with a single nonblocking register assignment
//   module instantiation with named or positional connections
//
// Anything that is legal Verilog but outside this list raises
// UnsupportedConstruct; malformed text raises SyntaxError.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace verigrag::netlist {

struct SourceLoc {
    int line = 1;
    int column = 1;
};

struct VerilogSource {
    std::string path;
    std::string text;
    std::string sha256;  // hex digest of `text` exactly as read

    static VerilogSource from_text(std::string path, std::string text);
};

enum class PortDirection { in, out, inout };

const char* to_string(PortDirection d);

struct PortDecl {
    std::string name;
    PortDirection direction = PortDirection::in;
    int width = 1;
    int msb = 0;
    int lsb = 0;
    bool is_reg = false;
    SourceLoc loc;
};

struct NetDecl {
    std::string name;
    int width = 1;
    int msb = 0;
    int lsb = 0;
    bool is_reg = false;
    SourceLoc loc;
};

struct Expr {
    enum class Kind { identifier, constant, unary, binary, ternary, concat, select };

    Kind kind = Kind::identifier;
    /// Operator name: "not", "add", "sub", "and", "or", "xor", "eq", "mux", "concat", "slice".
    std::string op;
    std::string name;     // identifier or select base
    std::string literal;  // canonical constant text, e.g. "8'hff" or "3"
    std::uint64_t value = 0;
    int width = 0;  // constants only
    int msb = 0;    // selects only
    int lsb = 0;
    std::vector<Expr> operands;
    SourceLoc loc;
};

struct ContinuousAssign {
    std::string target;
    Expr value;
    SourceLoc loc;
};

/// `always @(posedge clock) target <= value;`
struct RegisterUpdate {
    std::string clock;
    std::string target;
    Expr value;
    SourceLoc loc;
};

struct PortConnection {
    std::string formal;  // empty for positional connections
    std::optional<Expr> actual;
    SourceLoc loc;
};

struct Instance {
    std::string module_name;
    std::string instance_name;
    std::vector<PortConnection> connections;
    bool positional = false;
    SourceLoc loc;
};

using ModuleItem = std::variant<ContinuousAssign, RegisterUpdate, Instance>;

struct ModuleAST {
    std::string name;
    std::vector<PortDecl> ports;
    std::vector<NetDecl> nets;
    std::vector<ModuleItem> items;
    std::string source_sha256;
    std::size_t source_begin = 0;  // byte span of the module text in its source
    std::size_t source_end = 0;
    SourceLoc loc;

    const PortDecl* find_port(std::string_view n) const;
    const NetDecl* find_net(std::string_view n) const;
    /// Declared width of a port or net; 0 when undeclared.
    int width_of(std::string_view n) const;
    bool is_reg(std::string_view n) const;
};

/// One ModuleAST per module declaration, in source order.
std::vector<ModuleAST> parse_verilog(const VerilogSource& source);

/// Lexical token texts (comments dropped). Used by the code tokenizer.
std::vector<std::string> verilog_token_texts(std::string_view text);

/// Self-determined bit width of an expression.
int expr_width(const Expr& e, const ModuleAST& m);

/// Widest declared or inferred signal in the module.
int max_width(const ModuleAST& m);

}  // namespace verigrag::netlist
