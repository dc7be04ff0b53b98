#include "verigrag/verilog.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

namespace verigrag::netlist {

VerilogSource VerilogSource::from_text(std::string path, std::string text) {
    VerilogSource s;
    s.path = std::move(path);
    s.sha256 = sha256_hex(text);
    s.text = std::move(text);
    return s;
}

const char* to_string(PortDirection d) {
    switch (d) {
        case PortDirection::in: return "input";
        case PortDirection::out: return "output";
        case PortDirection::inout: return "inout";
    }
    return "input";
}

const PortDecl* ModuleAST::find_port(std::string_view n) const {
    for (const auto& p : ports) {
        if (p.name == n) return &p;
    }
    return nullptr;
}

const NetDecl* ModuleAST::find_net(std::string_view n) const {
    for (const auto& w : nets) {
        if (w.name == n) return &w;
    }
    return nullptr;
}

int ModuleAST::width_of(std::string_view n) const {
    if (const auto* p = find_port(n)) return p->width;
    if (const auto* w = find_net(n)) return w->width;
    return 0;
}

bool ModuleAST::is_reg(std::string_view n) const {
    if (const auto* p = find_port(n)) return p->is_reg;
    if (const auto* w = find_net(n)) return w->is_reg;
    return false;
}

namespace {

enum class TokKind { identifier, number, symbol, system, end };

struct Token {
    TokKind kind = TokKind::end;
    std::string text;
    SourceLoc loc;
    std::size_t offset = 0;
    // numbers
    std::uint64_t value = 0;
    int width = 0;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }

int bit_length(std::uint64_t v) {
    int n = 0;
    while (v) {
        ++n;
        v >>= 1;
    }
    return std::max(n, 1);
}

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space_and_comments();
            if (pos_ >= text_.size()) break;
            out.push_back(next());
        }
        Token end;
        end.kind = TokKind::end;
        end.loc = {line_, col_};
        end.offset = text_.size();
        out.push_back(end);
        return out;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;

    char peek(std::size_t ahead = 0) const { return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0'; }

    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space_and_comments() {
        while (pos_ < text_.size()) {
            const char c = peek();
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '/' && peek(1) == '/') {
                while (pos_ < text_.size() && peek() != '\n') advance();
            } else if (c == '/' && peek(1) == '*') {
                const SourceLoc start{line_, col_};
                advance();
                advance();
                while (pos_ < text_.size() && !(peek() == '*' && peek(1) == '/')) advance();
                if (pos_ >= text_.size()) throw SyntaxError("unterminated block comment", start.line, start.column);
                advance();
                advance();
            } else if (c == '`') {
                directive();
            } else {
                break;
            }
        }
    }

    void directive() {
        const SourceLoc start{line_, col_};
        advance();
        std::string name;
        while (pos_ < text_.size() && is_ident_char(peek())) {
            name.push_back(peek());
            advance();
        }
        if (name == "timescale" || name == "default_nettype" || name == "resetall") {
            while (pos_ < text_.size() && peek() != '\n') advance();
            return;
        }
        if (name.empty()) throw SyntaxError("stray '`'", start.line, start.column);
        throw UnsupportedConstruct("`" + name, start.line, start.column);
    }

    Token next() {
        Token t;
        t.loc = {line_, col_};
        t.offset = pos_;
        const char c = peek();
        if (is_ident_start(c)) {
            t.kind = TokKind::identifier;
            while (pos_ < text_.size() && is_ident_char(peek())) {
                t.text.push_back(peek());
                advance();
            }
            return t;
        }
        if (c == '$') {
            t.kind = TokKind::system;
            t.text.push_back(c);
            advance();
            while (pos_ < text_.size() && is_ident_char(peek())) {
                t.text.push_back(peek());
                advance();
            }
            return t;
        }
        if (c == '\\') throw UnsupportedConstruct("escaped identifier", t.loc.line, t.loc.column);
        if (c == '"') throw UnsupportedConstruct("string literal", t.loc.line, t.loc.column);
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '\'' && is_base_char(peek(1)))) {
            return number(t);
        }
        static constexpr std::array<std::string_view, 21> kMulti = {
            "===", "!==", "<<<", ">>>", "<=", ">=", "==", "!=", "&&", "||", "<<",
            ">>",  "~&",  "~|",  "~^",  "^~", "**", "->", "+:", "-:", "(*"};
        for (auto sym : kMulti) {
            if (text_.substr(pos_, sym.size()) == sym) {
                if (sym == "(*" && peek(2) == ')') break;  // "@(*)" is '(' '*' ')'
                if (sym == "(*") throw UnsupportedConstruct("attribute", t.loc.line, t.loc.column);
                t.kind = TokKind::symbol;
                t.text = std::string(sym);
                for (std::size_t i = 0; i < sym.size(); ++i) advance();
                return t;
            }
        }
        static constexpr std::string_view kSingle = "()[]{};,.:?=+-*/%&|^~!<>@#'";
        if (kSingle.find(c) != std::string_view::npos) {
            t.kind = TokKind::symbol;
            t.text = std::string(1, c);
            advance();
            return t;
        }
        throw SyntaxError(std::string("unexpected character '") + c + "'", t.loc.line, t.loc.column);
    }

    static bool is_base_char(char c) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return c == 'b' || c == 'o' || c == 'd' || c == 'h' || c == 's';
    }

    std::string read_digits() {
        std::string digits;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '?')) {
            if (peek() != '_') digits.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(peek()))));
            advance();
        }
        return digits;
    }

    Token number(Token t) {
        t.kind = TokKind::number;
        std::string size_digits;
        if (peek() != '\'') {
            while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '_')) {
                if (peek() != '_') size_digits.push_back(peek());
                advance();
            }
            if (std::isalpha(static_cast<unsigned char>(peek()))) {
                throw SyntaxError("malformed number", t.loc.line, t.loc.column);
            }
            // Allow whitespace between the size and the base ("8 'hff").
            std::size_t look = pos_;
            while (look < text_.size() && (text_[look] == ' ' || text_[look] == '\t')) ++look;
            if (look >= text_.size() || text_[look] != '\'') {
                t.value = parse_unsigned(size_digits, 10, t.loc);
                t.width = bit_length(t.value);
                t.text = std::to_string(t.value);
                return t;
            }
            while (pos_ < look) advance();
        }
        advance();  // '
        char base = static_cast<char>(std::tolower(static_cast<unsigned char>(peek())));
        if (base == 's') throw UnsupportedConstruct("signed literal", t.loc.line, t.loc.column);
        if (!is_base_char(base)) throw SyntaxError("malformed based literal", t.loc.line, t.loc.column);
        advance();
        while (pos_ < text_.size() && (peek() == ' ' || peek() == '\t')) advance();
        std::string digits = read_digits();
        if (digits.empty()) throw SyntaxError("based literal without digits", t.loc.line, t.loc.column);
        if (digits.find_first_of("xz?") != std::string::npos) {
            throw UnsupportedConstruct("x/z literal", t.loc.line, t.loc.column);
        }
        const int radix = base == 'b' ? 2 : base == 'o' ? 8 : base == 'd' ? 10 : 16;
        t.value = parse_unsigned(digits, radix, t.loc);
        if (!size_digits.empty()) {
            const auto size = parse_unsigned(size_digits, 10, t.loc);
            if (size == 0) throw SyntaxError("zero-width literal", t.loc.line, t.loc.column);
            if (size > 64) throw UnsupportedConstruct("literal wider than 64 bits", t.loc.line, t.loc.column);
            t.width = static_cast<int>(size);
            if (t.width < 64) t.value &= (std::uint64_t{1} << t.width) - 1;
        } else {
            t.width = bit_length(t.value);
        }
        t.text = (size_digits.empty() ? std::string() : std::to_string(t.width)) + "'" + base + digits;
        return t;
    }

    static std::uint64_t parse_unsigned(const std::string& digits, int radix, SourceLoc loc) {
        if (digits.empty()) throw SyntaxError("empty number", loc.line, loc.column);
        std::uint64_t v = 0;
        for (char ch : digits) {
            int d = std::isdigit(static_cast<unsigned char>(ch)) ? ch - '0' : (ch >= 'a' && ch <= 'f') ? ch - 'a' + 10 : 99;
            if (d >= radix) throw SyntaxError(std::string("invalid digit '") + ch + "'", loc.line, loc.column);
            const std::uint64_t next = v * static_cast<std::uint64_t>(radix) + static_cast<std::uint64_t>(d);
            if (next / static_cast<std::uint64_t>(radix) != v) {
                throw UnsupportedConstruct("literal wider than 64 bits", loc.line, loc.column);
            }
            v = next;
        }
        return v;
    }
};

const std::unordered_set<std::string>& unsupported_keywords() {
    static const std::unordered_set<std::string> k = {
        "parameter", "localparam", "defparam", "initial",   "function", "endfunction", "task",      "endtask",
        "generate",  "endgenerate", "genvar",  "integer",   "real",     "realtime",    "time",      "event",
        "if",        "else",       "case",     "casez",     "casex",    "endcase",     "for",       "while",
        "repeat",    "forever",    "fork",     "join",      "specify",  "endspecify",  "primitive", "endprimitive",
        "table",     "endtable",   "supply0",  "supply1",   "tri",      "wand",        "wor",       "tri0",
        "tri1",      "trireg",     "signed",   "unsigned",  "logic",    "always_ff",   "always_comb", "always_latch",
        "and",       "nand",       "or",       "nor",       "xor",      "xnor",        "not",       "buf",
        "bufif0",    "bufif1",     "notif0",   "notif1",    "pullup",   "pulldown",    "negedge",   "wait",
        "disable",   "assert",     "macromodule", "config", "library",  "interface",   "package",   "class",
        "typedef",   "struct",     "enum",     "automatic", "deassign", "force",       "release",   "default"};
    return k;
}

const std::unordered_set<std::string>& reserved_words() {
    static const std::unordered_set<std::string> k = [] {
        std::unordered_set<std::string> s = unsupported_keywords();
        for (const char* w : {"module", "endmodule", "input", "output", "inout", "wire", "reg", "assign", "always",
                              "posedge", "begin", "end"}) {
            s.insert(w);
        }
        return s;
    }();
    return k;
}

struct BinaryOpInfo {
    int precedence;
    const char* name;  // nullptr: outside the subset
};

const std::unordered_map<std::string, BinaryOpInfo>& binary_ops() {
    static const std::unordered_map<std::string, BinaryOpInfo> k = {
        {"**", {11, nullptr}}, {"*", {10, nullptr}},  {"/", {10, nullptr}},   {"%", {10, nullptr}},
        {"+", {9, "add"}},     {"-", {9, "sub"}},     {"<<", {8, nullptr}},   {">>", {8, nullptr}},
        {"<<<", {8, nullptr}}, {">>>", {8, nullptr}}, {"<", {7, nullptr}},    {"<=", {7, nullptr}},
        {">", {7, nullptr}},   {">=", {7, nullptr}},  {"==", {6, "eq"}},      {"!=", {6, nullptr}},
        {"===", {6, nullptr}}, {"!==", {6, nullptr}}, {"&", {5, "and"}},      {"^", {4, "xor"}},
        {"^~", {4, nullptr}},  {"~^", {4, nullptr}},  {"|", {3, "or"}},       {"&&", {2, nullptr}},
        {"||", {1, nullptr}}};
    return k;
}

class Parser {
public:
    Parser(const VerilogSource& source, std::vector<Token> tokens)
        : source_(source), toks_(std::move(tokens)) {}

    std::vector<ModuleAST> run() {
        std::vector<ModuleAST> modules;
        while (!at_end()) {
            if (is_ident("module")) {
                modules.push_back(module());
            } else if (cur().kind == TokKind::identifier && unsupported_keywords().count(cur().text)) {
                unsupported(cur().text);
            } else {
                syntax("expected 'module'");
            }
        }
        if (modules.empty()) syntax("no module declarations found");
        std::unordered_set<std::string> names;
        for (const auto& m : modules) {
            if (!names.insert(m.name).second) {
                throw SyntaxError("duplicate module '" + m.name + "'", m.loc.line, m.loc.column);
            }
        }
        return modules;
    }

private:
    const VerilogSource& source_;
    std::vector<Token> toks_;
    std::size_t i_ = 0;

    const Token& cur() const { return toks_[i_]; }
    const Token& peek_tok(std::size_t ahead = 1) const { return toks_[std::min(i_ + ahead, toks_.size() - 1)]; }
    bool at_end() const { return cur().kind == TokKind::end; }
    bool is_sym(std::string_view s) const { return cur().kind == TokKind::symbol && cur().text == s; }
    bool is_ident(std::string_view s) const { return cur().kind == TokKind::identifier && cur().text == s; }

    [[noreturn]] void syntax(const std::string& msg) const {
        const auto& t = cur();
        std::string what = t.kind == TokKind::end ? "end of input" : "'" + t.text + "'";
        throw SyntaxError(msg + " (found " + what + ")", t.loc.line, t.loc.column);
    }
    [[noreturn]] void unsupported(const std::string& what) const {
        throw UnsupportedConstruct(what, cur().loc.line, cur().loc.column);
    }

    void expect_sym(std::string_view s) {
        if (!is_sym(s)) syntax("expected '" + std::string(s) + "'");
        ++i_;
    }
    void expect_ident(std::string_view s) {
        if (!is_ident(s)) syntax("expected '" + std::string(s) + "'");
        ++i_;
    }

    Token identifier() {
        if (cur().kind == TokKind::system) unsupported("system task " + cur().text);
        if (cur().kind != TokKind::identifier) syntax("expected identifier");
        if (reserved_words().count(cur().text)) {
            if (unsupported_keywords().count(cur().text)) unsupported(cur().text);
            syntax("unexpected keyword");
        }
        return toks_[i_++];
    }

    int int_literal() {
        if (cur().kind != TokKind::number) {
            if (cur().kind == TokKind::identifier) unsupported("non-constant range or index");
            syntax("expected integer");
        }
        return static_cast<int>(toks_[i_++].value);
    }

    // [msb:lsb] -> (msb, lsb)
    std::pair<int, int> range() {
        expect_sym("[");
        const int msb = int_literal();
        expect_sym(":");
        const int lsb = int_literal();
        expect_sym("]");
        if (msb < lsb) {
            throw UnsupportedConstruct("ascending range", toks_[i_ - 1].loc.line, toks_[i_ - 1].loc.column);
        }
        return {msb, lsb};
    }

    static bool is_direction(const Token& t) {
        return t.kind == TokKind::identifier && (t.text == "input" || t.text == "output" || t.text == "inout");
    }

    static PortDirection direction_of(const std::string& s) {
        if (s == "input") return PortDirection::in;
        if (s == "output") return PortDirection::out;
        return PortDirection::inout;
    }

    ModuleAST module() {
        const Token start = cur();
        expect_ident("module");
        ModuleAST m;
        m.loc = start.loc;
        m.source_begin = start.offset;
        m.source_sha256 = source_.sha256;
        m.name = identifier().text;
        if (is_sym("#")) unsupported("module parameters");

        std::vector<std::pair<std::string, SourceLoc>> header;  // non-ANSI port names
        bool ansi = false;
        if (is_sym("(")) {
            ++i_;
            if (!is_sym(")")) {
                if (is_direction(cur())) {
                    ansi = true;
                    ansi_ports(m);
                } else {
                    for (;;) {
                        const Token t = identifier();
                        header.emplace_back(t.text, t.loc);
                        if (is_sym(",")) {
                            ++i_;
                            continue;
                        }
                        break;
                    }
                }
            }
            expect_sym(")");
        }
        expect_sym(";");

        std::vector<PortDecl> non_ansi_ports;
        while (!is_ident("endmodule")) {
            if (at_end()) syntax("missing 'endmodule'");
            item(m, ansi, header, non_ansi_ports);
        }
        const Token& end = cur();
        m.source_end = end.offset + end.text.size();
        ++i_;

        if (!ansi) {
            for (const auto& [name, loc] : header) {
                auto it = std::find_if(non_ansi_ports.begin(), non_ansi_ports.end(),
                                       [&](const PortDecl& p) { return p.name == name; });
                if (it == non_ansi_ports.end()) {
                    throw SyntaxError("port '" + name + "' has no direction declaration", loc.line, loc.column);
                }
                m.ports.push_back(*it);
            }
        }
        validate(m);
        return m;
    }

    void ansi_ports(ModuleAST& m) {
        PortDirection dir = PortDirection::in;
        bool is_reg = false;
        std::pair<int, int> rng{0, 0};
        for (;;) {
            if (is_direction(cur())) {
                dir = direction_of(toks_[i_++].text);
                is_reg = false;
                rng = {0, 0};
                if (is_ident("wire")) {
                    ++i_;
                } else if (is_ident("reg")) {
                    is_reg = true;
                    ++i_;
                }
                if (is_ident("signed")) unsupported("signed");
                if (is_sym("[")) rng = range();
            }
            const Token name = identifier();
            declare_port(m, name, dir, rng, is_reg);
            if (is_sym(",")) {
                ++i_;
                continue;
            }
            break;
        }
    }

    void declare_port(ModuleAST& m, const Token& name, PortDirection dir, std::pair<int, int> rng, bool is_reg) {
        if (m.find_port(name.text) || m.find_net(name.text)) {
            throw SyntaxError("redeclaration of '" + name.text + "'", name.loc.line, name.loc.column);
        }
        if (is_reg && dir != PortDirection::out) {
            throw SyntaxError("only outputs may be declared reg", name.loc.line, name.loc.column);
        }
        PortDecl p;
        p.name = name.text;
        p.direction = dir;
        p.msb = rng.first;
        p.lsb = rng.second;
        p.width = rng.first - rng.second + 1;
        p.is_reg = is_reg;
        p.loc = name.loc;
        m.ports.push_back(p);
    }

    void item(ModuleAST& m, bool ansi, const std::vector<std::pair<std::string, SourceLoc>>& header,
              std::vector<PortDecl>& non_ansi_ports) {
        if (is_direction(cur())) {
            if (ansi) syntax("port declaration in a module with an ANSI port list");
            port_declaration(header, non_ansi_ports);
            return;
        }
        if (is_ident("wire") || is_ident("reg")) {
            net_declaration(m, non_ansi_ports);
            return;
        }
        if (is_ident("assign")) {
            assign_statement(m);
            return;
        }
        if (is_ident("always")) {
            always_block(m);
            return;
        }
        if (cur().kind == TokKind::identifier && !reserved_words().count(cur().text)) {
            instance(m);
            return;
        }
        if (cur().kind == TokKind::identifier && unsupported_keywords().count(cur().text)) unsupported(cur().text);
        if (cur().kind == TokKind::system) unsupported("system task " + cur().text);
        syntax("expected a module item");
    }

    void port_declaration(const std::vector<std::pair<std::string, SourceLoc>>& header,
                          std::vector<PortDecl>& ports) {
        const PortDirection dir = direction_of(toks_[i_++].text);
        bool is_reg = false;
        if (is_ident("wire")) {
            ++i_;
        } else if (is_ident("reg")) {
            is_reg = true;
            ++i_;
        }
        if (is_ident("signed")) unsupported("signed");
        std::pair<int, int> rng{0, 0};
        if (is_sym("[")) rng = range();
        for (;;) {
            const Token name = identifier();
            const bool in_header = std::any_of(header.begin(), header.end(),
                                               [&](const auto& h) { return h.first == name.text; });
            if (!in_header) {
                throw SyntaxError("'" + name.text + "' is not in the port list", name.loc.line, name.loc.column);
            }
            if (std::any_of(ports.begin(), ports.end(), [&](const PortDecl& p) { return p.name == name.text; })) {
                throw SyntaxError("redeclaration of port '" + name.text + "'", name.loc.line, name.loc.column);
            }
            if (is_reg && dir != PortDirection::out) {
                throw SyntaxError("only outputs may be declared reg", name.loc.line, name.loc.column);
            }
            PortDecl p;
            p.name = name.text;
            p.direction = dir;
            p.msb = rng.first;
            p.lsb = rng.second;
            p.width = rng.first - rng.second + 1;
            p.is_reg = is_reg;
            p.loc = name.loc;
            ports.push_back(p);
            if (is_sym(",")) {
                ++i_;
                continue;
            }
            break;
        }
        expect_sym(";");
    }

    void net_declaration(ModuleAST& m, std::vector<PortDecl>& non_ansi_ports) {
        const bool is_reg = toks_[i_++].text == "reg";
        if (is_ident("signed")) unsupported("signed");
        const bool has_range = is_sym("[");
        std::pair<int, int> rng{0, 0};
        if (has_range) rng = range();
        for (;;) {
            const Token name = identifier();
            if (is_sym("[")) unsupported("memory array");
            // `output q; reg q;` retypes a non-ANSI port.
            auto port = std::find_if(non_ansi_ports.begin(), non_ansi_ports.end(),
                                     [&](const PortDecl& p) { return p.name == name.text; });
            if (port != non_ansi_ports.end()) {
                if (has_range && (rng.first != port->msb || rng.second != port->lsb)) {
                    throw SyntaxError("range of '" + name.text + "' conflicts with its port declaration",
                                      name.loc.line, name.loc.column);
                }
                if (is_reg) {
                    if (port->direction != PortDirection::out) {
                        throw SyntaxError("only outputs may be declared reg", name.loc.line, name.loc.column);
                    }
                    port->is_reg = true;
                }
            } else {
                if (m.find_port(name.text) || m.find_net(name.text)) {
                    throw SyntaxError("redeclaration of '" + name.text + "'", name.loc.line, name.loc.column);
                }
                NetDecl n;
                n.name = name.text;
                n.msb = rng.first;
                n.lsb = rng.second;
                n.width = rng.first - rng.second + 1;
                n.is_reg = is_reg;
                n.loc = name.loc;
                m.nets.push_back(n);
            }
            if (is_sym("=")) {
                if (is_reg) unsupported("reg initializer");
                ++i_;
                ContinuousAssign a;
                a.target = name.text;
                a.loc = name.loc;
                a.value = expression();
                m.items.emplace_back(std::move(a));
            }
            if (is_sym(",")) {
                ++i_;
                continue;
            }
            break;
        }
        expect_sym(";");
    }

    void assign_statement(ModuleAST& m) {
        ++i_;
        if (is_sym("#")) unsupported("delay");
        for (;;) {
            if (is_sym("{")) unsupported("concatenation assignment target");
            const Token target = identifier();
            if (is_sym("[")) unsupported("bit-select assignment target");
            expect_sym("=");
            ContinuousAssign a;
            a.target = target.text;
            a.loc = target.loc;
            a.value = expression();
            m.items.emplace_back(std::move(a));
            if (is_sym(",")) {
                ++i_;
                continue;
            }
            break;
        }
        expect_sym(";");
    }

    void always_block(ModuleAST& m) {
        const SourceLoc loc = cur().loc;
        ++i_;
        if (!is_sym("@")) unsupported("always without event control");
        ++i_;
        if (is_sym("*")) unsupported("combinational always block");
        expect_sym("(");
        if (is_sym("*")) unsupported("combinational always block");
        if (is_ident("negedge")) unsupported("negedge");
        if (!is_ident("posedge")) unsupported("level-sensitive always block");
        ++i_;
        const Token clock = identifier();
        if (is_ident("or") || is_sym(",")) unsupported("multiple-edge sensitivity list");
        expect_sym(")");

        int depth = 0;
        while (is_ident("begin")) {
            ++i_;
            if (is_sym(":")) unsupported("named block");
            ++depth;
        }
        if (is_ident("if")) unsupported("if statement");
        if (is_ident("case") || is_ident("casez") || is_ident("casex")) unsupported("case statement");
        if (is_ident("for")) unsupported("for loop");
        if (is_ident("end")) unsupported("empty always block");
        if (is_sym("{")) unsupported("concatenation assignment target");
        const Token target = identifier();
        if (is_sym("[")) unsupported("bit-select assignment target");
        if (is_sym("=")) unsupported("blocking assignment in always block");
        expect_sym("<=");
        if (is_sym("#")) unsupported("delay");
        RegisterUpdate r;
        r.clock = clock.text;
        r.target = target.text;
        r.loc = loc;
        r.value = expression();
        expect_sym(";");
        for (int d = 0; d < depth; ++d) {
            if (!is_ident("end")) {
                if (at_end()) syntax("expected 'end'");
                unsupported("multiple statements in always block");
            }
            ++i_;
        }
        m.items.emplace_back(std::move(r));
    }

    void instance(ModuleAST& m) {
        Instance inst;
        inst.loc = cur().loc;
        inst.module_name = toks_[i_++].text;
        if (is_sym("#")) unsupported("parameter override");
        if (cur().kind != TokKind::identifier) syntax("expected instance name");
        inst.instance_name = identifier().text;
        if (is_sym("[")) unsupported("instance array");
        expect_sym("(");
        if (!is_sym(")")) {
            inst.positional = !is_sym(".");
            for (;;) {
                PortConnection c;
                c.loc = cur().loc;
                if (inst.positional) {
                    if (is_sym(".")) syntax("mixed named and positional connections");
                    if (!is_sym(",") && !is_sym(")")) c.actual = expression();
                } else {
                    expect_sym(".");
                    c.formal = identifier().text;
                    expect_sym("(");
                    if (!is_sym(")")) c.actual = expression();
                    expect_sym(")");
                }
                inst.connections.push_back(std::move(c));
                if (is_sym(",")) {
                    ++i_;
                    continue;
                }
                break;
            }
        }
        expect_sym(")");
        if (is_sym(",")) unsupported("multiple instances in one statement");
        expect_sym(";");
        m.items.emplace_back(std::move(inst));
    }

    Expr expression() {
        Expr cond = binary(1);
        if (!is_sym("?")) return cond;
        const SourceLoc loc = cur().loc;
        ++i_;
        Expr then_e = expression();
        expect_sym(":");
        Expr else_e = expression();
        Expr e;
        e.kind = Expr::Kind::ternary;
        e.op = "mux";
        e.loc = loc;
        e.operands = {std::move(cond), std::move(then_e), std::move(else_e)};
        return e;
    }

    Expr binary(int min_prec) {
        Expr lhs = unary();
        for (;;) {
            if (cur().kind != TokKind::symbol) return lhs;
            auto it = binary_ops().find(cur().text);
            if (it == binary_ops().end() || it->second.precedence < min_prec) return lhs;
            if (!it->second.name) unsupported("operator " + cur().text);
            const SourceLoc loc = cur().loc;
            ++i_;
            Expr rhs = binary(it->second.precedence + 1);
            Expr e;
            e.kind = Expr::Kind::binary;
            e.op = it->second.name;
            e.loc = loc;
            e.operands = {std::move(lhs), std::move(rhs)};
            lhs = std::move(e);
        }
    }

    Expr unary() {
        if (is_sym("~")) {
            const SourceLoc loc = cur().loc;
            ++i_;
            Expr e;
            e.kind = Expr::Kind::unary;
            e.op = "not";
            e.loc = loc;
            e.operands.push_back(unary());
            return e;
        }
        for (const char* op : {"!", "-", "+", "&", "|", "^", "~&", "~|", "~^", "^~"}) {
            if (is_sym(op)) unsupported(std::string("unary operator ") + op);
        }
        return primary();
    }

    Expr primary() {
        if (cur().kind == TokKind::number) {
            const Token t = toks_[i_++];
            Expr e;
            e.kind = Expr::Kind::constant;
            e.op = "const";
            e.literal = t.text;
            e.value = t.value;
            e.width = t.width;
            e.loc = t.loc;
            return e;
        }
        if (is_sym("(")) {
            ++i_;
            Expr e = expression();
            expect_sym(")");
            return e;
        }
        if (is_sym("{")) {
            const SourceLoc loc = cur().loc;
            ++i_;
            Expr e;
            e.kind = Expr::Kind::concat;
            e.op = "concat";
            e.loc = loc;
            e.operands.push_back(expression());
            if (is_sym("{")) unsupported("replication");
            while (is_sym(",")) {
                ++i_;
                e.operands.push_back(expression());
            }
            expect_sym("}");
            return e;
        }
        if (cur().kind == TokKind::system) unsupported("system function " + cur().text);
        if (cur().kind == TokKind::identifier) {
            const Token t = identifier();
            if (is_sym("(")) unsupported("function call");
            if (is_sym("[")) {
                ++i_;
                const int msb = int_literal();
                int lsb = msb;
                if (is_sym("+:") || is_sym("-:")) unsupported("indexed part-select");
                if (is_sym(":")) {
                    ++i_;
                    lsb = int_literal();
                }
                expect_sym("]");
                if (msb < lsb) throw UnsupportedConstruct("ascending part-select", t.loc.line, t.loc.column);
                Expr e;
                e.kind = Expr::Kind::select;
                e.op = "slice";
                e.name = t.text;
                e.msb = msb;
                e.lsb = lsb;
                e.loc = t.loc;
                return e;
            }
            Expr e;
            e.kind = Expr::Kind::identifier;
            e.name = t.text;
            e.loc = t.loc;
            return e;
        }
        syntax("expected an expression");
    }

    static void check_declared(const ModuleAST& m, const std::string& name, SourceLoc loc) {
        if (!m.find_port(name) && !m.find_net(name)) {
            throw SyntaxError("undeclared identifier '" + name + "'", loc.line, loc.column);
        }
    }

    static void check_expr(const ModuleAST& m, const Expr& e) {
        if (e.kind == Expr::Kind::identifier || e.kind == Expr::Kind::select) check_declared(m, e.name, e.loc);
        for (const auto& o : e.operands) check_expr(m, o);
    }

    static void validate(const ModuleAST& m) {
        for (const auto& item : m.items) {
            if (const auto* a = std::get_if<ContinuousAssign>(&item)) {
                check_declared(m, a->target, a->loc);
                check_expr(m, a->value);
            } else if (const auto* r = std::get_if<RegisterUpdate>(&item)) {
                check_declared(m, r->clock, r->loc);
                check_declared(m, r->target, r->loc);
                check_expr(m, r->value);
            } else if (const auto* inst = std::get_if<Instance>(&item)) {
                for (const auto& c : inst->connections) {
                    if (c.actual) check_expr(m, *c.actual);
                }
            }
        }
    }
};

}  // namespace

std::vector<ModuleAST> parse_verilog(const VerilogSource& source) {
    if (source.text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw SyntaxError("empty source", 1, 1);
    }
    Lexer lexer(source.text);
    Parser parser(source, lexer.run());
    return parser.run();
}

std::vector<std::string> verilog_token_texts(std::string_view text) {
    Lexer lexer(text);
    std::vector<std::string> out;
    for (auto& t : lexer.run()) {
        if (t.kind != TokKind::end) out.push_back(std::move(t.text));
    }
    return out;
}

int expr_width(const Expr& e, const ModuleAST& m) {
    switch (e.kind) {
        case Expr::Kind::identifier: return m.width_of(e.name);
        case Expr::Kind::constant: return e.width;
        case Expr::Kind::select: return e.msb - e.lsb + 1;
        case Expr::Kind::unary: return expr_width(e.operands[0], m);
        case Expr::Kind::binary:
            if (e.op == "eq") return 1;
            return std::max(expr_width(e.operands[0], m), expr_width(e.operands[1], m));
        case Expr::Kind::ternary: return std::max(expr_width(e.operands[1], m), expr_width(e.operands[2], m));
        case Expr::Kind::concat: {
            int w = 0;
            for (const auto& o : e.operands) w += expr_width(o, m);
            return w;
        }
    }
    return 1;
}

namespace {

int max_expr_width(const Expr& e, const ModuleAST& m) {
    int w = expr_width(e, m);
    for (const auto& o : e.operands) w = std::max(w, max_expr_width(o, m));
    return w;
}

}  // namespace

int max_width(const ModuleAST& m) {
    int w = 1;
    for (const auto& p : m.ports) w = std::max(w, p.width);
    for (const auto& n : m.nets) w = std::max(w, n.width);
    for (const auto& item : m.items) {
        if (const auto* a = std::get_if<ContinuousAssign>(&item)) {
            w = std::max(w, max_expr_width(a->value, m));
        } else if (const auto* r = std::get_if<RegisterUpdate>(&item)) {
            w = std::max(w, max_expr_width(r->value, m));
        } else if (const auto* inst = std::get_if<Instance>(&item)) {
            for (const auto& c : inst->connections) {
                if (c.actual) w = std::max(w, max_expr_width(*c.actual, m));
            }
        }
    }
    return w;
}

}  // namespace verigrag::netlist
