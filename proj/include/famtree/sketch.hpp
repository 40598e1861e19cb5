#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "famtree/expr.hpp"
#include "famtree/family.hpp"

namespace famtree {

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int col, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ", col " + std::to_string(col) +
                             ": " + msg),
          line(line), col(col), message(msg) {}
    int line, col;
    std::string message;
};

struct Variable {
    std::string name;
    bool isBool = false;
    std::int64_t lo = 0, hi = 0; // bool vars use 0..1
    std::int64_t init = 0;
    std::uint32_t moduleIndex = 0;
};

struct Formula {
    std::string name;
    Expr body;
};

struct LabelDef {
    std::string name;
    Expr body;
};

struct Constant {
    std::string name;
    std::int64_t value = 0;
};

struct UpdateAssign {
    std::uint32_t varIndex = 0;
    Expr value;
};

struct Branch {
    Expr probability;              // rational-valued; literal 1 when omitted
    std::vector<UpdateAssign> updates;
};

struct Command {
    int labelId = -1;              // -1: unlabeled (interleaved)
    Expr guard;
    std::vector<Branch> branches;
    std::uint32_t moduleIndex = 0;
    int line = 0;
};

struct Module {
    std::string name;
    std::vector<std::uint32_t> variables;  // indices into program.variables
    std::vector<std::uint32_t> commands;   // indices into program.commands
};

/// A parsed guarded-command template: the compact description of a finite
/// family of MDPs, one member per hole assignment.
struct SketchProgram {
    std::vector<Hole> holes;
    std::vector<Variable> variables;
    std::vector<Formula> formulas;
    std::vector<LabelDef> labels;
    std::vector<Constant> constants;
    std::vector<Module> modules;
    std::vector<Command> commands;
    std::vector<std::string> actionLabels;      // synchronization label table
    std::vector<Expr> formulaBodies;            // resolved bodies, by formula index
    std::vector<std::int64_t> constantValues;   // by constant index
    std::vector<std::vector<std::uint32_t>> commandHoles; // holes referenced per command

    std::vector<std::int64_t> initial_valuation() const {
        std::vector<std::int64_t> v(variables.size());
        for (std::size_t i = 0; i < variables.size(); ++i) v[i] = variables[i].init;
        return v;
    }

    EvalContext context(std::span<const std::int64_t> valuation,
                        std::span<const std::int64_t> holeValues) const {
        EvalContext ctx;
        ctx.variables = valuation;
        ctx.holes = holeValues;
        ctx.formulas = &formulaBodies;
        ctx.constants = &constantValues;
        return ctx;
    }

    const Expr* find_label(const std::string& name) const {
        for (const auto& l : labels)
            if (l.name == name) return &l.body;
        return nullptr;
    }
};

/// Reachability specification: reach the target set with probability >= lambda.
struct Specification {
    double lambda = 0.0;
    Rational lambdaExact;
    Expr target;          // boolean state predicate, resolved against the sketch
    std::string text;     // original string, for reports
};

namespace detail {

enum class Tok {
    End, Ident, Int, Decimal, String,
    LParen, RParen, LBracket, RBracket, LBrace, RBrace,
    Semi, Colon, Comma, DotDot, Prime, Arrow, Question,
    Plus, Minus, Star, Slash,
    Eq, Neq, Lt, Le, Gt, Ge,
    Amp, Pipe, Bang
};

struct Token {
    Tok kind;
    std::string text;
    std::int64_t intValue = 0;
    Rational ratValue;
    int line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) {
        int line = 1, col = 1;
        std::size_t i = 0;
        auto advance = [&](std::size_t n) {
            for (std::size_t k = 0; k < n; ++k) {
                if (src[i + k] == '\n') { ++line; col = 1; } else ++col;
            }
            i += n;
        };
        while (i < src.size()) {
            char c = src[i];
            if (std::isspace(static_cast<unsigned char>(c))) { advance(1); continue; }
            if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
                while (i < src.size() && src[i] != '\n') advance(1);
                continue;
            }
            Token t;
            t.line = line; t.col = col;
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::size_t j = i;
                while (j < src.size() &&
                       (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
                t.kind = Tok::Ident;
                t.text = src.substr(i, j - i);
                advance(j - i);
                tokens.push_back(t);
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c))) {
                std::size_t j = i;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
                // lookahead: '.' starts a decimal only if not '..'
                if (j < src.size() && src[j] == '.' && j + 1 < src.size() && src[j + 1] != '.') {
                    std::size_t k = j + 1;
                    while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
                    std::string whole = src.substr(i, j - i);
                    std::string frac = src.substr(j + 1, k - j - 1);
                    std::int64_t den = 1;
                    for (std::size_t d = 0; d < frac.size(); ++d) {
                        if (den > INT64_MAX / 10)
                            throw ParseError(line, col, "decimal literal too precise");
                        den *= 10;
                    }
                    t.kind = Tok::Decimal;
                    t.text = src.substr(i, k - i);
                    t.ratValue = Rational(std::stoll(whole + frac), den);
                    advance(k - i);
                    tokens.push_back(t);
                    continue;
                }
                t.kind = Tok::Int;
                t.text = src.substr(i, j - i);
                t.intValue = std::stoll(t.text);
                advance(j - i);
                tokens.push_back(t);
                continue;
            }
            if (c == '"') {
                std::size_t j = i + 1;
                while (j < src.size() && src[j] != '"') ++j;
                if (j >= src.size()) throw ParseError(line, col, "unterminated string literal");
                t.kind = Tok::String;
                t.text = src.substr(i + 1, j - i - 1);
                advance(j - i + 1);
                tokens.push_back(t);
                continue;
            }
            auto two = [&](char a, char b) {
                return c == a && i + 1 < src.size() && src[i + 1] == b;
            };
            if (two('.', '.')) { t.kind = Tok::DotDot; advance(2); }
            else if (two('-', '>')) { t.kind = Tok::Arrow; advance(2); }
            else if (two('!', '=')) { t.kind = Tok::Neq; advance(2); }
            else if (two('<', '=')) { t.kind = Tok::Le; advance(2); }
            else if (two('>', '=')) { t.kind = Tok::Ge; advance(2); }
            else if (two('=', '=')) { t.kind = Tok::Eq; advance(2); }
            else {
                switch (c) {
                    case '(': t.kind = Tok::LParen; break;
                    case ')': t.kind = Tok::RParen; break;
                    case '[': t.kind = Tok::LBracket; break;
                    case ']': t.kind = Tok::RBracket; break;
                    case '{': t.kind = Tok::LBrace; break;
                    case '}': t.kind = Tok::RBrace; break;
                    case ';': t.kind = Tok::Semi; break;
                    case ':': t.kind = Tok::Colon; break;
                    case ',': t.kind = Tok::Comma; break;
                    case '\'': t.kind = Tok::Prime; break;
                    case '?': t.kind = Tok::Question; break;
                    case '+': t.kind = Tok::Plus; break;
                    case '-': t.kind = Tok::Minus; break;
                    case '*': t.kind = Tok::Star; break;
                    case '/': t.kind = Tok::Slash; break;
                    case '=': t.kind = Tok::Eq; break;
                    case '<': t.kind = Tok::Lt; break;
                    case '>': t.kind = Tok::Gt; break;
                    case '&': t.kind = Tok::Amp; break;
                    case '|': t.kind = Tok::Pipe; break;
                    case '!': t.kind = Tok::Bang; break;
                    default:
                        throw ParseError(line, col, std::string("unexpected character '") + c + "'");
                }
                advance(1);
            }
            tokens.push_back(t);
        }
        Token end;
        end.kind = Tok::End;
        end.line = line; end.col = col;
        tokens.push_back(end);
    }

    std::vector<Token> tokens;
};

class SketchParser {
public:
    explicit SketchParser(const std::string& text) : lex_(text) {}

    SketchProgram parse() {
        Token mt = next();
        if (mt.kind != Tok::Ident || (mt.kind == Tok::Ident && mt.text.empty()))
            throw ParseError(mt.line, mt.col, "expected model type");
        if (mt.text != "mdp")
            throw ParseError(mt.line, mt.col, "unsupported model type '" + mt.text + "' (expected mdp)");
        while (peek().kind != Tok::End) {
            const Token& t = peek();
            if (t.kind != Tok::Ident)
                throw ParseError(t.line, t.col, "expected declaration");
            if (t.text == "hole") parse_hole();
            else if (t.text == "formula") parse_formula();
            else if (t.text == "label") parse_label();
            else if (t.text == "const") parse_constant();
            else if (t.text == "module") parse_module();
            else throw ParseError(t.line, t.col, "unknown declaration '" + t.text + "'");
        }
        finalize();
        return std::move(prog_);
    }

    /// Parses a single expression against an already-built program
    /// (used for inline specification targets).
    static Expr parse_expression(const std::string& text, const SketchProgram& prog) {
        SketchParser p(text);
        p.prog_ = prog;
        p.rebuild_symbols();
        Expr e = p.parse_expr();
        if (p.peek().kind != Tok::End)
            throw ParseError(p.peek().line, p.peek().col, "trailing input after expression");
        p.resolve(e);
        if (p.type_of(e) != ExprType::Bool)
            throw ParseError(e.line, e.col, "target expression must be boolean");
        p.require_no_holes(e, "target expression");
        return e;
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        std::size_t i = std::min(pos_ + ahead, lex_.tokens.size() - 1);
        return lex_.tokens[i];
    }
    Token next() { return lex_.tokens[std::min(pos_++, lex_.tokens.size() - 1)]; }
    void expect(Tok kind, const char* what) {
        Token t = next();
        if (t.kind != kind) throw ParseError(t.line, t.col, std::string("expected ") + what);
    }
    std::string expect_ident(const char* what) {
        Token t = next();
        if (t.kind != Tok::Ident) throw ParseError(t.line, t.col, std::string("expected ") + what);
        return t.text;
    }
    std::int64_t expect_const_int() {
        Expr e = parse_expr();
        resolve(e);
        require_no_holes(e, "constant expression");
        require_no_variables(e, "constant expression");
        if (type_of(e) != ExprType::Int)
            throw ParseError(e.line, e.col, "expected integer constant expression");
        EvalContext ctx;
        ctx.formulas = &prog_.formulaBodies;
        ctx.constants = &prog_.constantValues;
        return eval_int(e, ctx);
    }

    void declare_name(const std::string& name, int line, int col) {
        if (!names_.insert(name).second)
            throw ParseError(line, col, "redeclaration of '" + name + "'");
    }

    void parse_hole() {
        Token kw = next();
        std::string ty = expect_ident("'int'");
        if (ty != "int") throw ParseError(kw.line, kw.col, "only integer holes are supported");
        Token nameTok = next();
        if (nameTok.kind != Tok::Ident) throw ParseError(nameTok.line, nameTok.col, "expected hole name");
        declare_name(nameTok.text, nameTok.line, nameTok.col);
        std::string in = expect_ident("'in'");
        if (in != "in") throw ParseError(nameTok.line, nameTok.col, "expected 'in' after hole name");
        expect(Tok::LBrace, "'{'");
        Hole h;
        h.name = nameTok.text;
        std::int64_t first = expect_const_int();
        if (peek().kind == Tok::DotDot) {
            next();
            std::int64_t last = expect_const_int();
            if (last < first)
                throw ParseError(nameTok.line, nameTok.col, "empty hole range");
            for (std::int64_t v = first; v <= last; ++v) h.values.push_back(v);
        } else {
            h.values.push_back(first);
            while (peek().kind == Tok::Comma) {
                next();
                h.values.push_back(expect_const_int());
            }
            std::unordered_set<std::int64_t> seen;
            for (auto v : h.values)
                if (!seen.insert(v).second)
                    throw ParseError(nameTok.line, nameTok.col, "duplicate value in hole domain");
        }
        expect(Tok::RBrace, "'}'");
        expect(Tok::Semi, "';'");
        holeIndex_[h.name] = static_cast<std::uint32_t>(prog_.holes.size());
        prog_.holes.push_back(std::move(h));
    }

    void parse_formula() {
        next();
        Token nameTok = next();
        if (nameTok.kind != Tok::Ident) throw ParseError(nameTok.line, nameTok.col, "expected formula name");
        declare_name(nameTok.text, nameTok.line, nameTok.col);
        expect(Tok::Eq, "'='");
        Formula f;
        f.name = nameTok.text;
        f.body = parse_expr();
        expect(Tok::Semi, "';'");
        formulaIndex_[f.name] = static_cast<std::uint32_t>(prog_.formulas.size());
        prog_.formulas.push_back(std::move(f));
    }

    void parse_label() {
        next();
        Token nameTok = next();
        if (nameTok.kind != Tok::String)
            throw ParseError(nameTok.line, nameTok.col, "expected quoted label name");
        expect(Tok::Eq, "'='");
        LabelDef l;
        l.name = nameTok.text;
        l.body = parse_expr();
        expect(Tok::Semi, "';'");
        prog_.labels.push_back(std::move(l));
    }

    void parse_constant() {
        next();
        std::string ty = expect_ident("'int'");
        if (ty != "int") throw ParseError(peek().line, peek().col, "only integer constants are supported");
        Token nameTok = next();
        if (nameTok.kind != Tok::Ident) throw ParseError(nameTok.line, nameTok.col, "expected constant name");
        declare_name(nameTok.text, nameTok.line, nameTok.col);
        expect(Tok::Eq, "'='");
        Constant c;
        c.name = nameTok.text;
        c.value = expect_const_int();
        expect(Tok::Semi, "';'");
        constIndex_[c.name] = static_cast<std::uint32_t>(prog_.constants.size());
        prog_.constantValues.push_back(c.value);
        prog_.constants.push_back(std::move(c));
    }

    void parse_module() {
        next();
        Token nameTok = next();
        if (nameTok.kind != Tok::Ident) throw ParseError(nameTok.line, nameTok.col, "expected module name");
        Module mod;
        mod.name = nameTok.text;
        std::uint32_t modIdx = static_cast<std::uint32_t>(prog_.modules.size());
        while (true) {
            const Token& t = peek();
            if (t.kind == Tok::Ident && t.text == "endmodule") { next(); break; }
            if (t.kind == Tok::End) throw ParseError(t.line, t.col, "missing endmodule");
            if (t.kind == Tok::LBracket) {
                mod.commands.push_back(parse_command(modIdx));
            } else if (t.kind == Tok::Ident) {
                mod.variables.push_back(parse_variable(modIdx));
            } else {
                throw ParseError(t.line, t.col, "expected variable declaration or command");
            }
        }
        prog_.modules.push_back(std::move(mod));
    }

    std::uint32_t parse_variable(std::uint32_t modIdx) {
        Token nameTok = next();
        declare_name(nameTok.text, nameTok.line, nameTok.col);
        expect(Tok::Colon, "':'");
        Variable v;
        v.name = nameTok.text;
        v.moduleIndex = modIdx;
        if (peek().kind == Tok::Ident && peek().text == "bool") {
            next();
            v.isBool = true;
            v.lo = 0; v.hi = 1;
        } else {
            expect(Tok::LBracket, "'[' or 'bool'");
            v.lo = expect_const_int();
            expect(Tok::DotDot, "'..'");
            v.hi = expect_const_int();
            expect(Tok::RBracket, "']'");
            if (v.hi < v.lo)
                throw ParseError(nameTok.line, nameTok.col, "empty variable range");
        }
        std::string init = expect_ident("'init'");
        if (init != "init") throw ParseError(nameTok.line, nameTok.col, "expected 'init'");
        if (v.isBool) {
            Token b = next();
            if (b.kind != Tok::Ident || (b.text != "true" && b.text != "false"))
                throw ParseError(b.line, b.col, "expected 'true' or 'false'");
            v.init = b.text == "true" ? 1 : 0;
        } else {
            v.init = expect_const_int();
            if (v.init < v.lo || v.init > v.hi)
                throw ParseError(nameTok.line, nameTok.col, "initial value outside variable bounds");
        }
        expect(Tok::Semi, "';'");
        std::uint32_t idx = static_cast<std::uint32_t>(prog_.variables.size());
        varIndex_[v.name] = idx;
        prog_.variables.push_back(std::move(v));
        return idx;
    }

    std::uint32_t parse_command(std::uint32_t modIdx) {
        Token open = next(); // '['
        Command cmd;
        cmd.moduleIndex = modIdx;
        cmd.line = open.line;
        if (peek().kind == Tok::Ident) {
            std::string label = next().text;
            cmd.labelId = action_label_id(label);
        }
        expect(Tok::RBracket, "']'");
        cmd.guard = parse_expr();
        expect(Tok::Arrow, "'->'");
        cmd.branches.push_back(parse_branch());
        while (peek().kind == Tok::Plus) {
            next();
            cmd.branches.push_back(parse_branch());
        }
        expect(Tok::Semi, "';'");
        std::uint32_t idx = static_cast<std::uint32_t>(prog_.commands.size());
        prog_.commands.push_back(std::move(cmd));
        return idx;
    }

    Branch parse_branch() {
        Branch br;
        std::size_t save = pos_;
        bool haveProb = false;
        try {
            Expr p = parse_expr();
            if (peek().kind == Tok::Colon) {
                next();
                br.probability = std::move(p);
                haveProb = true;
            }
        } catch (const ParseError&) {
            // not a probability prefix; fall through to updates
        }
        if (!haveProb) {
            pos_ = save;
            br.probability = Expr::int_lit(1);
        }
        // updates: 'true' (no-op) or assignments joined by '&'
        if (peek().kind == Tok::Ident && peek().text == "true" &&
            peek(1).kind != Tok::Question && peek(1).kind != Tok::Amp) {
            next();
            return br;
        }
        br.updates.push_back(parse_assign());
        while (peek().kind == Tok::Amp) {
            next();
            br.updates.push_back(parse_assign());
        }
        return br;
    }

    UpdateAssign parse_assign() {
        bool paren = false;
        if (peek().kind == Tok::LParen) { next(); paren = true; }
        Token nameTok = next();
        if (nameTok.kind != Tok::Ident)
            throw ParseError(nameTok.line, nameTok.col, "expected variable in update");
        expect(Tok::Prime, "'''");
        expect(Tok::Eq, "'='");
        UpdateAssign a;
        auto it = varIndex_.find(nameTok.text);
        if (it == varIndex_.end())
            throw ParseError(nameTok.line, nameTok.col, "undeclared variable '" + nameTok.text + "'");
        a.varIndex = it->second;
        if (paren) {
            a.value = parse_expr();
            expect(Tok::RParen, "')'");
        } else {
            // a bare update value ends at a '+' that starts the next branch
            ++bareUpdateDepth_;
            a.value = parse_expr();
            --bareUpdateDepth_;
        }
        return a;
    }

    /// In bare update position, a '+' followed by "expr ':'" separates
    /// branches instead of continuing the sum.
    bool plus_starts_next_branch() {
        if (bareUpdateDepth_ == 0) return false;
        std::size_t save = pos_;
        int depth = bareUpdateDepth_;
        bareUpdateDepth_ = 0;
        next(); // the '+'
        bool separator = false;
        try {
            parse_expr();
            separator = peek().kind == Tok::Colon;
        } catch (const ParseError&) {
            separator = false;
        }
        pos_ = save;
        bareUpdateDepth_ = depth;
        return separator;
    }

    int action_label_id(const std::string& label) {
        for (std::size_t i = 0; i < prog_.actionLabels.size(); ++i)
            if (prog_.actionLabels[i] == label) return static_cast<int>(i);
        prog_.actionLabels.push_back(label);
        return static_cast<int>(prog_.actionLabels.size() - 1);
    }

    // --- expressions -------------------------------------------------------

    Expr parse_expr() { return parse_ite(); }

    Expr parse_ite() {
        Expr cond = parse_or();
        if (peek().kind != Tok::Question) return cond;
        next();
        Expr thenE = parse_ite();
        expect(Tok::Colon, "':'");
        Expr elseE = parse_ite();
        Expr e;
        e.op = Expr::Op::Ite;
        e.line = cond.line; e.col = cond.col;
        e.args = {std::move(cond), std::move(thenE), std::move(elseE)};
        return e;
    }

    Expr binary(Expr::Op op, Expr lhs, Expr rhs) {
        Expr e;
        e.op = op;
        e.line = lhs.line; e.col = lhs.col;
        e.args = {std::move(lhs), std::move(rhs)};
        return e;
    }

    Expr parse_or() {
        Expr e = parse_and();
        while (peek().kind == Tok::Pipe) {
            next();
            e = binary(Expr::Op::Or, std::move(e), parse_and());
        }
        return e;
    }
    Expr parse_and() {
        Expr e = parse_not();
        while (peek().kind == Tok::Amp) {
            next();
            e = binary(Expr::Op::And, std::move(e), parse_not());
        }
        return e;
    }
    Expr parse_not() {
        if (peek().kind == Tok::Bang) {
            Token t = next();
            Expr e;
            e.op = Expr::Op::Not;
            e.line = t.line; e.col = t.col;
            e.args = {parse_not()};
            return e;
        }
        return parse_rel();
    }
    Expr parse_rel() {
        Expr e = parse_add();
        Tok k = peek().kind;
        Expr::Op op;
        switch (k) {
            case Tok::Eq: op = Expr::Op::Eq; break;
            case Tok::Neq: op = Expr::Op::Ne; break;
            case Tok::Lt: op = Expr::Op::Lt; break;
            case Tok::Le: op = Expr::Op::Le; break;
            case Tok::Gt: op = Expr::Op::Gt; break;
            case Tok::Ge: op = Expr::Op::Ge; break;
            default: return e;
        }
        next();
        return binary(op, std::move(e), parse_add());
    }
    Expr parse_add() {
        Expr e = parse_mul();
        while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
            if (peek().kind == Tok::Plus && plus_starts_next_branch()) break;
            Tok k = next().kind;
            e = binary(k == Tok::Plus ? Expr::Op::Add : Expr::Op::Sub, std::move(e), parse_mul());
        }
        return e;
    }
    Expr parse_mul() {
        Expr e = parse_unary();
        while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
            Tok k = next().kind;
            e = binary(k == Tok::Star ? Expr::Op::Mul : Expr::Op::Div, std::move(e), parse_unary());
        }
        return e;
    }
    Expr parse_unary() {
        if (peek().kind == Tok::Minus) {
            Token t = next();
            Expr e;
            e.op = Expr::Op::Neg;
            e.line = t.line; e.col = t.col;
            e.args = {parse_unary()};
            return e;
        }
        return parse_primary();
    }
    Expr parse_primary() {
        Token t = next();
        switch (t.kind) {
            case Tok::Int: {
                Expr e = Expr::int_lit(t.intValue);
                e.line = t.line; e.col = t.col;
                return e;
            }
            case Tok::Decimal: {
                Expr e = Expr::rat_lit(t.ratValue);
                e.line = t.line; e.col = t.col;
                return e;
            }
            case Tok::LParen: {
                Expr e = parse_expr();
                expect(Tok::RParen, "')'");
                return e;
            }
            case Tok::Ident: {
                if (t.text == "true" || t.text == "false") {
                    Expr e = Expr::bool_lit(t.text == "true");
                    e.line = t.line; e.col = t.col;
                    return e;
                }
                if (t.text == "min" || t.text == "max") {
                    expect(Tok::LParen, "'('");
                    Expr e = parse_expr();
                    Expr::Op op = t.text == "min" ? Expr::Op::Min : Expr::Op::Max;
                    do {
                        expect(Tok::Comma, "','");
                        e = binary(op, std::move(e), parse_expr());
                    } while (peek().kind == Tok::Comma);
                    expect(Tok::RParen, "')'");
                    e.line = t.line; e.col = t.col;
                    return e;
                }
                Expr e;
                e.op = Expr::Op::Ref;
                e.refName = t.text;
                e.line = t.line; e.col = t.col;
                return e;
            }
            default:
                throw ParseError(t.line, t.col, "expected expression");
        }
    }

    // --- resolution, typing, validation ------------------------------------

    void rebuild_symbols() {
        for (std::size_t i = 0; i < prog_.holes.size(); ++i)
            holeIndex_[prog_.holes[i].name] = static_cast<std::uint32_t>(i);
        for (std::size_t i = 0; i < prog_.variables.size(); ++i)
            varIndex_[prog_.variables[i].name] = static_cast<std::uint32_t>(i);
        for (std::size_t i = 0; i < prog_.formulas.size(); ++i)
            formulaIndex_[prog_.formulas[i].name] = static_cast<std::uint32_t>(i);
        for (std::size_t i = 0; i < prog_.constants.size(); ++i)
            constIndex_[prog_.constants[i].name] = static_cast<std::uint32_t>(i);
    }

    void resolve(Expr& e) {
        if (e.op == Expr::Op::Ref && e.refKind == RefKind::Unresolved) {
            if (auto it = varIndex_.find(e.refName); it != varIndex_.end()) {
                e.refKind = RefKind::Variable; e.refIndex = it->second;
            } else if (auto f = formulaIndex_.find(e.refName); f != formulaIndex_.end()) {
                e.refKind = RefKind::Formula; e.refIndex = f->second;
            } else if (auto c = constIndex_.find(e.refName); c != constIndex_.end()) {
                e.refKind = RefKind::Constant; e.refIndex = c->second;
            } else if (auto h = holeIndex_.find(e.refName); h != holeIndex_.end()) {
                e.refKind = RefKind::HoleRef; e.refIndex = h->second;
            } else {
                throw ParseError(e.line, e.col, "undeclared identifier '" + e.refName + "'");
            }
        }
        for (Expr& a : e.args) resolve(a);
    }

    ExprType type_of(const Expr& e) {
        using Op = Expr::Op;
        auto want = [&](const Expr& x, ExprType ty, const char* what) {
            if (type_of(x) != ty) throw ParseError(x.line, x.col, std::string("expected ") + what);
        };
        switch (e.op) {
            case Op::IntLit: return ExprType::Int;
            case Op::RatLit: return ExprType::Rat;
            case Op::BoolLit: return ExprType::Bool;
            case Op::Ref:
                switch (e.refKind) {
                    case RefKind::Variable:
                        return prog_.variables[e.refIndex].isBool ? ExprType::Bool : ExprType::Int;
                    case RefKind::Formula: return formula_type(e.refIndex);
                    case RefKind::Constant: return ExprType::Int;
                    case RefKind::HoleRef: return ExprType::Int;
                    default: throw ParseError(e.line, e.col, "unresolved identifier");
                }
            case Op::Neg: {
                ExprType t = type_of(e.args[0]);
                if (t == ExprType::Bool) throw ParseError(e.line, e.col, "cannot negate a boolean");
                return t;
            }
            case Op::Not:
                want(e.args[0], ExprType::Bool, "boolean operand");
                return ExprType::Bool;
            case Op::And: case Op::Or:
                want(e.args[0], ExprType::Bool, "boolean operand");
                want(e.args[1], ExprType::Bool, "boolean operand");
                return ExprType::Bool;
            case Op::Add: case Op::Sub: case Op::Mul: case Op::Min: case Op::Max: {
                ExprType a = type_of(e.args[0]), b = type_of(e.args[1]);
                if (a == ExprType::Bool || b == ExprType::Bool)
                    throw ParseError(e.line, e.col, "arithmetic on booleans");
                return (a == ExprType::Rat || b == ExprType::Rat) ? ExprType::Rat : ExprType::Int;
            }
            case Op::Div: {
                ExprType a = type_of(e.args[0]), b = type_of(e.args[1]);
                if (a == ExprType::Bool || b == ExprType::Bool)
                    throw ParseError(e.line, e.col, "arithmetic on booleans");
                return ExprType::Rat;
            }
            case Op::Eq: case Op::Ne: {
                ExprType a = type_of(e.args[0]), b = type_of(e.args[1]);
                if ((a == ExprType::Bool) != (b == ExprType::Bool))
                    throw ParseError(e.line, e.col, "comparison of boolean and number");
                return ExprType::Bool;
            }
            case Op::Lt: case Op::Le: case Op::Gt: case Op::Ge: {
                want(e.args[0], ExprType::Int, "integer operand");
                want(e.args[1], ExprType::Int, "integer operand");
                return ExprType::Bool;
            }
            case Op::Ite: {
                want(e.args[0], ExprType::Bool, "boolean condition");
                ExprType a = type_of(e.args[1]), b = type_of(e.args[2]);
                if ((a == ExprType::Bool) != (b == ExprType::Bool))
                    throw ParseError(e.line, e.col, "mismatched conditional branches");
                return (a == ExprType::Rat || b == ExprType::Rat) ? ExprType::Rat : a;
            }
        }
        throw ParseError(e.line, e.col, "unhandled expression");
    }

    ExprType formula_type(std::uint32_t idx) {
        if (formulaState_.size() < prog_.formulas.size())
            formulaState_.resize(prog_.formulas.size(), 0);
        if (formulaState_[idx] == 1)
            throw ParseError(0, 0, "cyclic formula definition '" + prog_.formulas[idx].name + "'");
        if (formulaState_[idx] == 2) return formulaTypes_[idx];
        formulaState_[idx] = 1;
        ExprType t = type_of(prog_.formulaBodies[idx]);
        formulaState_[idx] = 2;
        if (formulaTypes_.size() < prog_.formulas.size())
            formulaTypes_.resize(prog_.formulas.size(), ExprType::Int);
        formulaTypes_[idx] = t;
        return t;
    }

    void collect_holes(const Expr& e, std::unordered_set<std::uint32_t>& out) const {
        if (e.op == Expr::Op::Ref) {
            if (e.refKind == RefKind::HoleRef) out.insert(e.refIndex);
            else if (e.refKind == RefKind::Formula) collect_holes(prog_.formulaBodies[e.refIndex], out);
        }
        for (const Expr& a : e.args) collect_holes(a, out);
    }

    void require_no_holes(const Expr& e, const char* where) const {
        std::unordered_set<std::uint32_t> hs;
        collect_holes(e, hs);
        if (!hs.empty())
            throw ParseError(e.line, e.col,
                             std::string("holes are not allowed in ") + where);
    }

    void collect_variables(const Expr& e, std::unordered_set<std::uint32_t>& out) const {
        if (e.op == Expr::Op::Ref) {
            if (e.refKind == RefKind::Variable) out.insert(e.refIndex);
            else if (e.refKind == RefKind::Formula) collect_variables(prog_.formulaBodies[e.refIndex], out);
        }
        for (const Expr& a : e.args) collect_variables(a, out);
    }

    void require_no_variables(const Expr& e, const char* where) const {
        std::unordered_set<std::uint32_t> vs;
        collect_variables(e, vs);
        if (!vs.empty())
            throw ParseError(e.line, e.col,
                             std::string("state variables are not allowed in ") + where);
    }

    void finalize() {
        // resolve formula bodies first so references through formulas work
        prog_.formulaBodies.clear();
        for (auto& f : prog_.formulas) prog_.formulaBodies.push_back(f.body);
        for (auto& b : prog_.formulaBodies) resolve(b);
        for (std::size_t i = 0; i < prog_.formulas.size(); ++i)
            prog_.formulas[i].body = prog_.formulaBodies[i];
        for (std::uint32_t i = 0; i < prog_.formulas.size(); ++i) formula_type(i);

        for (auto& l : prog_.labels) {
            resolve(l.body);
            if (type_of(l.body) != ExprType::Bool)
                throw ParseError(l.body.line, l.body.col, "label '" + l.name + "' must be boolean");
            require_no_holes(l.body, "label definitions");
        }

        prog_.commandHoles.resize(prog_.commands.size());
        for (std::size_t ci = 0; ci < prog_.commands.size(); ++ci) {
            Command& cmd = prog_.commands[ci];
            resolve(cmd.guard);
            if (type_of(cmd.guard) != ExprType::Bool)
                throw ParseError(cmd.guard.line, cmd.guard.col, "guard must be boolean");
            std::unordered_set<std::uint32_t> holes;
            collect_holes(cmd.guard, holes);
            for (auto& br : cmd.branches) {
                resolve(br.probability);
                ExprType pt = type_of(br.probability);
                if (pt == ExprType::Bool)
                    throw ParseError(br.probability.line, br.probability.col,
                                     "probability must be numeric");
                require_no_holes(br.probability, "probability expressions");
                std::unordered_set<std::uint32_t> assigned;
                for (auto& up : br.updates) {
                    resolve(up.value);
                    const Variable& v = prog_.variables[up.varIndex];
                    if (v.moduleIndex != cmd.moduleIndex)
                        throw ParseError(up.value.line, up.value.col,
                                         "variable '" + v.name + "' is owned by another module");
                    ExprType vt = type_of(up.value);
                    if (v.isBool && vt != ExprType::Bool)
                        throw ParseError(up.value.line, up.value.col,
                                         "boolean variable '" + v.name + "' assigned a number");
                    if (!v.isBool && vt != ExprType::Int)
                        throw ParseError(up.value.line, up.value.col,
                                         "integer variable '" + v.name + "' assigned a non-integer");
                    if (!assigned.insert(up.varIndex).second)
                        throw ParseError(up.value.line, up.value.col,
                                         "variable '" + v.name + "' assigned twice in one branch");
                    collect_holes(up.value, holes);
                }
            }
            prog_.commandHoles[ci].assign(holes.begin(), holes.end());
            std::sort(prog_.commandHoles[ci].begin(), prog_.commandHoles[ci].end());
        }

        if (prog_.modules.empty())
            throw ParseError(0, 0, "sketch declares no module");
    }

    Lexer lex_;
    std::size_t pos_ = 0;
    int bareUpdateDepth_ = 0;
    SketchProgram prog_;
    std::unordered_set<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> varIndex_, formulaIndex_, constIndex_, holeIndex_;
    std::vector<int> formulaState_;
    std::vector<ExprType> formulaTypes_;
};

} // namespace detail

inline SketchProgram parse_sketch(const std::string& text) {
    detail::SketchParser parser(text);
    return parser.parse();
}

/// Holes referenced by an expression, transitively through formulas.
inline void collect_referenced_holes(const SketchProgram& program, const Expr& e,
                                     std::unordered_set<std::uint32_t>& out) {
    if (e.op == Expr::Op::Ref) {
        if (e.refKind == RefKind::HoleRef) out.insert(e.refIndex);
        else if (e.refKind == RefKind::Formula)
            collect_referenced_holes(program, program.formulaBodies[e.refIndex], out);
    }
    for (const Expr& a : e.args) collect_referenced_holes(program, a, out);
}

/// Enumerates all hole assignments in lexicographic order (declaration order
/// of holes, domain order of values). The position in this list is the
/// family identifier used everywhere else.
inline std::vector<HoleAssignment> enumerate_assignments(const SketchProgram& program,
                                                         std::uint64_t cap = (1ULL << 32)) {
    HoleSpace space(program.holes, cap);
    std::vector<HoleAssignment> out;
    out.reserve(space.size());
    for (std::uint64_t i = 0; i < space.size(); ++i) out.push_back(space.assignment(i));
    return out;
}

/// Parses `P>=LAMBDA [ F "LABEL" ]` or `P>=LAMBDA [ F (expr) ]`.
inline Specification parse_specification(const std::string& text, const SketchProgram& program) {
    detail::Lexer lex(text);
    const auto& toks = lex.tokens;
    std::size_t i = 0;
    auto fail = [&](const std::string& msg) -> ParseError {
        const auto& t = toks[std::min(i, toks.size() - 1)];
        return ParseError(t.line, t.col, msg);
    };
    if (toks[i].kind != detail::Tok::Ident || toks[i].text != "P")
        throw fail("specification must start with 'P'");
    ++i;
    if (toks[i].kind != detail::Tok::Ge) throw fail("expected '>=' after 'P'");
    ++i;
    Specification spec;
    spec.text = text;
    if (toks[i].kind == detail::Tok::Decimal) spec.lambdaExact = toks[i].ratValue;
    else if (toks[i].kind == detail::Tok::Int) spec.lambdaExact = Rational(toks[i].intValue);
    else throw fail("expected threshold");
    spec.lambda = spec.lambdaExact.to_double();
    if (spec.lambda < 0.0 || spec.lambda > 1.0) throw fail("threshold outside [0,1]");
    ++i;
    if (toks[i].kind != detail::Tok::LBracket) throw fail("expected '['");
    ++i;
    if (toks[i].kind != detail::Tok::Ident || toks[i].text != "F")
        throw fail("only reachability 'F' specifications are supported");
    ++i;
    if (toks[i].kind == detail::Tok::String) {
        const Expr* body = program.find_label(toks[i].text);
        if (!body) throw fail("unknown label \"" + toks[i].text + "\"");
        spec.target = *body;
        ++i;
    } else if (toks[i].kind == detail::Tok::LParen) {
        // re-parse the parenthesized expression against the program
        std::size_t depth = 0;
        std::size_t j = i;
        for (; j < toks.size(); ++j) {
            if (toks[j].kind == detail::Tok::LParen) ++depth;
            if (toks[j].kind == detail::Tok::RParen && --depth == 0) break;
        }
        if (j >= toks.size()) throw fail("unterminated target expression");
        // reconstruct substring positions: simplest is to re-lex from text
        std::size_t open = text.find('(', 0);
        std::size_t close = text.rfind(')');
        std::size_t closeBracket = text.rfind(']');
        if (open == std::string::npos || close == std::string::npos || close > closeBracket)
            throw fail("malformed target expression");
        std::string exprText = text.substr(open, close - open + 1);
        spec.target = detail::SketchParser::parse_expression(exprText, program);
        i = j + 1;
    } else {
        throw fail("expected quoted label or parenthesized expression");
    }
    if (toks[i].kind != detail::Tok::RBracket) throw fail("expected ']'");
    ++i;
    if (toks[i].kind != detail::Tok::End) throw fail("trailing input after specification");
    return spec;
}

} // namespace famtree
