#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "famtree/rational.hpp"

namespace famtree {

enum class ExprType { Int, Bool, Rat };

enum class RefKind { Unresolved, Variable, Formula, Constant, HoleRef };

/// Expression tree over integer arithmetic (+, -, *, min, max), comparisons,
/// boolean connectives, conditionals, and rational literals/division (the
/// latter only legal in probability position).
struct Expr {
    enum class Op {
        IntLit, RatLit, BoolLit, Ref,
        Neg, Not,
        Add, Sub, Mul, Div,
        And, Or,
        Eq, Ne, Lt, Le, Gt, Ge,
        Min, Max,
        Ite
    };

    Op op = Op::IntLit;
    std::int64_t intValue = 0;
    Rational ratValue;
    bool boolValue = false;
    RefKind refKind = RefKind::Unresolved;
    std::uint32_t refIndex = 0;
    std::string refName;
    std::vector<Expr> args;
    int line = 0, col = 0;

    static Expr int_lit(std::int64_t v) { Expr e; e.op = Op::IntLit; e.intValue = v; return e; }
    static Expr bool_lit(bool v) { Expr e; e.op = Op::BoolLit; e.boolValue = v; return e; }
    static Expr rat_lit(Rational v) { Expr e; e.op = Op::RatLit; e.ratValue = v; return e; }
};

/// Everything needed to evaluate a resolved expression: current variable
/// valuation, hole values for the member under consideration, and the
/// program's formula/constant tables.
struct EvalContext {
    std::span<const std::int64_t> variables;
    std::span<const std::int64_t> holes;
    const std::vector<Expr>* formulas = nullptr;   // resolved formula bodies
    const std::vector<std::int64_t>* constants = nullptr;
};

inline std::int64_t eval_int(const Expr& e, const EvalContext& ctx);

inline std::int64_t eval_ref_int(const Expr& e, const EvalContext& ctx) {
    switch (e.refKind) {
        case RefKind::Variable: return ctx.variables[e.refIndex];
        case RefKind::HoleRef:
            if (e.refIndex >= ctx.holes.size())
                throw std::logic_error("hole value not available: " + e.refName);
            return ctx.holes[e.refIndex];
        case RefKind::Formula: return eval_int((*ctx.formulas)[e.refIndex], ctx);
        case RefKind::Constant: return (*ctx.constants)[e.refIndex];
        default: throw std::logic_error("unresolved identifier: " + e.refName);
    }
}

/// Integer/boolean evaluation; booleans are 0/1. Assumes the expression
/// passed type checking (no rational literals or division).
inline std::int64_t eval_int(const Expr& e, const EvalContext& ctx) {
    using Op = Expr::Op;
    switch (e.op) {
        case Op::IntLit: return e.intValue;
        case Op::BoolLit: return e.boolValue ? 1 : 0;
        case Op::RatLit: throw std::logic_error("rational literal in integer context");
        case Op::Ref: return eval_ref_int(e, ctx);
        case Op::Neg: return -eval_int(e.args[0], ctx);
        case Op::Not: return eval_int(e.args[0], ctx) ? 0 : 1;
        case Op::Add: return eval_int(e.args[0], ctx) + eval_int(e.args[1], ctx);
        case Op::Sub: return eval_int(e.args[0], ctx) - eval_int(e.args[1], ctx);
        case Op::Mul: return eval_int(e.args[0], ctx) * eval_int(e.args[1], ctx);
        case Op::Div: throw std::logic_error("division in integer context");
        case Op::And: return (eval_int(e.args[0], ctx) && eval_int(e.args[1], ctx)) ? 1 : 0;
        case Op::Or: return (eval_int(e.args[0], ctx) || eval_int(e.args[1], ctx)) ? 1 : 0;
        case Op::Eq: return eval_int(e.args[0], ctx) == eval_int(e.args[1], ctx) ? 1 : 0;
        case Op::Ne: return eval_int(e.args[0], ctx) != eval_int(e.args[1], ctx) ? 1 : 0;
        case Op::Lt: return eval_int(e.args[0], ctx) < eval_int(e.args[1], ctx) ? 1 : 0;
        case Op::Le: return eval_int(e.args[0], ctx) <= eval_int(e.args[1], ctx) ? 1 : 0;
        case Op::Gt: return eval_int(e.args[0], ctx) > eval_int(e.args[1], ctx) ? 1 : 0;
        case Op::Ge: return eval_int(e.args[0], ctx) >= eval_int(e.args[1], ctx) ? 1 : 0;
        case Op::Min: return std::min(eval_int(e.args[0], ctx), eval_int(e.args[1], ctx));
        case Op::Max: return std::max(eval_int(e.args[0], ctx), eval_int(e.args[1], ctx));
        case Op::Ite: return eval_int(e.args[0], ctx) ? eval_int(e.args[1], ctx) : eval_int(e.args[2], ctx);
    }
    throw std::logic_error("unhandled expression op");
}

/// Exact rational evaluation for probability expressions. Integer
/// subexpressions are lifted; conditions stay integer/boolean.
inline Rational eval_rat(const Expr& e, const EvalContext& ctx) {
    using Op = Expr::Op;
    switch (e.op) {
        case Op::RatLit: return e.ratValue;
        case Op::Div: return eval_rat(e.args[0], ctx) / eval_rat(e.args[1], ctx);
        case Op::Add: return eval_rat(e.args[0], ctx) + eval_rat(e.args[1], ctx);
        case Op::Sub: return eval_rat(e.args[0], ctx) - eval_rat(e.args[1], ctx);
        case Op::Mul: return eval_rat(e.args[0], ctx) * eval_rat(e.args[1], ctx);
        case Op::Neg: return Rational(0) - eval_rat(e.args[0], ctx);
        case Op::Min: {
            Rational a = eval_rat(e.args[0], ctx), b = eval_rat(e.args[1], ctx);
            return a < b ? a : b;
        }
        case Op::Max: {
            Rational a = eval_rat(e.args[0], ctx), b = eval_rat(e.args[1], ctx);
            return a < b ? b : a;
        }
        case Op::Ite:
            return eval_int(e.args[0], ctx) ? eval_rat(e.args[1], ctx) : eval_rat(e.args[2], ctx);
        default:
            return Rational(eval_int(e, ctx));
    }
}

} // namespace famtree
