#pragma once

// Minimal arithmetic expression language used by config files to define
// coefficient-matrix entries and perturbation components without recompiling.
//
// Grammar (EBNF):
//   expr   := term (("+"|"-") term)* ;
//   term   := factor (("*"|"/") factor)* ;
//   factor := "-" factor | power ;
//   power  := atom ("^" factor)? ;          // right-associative
//   atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")" .
//
// Variables are `k` and `y0`..`y{d-1}`. Numeric literals are decimal with an
// optional exponent; hex floats are rejected. ASTs are immutable after parse
// and evaluation is reentrant.

#include <cassert>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "linequiv/errors.hpp"

namespace linequiv {

enum class ExprKind {
    Literal,
    VarK,
    VarY,    // component index in `var_index`
    Neg,
    Add, Sub, Mul, Div, Pow,
    Call,    // builtin function, children are arguments
};

enum class Builtin { Sin, Cos, Tanh, Exp, Log, Abs, Min, Max, Sqrt };

inline const char* builtin_name(Builtin b) {
    switch (b) {
        case Builtin::Sin:  return "sin";
        case Builtin::Cos:  return "cos";
        case Builtin::Tanh: return "tanh";
        case Builtin::Exp:  return "exp";
        case Builtin::Log:  return "log";
        case Builtin::Abs:  return "abs";
        case Builtin::Min:  return "min";
        case Builtin::Max:  return "max";
        case Builtin::Sqrt: return "sqrt";
    }
    return "?";
}

inline bool builtin_from_name(std::string_view s, Builtin& out) {
    if (s == "sin")  { out = Builtin::Sin;  return true; }
    if (s == "cos")  { out = Builtin::Cos;  return true; }
    if (s == "tanh") { out = Builtin::Tanh; return true; }
    if (s == "exp")  { out = Builtin::Exp;  return true; }
    if (s == "log")  { out = Builtin::Log;  return true; }
    if (s == "abs")  { out = Builtin::Abs;  return true; }
    if (s == "min")  { out = Builtin::Min;  return true; }
    if (s == "max")  { out = Builtin::Max;  return true; }
    if (s == "sqrt") { out = Builtin::Sqrt; return true; }
    return false;
}

inline int builtin_arity(Builtin b) {
    return (b == Builtin::Min || b == Builtin::Max) ? 2 : 1;
}

struct Expr {
    ExprKind kind = ExprKind::Literal;
    double literal = 0.0;
    int var_index = 0;           // for VarY
    Builtin fn = Builtin::Sin;   // for Call
    std::vector<Expr> children;

    static Expr number(double v) {
        Expr e; e.kind = ExprKind::Literal; e.literal = v; return e;
    }
    static Expr var_k() {
        Expr e; e.kind = ExprKind::VarK; return e;
    }
    static Expr var_y(int i) {
        Expr e; e.kind = ExprKind::VarY; e.var_index = i; return e;
    }
    static Expr unary(ExprKind k, Expr a) {
        Expr e; e.kind = k; e.children.push_back(std::move(a)); return e;
    }
    static Expr binary(ExprKind k, Expr a, Expr b) {
        Expr e; e.kind = k;
        e.children.push_back(std::move(a));
        e.children.push_back(std::move(b));
        return e;
    }
    static Expr call(Builtin fn, std::vector<Expr> args) {
        Expr e; e.kind = ExprKind::Call; e.fn = fn; e.children = std::move(args);
        return e;
    }

    bool structurally_equal(const Expr& o) const {
        if (kind != o.kind) return false;
        switch (kind) {
            case ExprKind::Literal:
                // bit-compare so -0.0 and 0.0 round-trip distinctly
                if (!(literal == o.literal) &&
                    !(std::isnan(literal) && std::isnan(o.literal)))
                    return false;
                break;
            case ExprKind::VarY:
                if (var_index != o.var_index) return false;
                break;
            case ExprKind::Call:
                if (fn != o.fn) return false;
                break;
            default: break;
        }
        if (children.size() != o.children.size()) return false;
        for (std::size_t i = 0; i < children.size(); ++i)
            if (!children[i].structurally_equal(o.children[i])) return false;
        return true;
    }
};

namespace detail {

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    void skip_ws() {
        while (pos_ < src_.size() &&
               (src_[pos_] == ' ' || src_[pos_] == '\t' ||
                src_[pos_] == '\n' || src_[pos_] == '\r'))
            ++pos_;
    }
    bool eof() { skip_ws(); return pos_ >= src_.size(); }
    std::size_t pos() const { return pos_; }
    char peek() { skip_ws(); return pos_ < src_.size() ? src_[pos_] : '\0'; }
    bool accept(char c) {
        if (peek() == c) { ++pos_; return true; }
        return false;
    }
    void expect(char c, const char* what) {
        if (!accept(c)) throw SyntaxError(pos_, what);
    }

    bool number_ahead() {
        char c = peek();
        return (c >= '0' && c <= '9') ||
               (c == '.' && pos_ + 1 < src_.size() &&
                src_[pos_ + 1] >= '0' && src_[pos_ + 1] <= '9');
    }

    double read_number() {
        skip_ws();
        const std::size_t start = pos_;
        auto digits = [&] {
            bool any = false;
            while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') {
                ++pos_; any = true;
            }
            return any;
        };
        bool int_part = digits();
        bool frac_part = false;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            frac_part = digits();
        }
        if (!int_part && !frac_part) throw SyntaxError(start, "number");
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (!digits()) throw SyntaxError(pos_, "exponent digits");
        }
        double value = 0.0;
        auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
        if (res.ec != std::errc{}) throw SyntaxError(start, "parsable number");
        return value;
    }

    bool ident_ahead() {
        char c = peek();
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
    }

    std::string_view read_ident() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '_';
            if (!ok) break;
            ++pos_;
        }
        return src_.substr(start, pos_ - start);
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) {}

    Expr parse() {
        Expr e = expr();
        if (!lex_.eof()) throw SyntaxError(lex_.pos(), "end of input");
        return e;
    }

private:
    Lexer lex_;

    Expr expr() {
        Expr lhs = term();
        for (;;) {
            if (lex_.accept('+'))      lhs = Expr::binary(ExprKind::Add, std::move(lhs), term());
            else if (lex_.accept('-')) lhs = Expr::binary(ExprKind::Sub, std::move(lhs), term());
            else return lhs;
        }
    }

    Expr term() {
        Expr lhs = factor();
        for (;;) {
            if (lex_.accept('*'))      lhs = Expr::binary(ExprKind::Mul, std::move(lhs), factor());
            else if (lex_.accept('/')) lhs = Expr::binary(ExprKind::Div, std::move(lhs), factor());
            else return lhs;
        }
    }

    Expr factor() {
        if (lex_.accept('-')) return Expr::unary(ExprKind::Neg, factor());
        return power();
    }

    Expr power() {
        Expr base = atom();
        if (lex_.accept('^'))
            return Expr::binary(ExprKind::Pow, std::move(base), factor());
        return base;
    }

    Expr atom() {
        if (lex_.number_ahead()) return Expr::number(lex_.read_number());
        if (lex_.ident_ahead()) {
            const std::size_t at = lex_.pos();
            std::string_view id = lex_.read_ident();
            if (lex_.accept('(')) {
                Builtin fn;
                if (!builtin_from_name(id, fn))
                    throw UnknownIdentifier(std::string(id), at);
                std::vector<Expr> args;
                args.push_back(expr());
                while (lex_.accept(',')) args.push_back(expr());
                lex_.expect(')', "')'");
                if (static_cast<int>(args.size()) != builtin_arity(fn))
                    throw SyntaxError(at, std::string(builtin_name(fn)) + " takes " +
                                              std::to_string(builtin_arity(fn)) + " argument(s)");
                return Expr::call(fn, std::move(args));
            }
            if (id == "k") return Expr::var_k();
            if (id.size() >= 2 && id[0] == 'y') {
                bool digits = true;
                for (std::size_t i = 1; i < id.size(); ++i)
                    digits = digits && id[i] >= '0' && id[i] <= '9';
                if (digits) {
                    int idx = 0;
                    std::from_chars(id.data() + 1, id.data() + id.size(), idx);
                    return Expr::var_y(idx);
                }
            }
            throw UnknownIdentifier(std::string(id), at);
        }
        if (lex_.accept('(')) {
            Expr e = expr();
            lex_.expect(')', "')'");
            return e;
        }
        throw SyntaxError(lex_.pos(), "number, identifier or '('");
    }
};

}  // namespace detail

inline Expr parse_expr(std::string_view source) {
    return detail::Parser(source).parse();
}

inline double evaluate(const Expr& e, long k, std::span<const double> y) {
    switch (e.kind) {
        case ExprKind::Literal: return e.literal;
        case ExprKind::VarK:    return static_cast<double>(k);
        case ExprKind::VarY:
            if (e.var_index < 0 || static_cast<std::size_t>(e.var_index) >= y.size())
                throw UnboundVariable("y" + std::to_string(e.var_index));
            return y[static_cast<std::size_t>(e.var_index)];
        case ExprKind::Neg: return -evaluate(e.children[0], k, y);
        case ExprKind::Add: return evaluate(e.children[0], k, y) + evaluate(e.children[1], k, y);
        case ExprKind::Sub: return evaluate(e.children[0], k, y) - evaluate(e.children[1], k, y);
        case ExprKind::Mul: return evaluate(e.children[0], k, y) * evaluate(e.children[1], k, y);
        case ExprKind::Div: {
            double num = evaluate(e.children[0], k, y);
            double den = evaluate(e.children[1], k, y);
            if (den == 0.0) throw DomainError("division by zero");
            return num / den;
        }
        case ExprKind::Pow: {
            double base = evaluate(e.children[0], k, y);
            double expo = evaluate(e.children[1], k, y);
            double r = std::pow(base, expo);
            if (std::isnan(r) && !std::isnan(base) && !std::isnan(expo))
                throw DomainError("pow outside real domain");
            return r;
        }
        case ExprKind::Call: {
            double a = evaluate(e.children[0], k, y);
            switch (e.fn) {
                case Builtin::Sin:  return std::sin(a);
                case Builtin::Cos:  return std::cos(a);
                case Builtin::Tanh: return std::tanh(a);
                case Builtin::Exp:  return std::exp(a);
                case Builtin::Log:
                    if (a <= 0.0) throw DomainError("log of non-positive value");
                    return std::log(a);
                case Builtin::Abs:  return std::fabs(a);
                case Builtin::Sqrt:
                    if (a < 0.0) throw DomainError("sqrt of negative value");
                    return std::sqrt(a);
                case Builtin::Min:  return std::fmin(a, evaluate(e.children[1], k, y));
                case Builtin::Max:  return std::fmax(a, evaluate(e.children[1], k, y));
            }
            return 0.0;
        }
    }
    return 0.0;
}

namespace detail {

// Precedence levels for the printer: higher binds tighter.
inline int print_prec(const Expr& e) {
    switch (e.kind) {
        case ExprKind::Add:
        case ExprKind::Sub: return 1;
        case ExprKind::Mul:
        case ExprKind::Div: return 2;
        case ExprKind::Neg: return 3;
        case ExprKind::Pow: return 4;
        default:            return 5;  // atoms
    }
}

inline void print_rec(const Expr& e, std::string& out, int min_prec) {
    const int prec = print_prec(e);
    const bool parens = prec < min_prec;
    if (parens) out += '(';
    switch (e.kind) {
        case ExprKind::Literal: {
            char buf[40];
            int n = std::snprintf(buf, sizeof buf, "%.17g", e.literal);
            out.append(buf, static_cast<std::size_t>(n));
            break;
        }
        case ExprKind::VarK: out += 'k'; break;
        case ExprKind::VarY: out += 'y'; out += std::to_string(e.var_index); break;
        case ExprKind::Neg:
            out += '-';
            // operand of unary minus is a factor: allow Neg and Pow unparenthesized
            print_rec(e.children[0], out, 3);
            break;
        case ExprKind::Add:
        case ExprKind::Sub:
            print_rec(e.children[0], out, 1);
            out += (e.kind == ExprKind::Add ? " + " : " - ");
            // right operand is a term per the grammar, so +/- need parens there
            print_rec(e.children[1], out, 2);
            break;
        case ExprKind::Mul:
        case ExprKind::Div:
            print_rec(e.children[0], out, 2);
            out += (e.kind == ExprKind::Mul ? "*" : "/");
            // right operand is a factor
            print_rec(e.children[1], out, 3);
            break;
        case ExprKind::Pow:
            // base is an atom; exponent is a factor (right-associative)
            print_rec(e.children[0], out, 5);
            out += '^';
            print_rec(e.children[1], out, 3);
            break;
        case ExprKind::Call: {
            out += builtin_name(e.fn);
            out += '(';
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (i) out += ", ";
                print_rec(e.children[i], out, 0);
            }
            out += ')';
            break;
        }
    }
    if (parens) out += ')';
}

}  // namespace detail

/// Prints an expression so that parse(print(e)) is structurally equal to e.
inline std::string print_expr(const Expr& e) {
    std::string out;
    detail::print_rec(e, out, 0);
    return out;
}

}  // namespace linequiv
