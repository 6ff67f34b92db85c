#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "linequiv/expr.hpp"

using namespace linequiv;

namespace {

double eval_at(const Expr& e, long k, std::vector<double> y) {
    return evaluate(e, k, std::span<const double>(y.data(), y.size()));
}

// Random AST generator over the full grammar. Literals are non-negative and
// finite so printing stays canonical (negative values appear via Neg nodes,
// matching what the parser produces).
Expr random_ast(std::mt19937_64& rng, int depth) {
    const auto pick = [&rng](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
    if (depth <= 0) {
        switch (pick(3)) {
            case 0: return Expr::number(static_cast<double>(pick(1000)) / 16.0);
            case 1: return Expr::var_k();
            default: return Expr::var_y(pick(4));
        }
    }
    switch (pick(8)) {
        case 0: return Expr::unary(ExprKind::Neg, random_ast(rng, depth - 1));
        case 1: return Expr::binary(ExprKind::Add, random_ast(rng, depth - 1), random_ast(rng, depth - 1));
        case 2: return Expr::binary(ExprKind::Sub, random_ast(rng, depth - 1), random_ast(rng, depth - 1));
        case 3: return Expr::binary(ExprKind::Mul, random_ast(rng, depth - 1), random_ast(rng, depth - 1));
        case 4: return Expr::binary(ExprKind::Div, random_ast(rng, depth - 1), random_ast(rng, depth - 1));
        case 5: return Expr::binary(ExprKind::Pow, random_ast(rng, depth - 1), random_ast(rng, depth - 1));
        case 6: {
            const Builtin fns[] = {Builtin::Sin, Builtin::Cos, Builtin::Tanh, Builtin::Exp,
                                   Builtin::Log, Builtin::Abs, Builtin::Min, Builtin::Max,
                                   Builtin::Sqrt};
            const Builtin fn = fns[pick(9)];
            std::vector<Expr> args;
            args.push_back(random_ast(rng, depth - 1));
            if (builtin_arity(fn) == 2) args.push_back(random_ast(rng, depth - 1));
            return Expr::call(fn, std::move(args));
        }
        default: return random_ast(rng, 0);
    }
}

}  // namespace

TEST_CASE("grammar examples from the operation contract") {
    // "0.1*sin(y0)" -> Mul(0.1, Sin(Var y0))
    Expr e = parse_expr("0.1*sin(y0)");
    REQUIRE(e.kind == ExprKind::Mul);
    REQUIRE(e.children[0].kind == ExprKind::Literal);
    REQUIRE(e.children[0].literal == 0.1);
    REQUIRE(e.children[1].kind == ExprKind::Call);
    REQUIRE(e.children[1].fn == Builtin::Sin);
    REQUIRE(e.children[1].children[0].kind == ExprKind::VarY);
    REQUIRE(e.children[1].children[0].var_index == 0);

    // right-associative power: 2^3^2 = 2^(3^2) = 512
    CHECK(eval_at(parse_expr("2^3^2"), 0, {}) == 512.0);

    // oracle: host math library
    const double expected = 0.05 * std::tanh(2.0);  // 0.048201379…
    CHECK_THAT(eval_at(parse_expr("0.05*tanh(y1) + 0*k"), 7, {0.0, 2.0}),
               Catch::Matchers::WithinAbs(expected, 1e-15));
}

TEST_CASE("evaluate examples") {
    CHECK(eval_at(parse_expr("3.5"), 12, {1.0}) == 3.5);
    CHECK(eval_at(parse_expr("y0 - y0"), 3, {1.7320508}) == 0.0);
    CHECK_THAT(eval_at(parse_expr("exp(-k)"), 2, {}),
               Catch::Matchers::WithinAbs(std::exp(-2.0), 1e-16));
}

TEST_CASE("precedence and unary minus") {
    CHECK(eval_at(parse_expr("2+3*4"), 0, {}) == 14.0);
    CHECK(eval_at(parse_expr("(2+3)*4"), 0, {}) == 20.0);
    CHECK(eval_at(parse_expr("-2^2"), 0, {}) == -4.0);   // -(2^2)
    CHECK(eval_at(parse_expr("(-2)^2"), 0, {}) == 4.0);
    CHECK(eval_at(parse_expr("2^-1"), 0, {}) == 0.5);
    CHECK(eval_at(parse_expr("6/3/2"), 0, {}) == 1.0);   // left-assoc
    CHECK(eval_at(parse_expr("min(3, 2) + max(1, 4)"), 0, {}) == 6.0);
    CHECK(eval_at(parse_expr("1e2 + 2.5e-1"), 0, {}) == 100.25);
}

TEST_CASE("syntax and identifier errors carry byte offsets") {
    try {
        parse_expr("1 + ");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.offset == 4);
    }
    try {
        parse_expr("2 * foo(3)");
        FAIL("expected UnknownIdentifier");
    } catch (const UnknownIdentifier& e) {
        CHECK(e.name == "foo");
        CHECK(e.offset == 4);
    }
    CHECK_THROWS_AS(parse_expr("bar + 1"), UnknownIdentifier);
    CHECK_THROWS_AS(parse_expr("sin(1, 2)"), SyntaxError);  // arity
    CHECK_THROWS_AS(parse_expr("(1 + 2"), SyntaxError);
    CHECK_THROWS_AS(parse_expr("1 2"), SyntaxError);        // trailing input
    CHECK_THROWS_AS(parse_expr("0x10"), SyntaxError);       // no hex floats
}

TEST_CASE("domain errors") {
    CHECK_THROWS_AS(eval_at(parse_expr("1/(k-2)"), 2, {}), DomainError);
    CHECK_THROWS_AS(eval_at(parse_expr("log(0)"), 0, {}), DomainError);
    CHECK_THROWS_AS(eval_at(parse_expr("log(-1)"), 0, {}), DomainError);
    CHECK_THROWS_AS(eval_at(parse_expr("sqrt(-4)"), 0, {}), DomainError);
    CHECK_THROWS_AS(eval_at(parse_expr("y3"), 0, {1.0}), UnboundVariable);
}

TEST_CASE("print/parse round trip is structurally stable over random ASTs") {
    std::mt19937_64 rng(0x5eed);
    for (int i = 0; i < 10000; ++i) {
        Expr ast = random_ast(rng, 1 + static_cast<int>(rng() % 4));
        const std::string printed = print_expr(ast);
        Expr reparsed = parse_expr(printed);
        if (!ast.structurally_equal(reparsed)) {
            CAPTURE(printed);
            CAPTURE(print_expr(reparsed));
            FAIL("round trip changed the AST");
        }
    }
    SUCCEED();
}

TEST_CASE("parse . print . parse == parse on source strings") {
    const char* sources[] = {
        "0.1*sin(y0)", "2^3^2", "0.05*tanh(y1) + 0*k", "-(y0 - y1)/(1 + k)",
        "exp(-1/(k+1))", "min(1, max(y0, 2))^2", "--y0", "1 - 2 - 3", "1 - (2 - 3)",
    };
    for (const char* src : sources) {
        Expr first = parse_expr(src);
        Expr second = parse_expr(print_expr(first));
        CHECK(first.structurally_equal(second));
    }
}

TEST_CASE("addition and multiplication commute bit-for-bit") {
    std::mt19937_64 rng(99);
    auto draw = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 20.0 - 10.0; };
    for (int i = 0; i < 200; ++i) {
        const double a = draw(), b = draw();
        Expr sum_ab = Expr::binary(ExprKind::Add, Expr::number(a), Expr::number(b));
        Expr sum_ba = Expr::binary(ExprKind::Add, Expr::number(b), Expr::number(a));
        CHECK(evaluate(sum_ab, 0, {}) == evaluate(sum_ba, 0, {}));
        Expr mul_ab = Expr::binary(ExprKind::Mul, Expr::number(a), Expr::number(b));
        Expr mul_ba = Expr::binary(ExprKind::Mul, Expr::number(b), Expr::number(a));
        CHECK(evaluate(mul_ab, 0, {}) == evaluate(mul_ba, 0, {}));
    }
}
