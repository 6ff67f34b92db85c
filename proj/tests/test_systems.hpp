#pragma once

// Shared builders for the closed-form systems the suites exercise. All have
// hand-derivable transition matrices and Green kernels.

#include <cmath>

#include "linequiv/certify.hpp"
#include "linequiv/conjugacy.hpp"
#include "linequiv/trajectories.hpp"

namespace testsys {

using namespace linequiv;

struct Built {
    SystemPair sys;
    TruncationPolicy policy;
    ConjugacyPair conjugacy() const { return ConjugacyPair(sys, policy); }
};

inline Matrix scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
}

inline Built make(MatrixSequence seq, ProjectorPair proj, RatePair rates, PerturbationSpec pert,
                  long horizon, TruncationPolicy pol, std::uint64_t seed = 17) {
    TransitionCache cache(std::move(seq), std::max(horizon, pol.series_horizon) + 2);
    CertifyOptions opts;
    opts.horizon = horizon;
    opts.seed = seed;
    DichotomyCertificate cert = certify_system(cache, proj, rates, pert, pol, opts);
    SystemPair sys = SystemPair::assemble(std::move(cache), std::move(proj), std::move(rates),
                                          std::move(pert), std::move(cert));
    return Built{std::move(sys), pol};
}

/// A = 1/2, f = 0.3, P = I: H(k,xi) = xi + 0.6(1-2^-k), y* = 0.6.
inline Built scalar_affine(long horizon = 50, TruncationPolicy pol = {.series_horizon = 60,
                                                                      .fixed_point_tol = 1e-12}) {
    const long span = std::max(horizon, pol.series_horizon) + 2;
    Vector c(1);
    c << 0.3;
    return make(MatrixSequence::constant(scalar(0.5)), ProjectorPair::identity(1),
                RatePair::geometric(ScalarSequence::constant(1.0), 0.5, span),
                PerturbationSpec::constant(c), horizon, pol);
}

/// A = 1/2, f = 0.1 sin(y0): gamma = mu = 0.1, y* = 0.
inline Built scalar_sine(long horizon = 40, TruncationPolicy pol = {.series_horizon = 160,
                                                                    .fixed_point_tol = 1e-12}) {
    const long span = std::max(horizon, pol.series_horizon) + 2;
    PerturbationSpec::Component comp;
    comp.amp = 0.1;
    comp.func = PerturbationSpec::Component::Func::Sin;
    return make(MatrixSequence::constant(scalar(0.5)), ProjectorPair::identity(1),
                RatePair::geometric(ScalarSequence::constant(1.0), 0.5, span),
                PerturbationSpec::componentwise({comp}, ScalarSequence::constant(0.1),
                                                ScalarSequence::constant(0.1)),
                horizon, pol);
}

inline PerturbationSpec tanh_sin_cross(double amp) {
    PerturbationSpec::Component c0, c1;
    c0.amp = amp;
    c0.func = PerturbationSpec::Component::Func::Tanh;
    c0.src = 1;
    c1.amp = amp;
    c1.func = PerturbationSpec::Component::Func::Sin;
    c1.src = 0;
    return PerturbationSpec::componentwise({c0, c1}, ScalarSequence::constant(amp),
                                           ScalarSequence::constant(amp * std::sqrt(2.0)));
}

/// A = diag(1/2, 2), P = diag(1, 0), f = 0.05 (tanh y1, sin y0): q <= 0.15.
inline Built hyperbolic_2d(long horizon = 60, TruncationPolicy pol = {.series_horizon = 60,
                                                                      .fixed_point_tol = 1e-9}) {
    const long span = std::max(horizon, pol.series_horizon) + 2;
    Vector d(2), stable(2);
    d << 0.5, 2.0;
    stable << 1.0, 0.0;
    return make(MatrixSequence::diagonal(d), ProjectorPair::diagonal(stable),
                RatePair::geometric(ScalarSequence::constant(1.0), 0.5, span),
                tanh_sin_cross(0.05), horizon, pol);
}

/// A = diag(0.5, 0.8), P = I, theta = 0.8.
inline Built contraction_2d(long horizon = 40, TruncationPolicy pol = {.series_horizon = 160,
                                                                       .fixed_point_tol = 1e-12}) {
    const long span = std::max(horizon, pol.series_horizon) + 2;
    Vector d(2);
    d << 0.5, 0.8;
    return make(MatrixSequence::diagonal(d), ProjectorPair::identity(2),
                RatePair::geometric(ScalarSequence::constant(1.0), 0.8, span),
                tanh_sin_cross(0.05), horizon, pol);
}

/// Uniform case of the final corollary: theta = 0.5, K = 1, gamma = 0.1,
/// f = 0.3 + 0.1 sin(y0 - 0.6), so y* = 0.6 and the majorant is 0.6 * 0.6^k.
inline Built uniform_scalar(long horizon = 40, TruncationPolicy pol = {.series_horizon = 80,
                                                                       .fixed_point_tol = 1e-12}) {
    const long span = std::max(horizon, pol.series_horizon) + 2;
    PerturbationSpec::Component comp;
    comp.bias = 0.3;
    comp.amp = 0.1;
    comp.shift = 0.6;
    comp.func = PerturbationSpec::Component::Func::Sin;
    return make(MatrixSequence::constant(scalar(0.5)), ProjectorPair::identity(1),
                RatePair::geometric(ScalarSequence::constant(1.0), 0.5, span),
                PerturbationSpec::componentwise({comp}, ScalarSequence::constant(0.1),
                                                ScalarSequence::constant(0.4)),
                horizon, pol);
}

/// f == 0 on the hyperbolic linear part: H = G = id exactly.
inline Built identity_2d(long horizon = 50, TruncationPolicy pol = {.series_horizon = 60,
                                                                    .fixed_point_tol = 1e-9}) {
    const long span = std::max(horizon, pol.series_horizon) + 2;
    Vector d(2), stable(2);
    d << 0.5, 2.0;
    stable << 1.0, 0.0;
    return make(MatrixSequence::diagonal(d), ProjectorPair::diagonal(stable),
                RatePair::geometric(ScalarSequence::constant(1.0), 0.5, span),
                PerturbationSpec::zero(2), horizon, pol);
}

/// Generalized exponential contraction: A(k) = exp(-1/(k+1)), h(k) = exp(-H_k),
/// f = 0.1 * 0.5^k sin(y0) so the weights decay geometrically.
inline Built generalized_exp_scalar(long horizon = 40,
                                    TruncationPolicy pol = {.series_horizon = 80,
                                                            .fixed_point_tol = 1e-12}) {
    const long span = std::max(horizon, pol.series_horizon) + 2;
    PerturbationSpec::Component comp;
    comp.amp = 0.1;
    comp.decay = 0.5;
    comp.func = PerturbationSpec::Component::Func::Sin;
    return make(MatrixSequence::expression(1, {parse_expr("exp(-1/(k+1))")}),
                ProjectorPair::identity(1),
                RatePair::generalized_exp(ScalarSequence::constant(1.0),
                                          ScalarSequence::expression(parse_expr("1/(k+1)")), 0.0,
                                          span),
                PerturbationSpec::componentwise({comp}, ScalarSequence::geometric(0.1, 0.5),
                                                ScalarSequence::geometric(0.1, 0.5)),
                horizon, pol);
}

}  // namespace testsys
