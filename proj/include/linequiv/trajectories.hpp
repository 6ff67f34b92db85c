#pragma once

// Forward iteration of the linear system x_{k+1} = A(k) x_k and its nonlinear
// perturbation y_{k+1} = A(k) y_k + f(k, y_k), plus backward continuation of
// the nonlinear system. Backward continuation solves one implicit step at a
// time: y(j) is the unique fixed point of
//
//   Theta(u) = A(j)^-1 y(j+1) - A(j)^-1 f(j, u),
//
// a contraction with factor ||A(j)^-1|| gamma(j) < 1 under (P6).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "linequiv/certify.hpp"
#include "linequiv/matrix_sequence.hpp"
#include "linequiv/perturbation.hpp"
#include "linequiv/rates.hpp"

namespace linequiv {

/// A certified linear/nonlinear system pair. The certificate is hash-linked
/// to exactly these components; assembling with a stale certificate throws.
struct SystemPair {
    TransitionCache trans;
    ProjectorPair proj;
    RatePair rates;
    PerturbationSpec pert;
    DichotomyCertificate cert;

    static SystemPair assemble(TransitionCache trans, ProjectorPair proj, RatePair rates,
                               PerturbationSpec pert, DichotomyCertificate cert) {
        const std::uint64_t fp =
            system_fingerprint(trans.sequence(), proj, rates, pert, cert.horizon);
        if (fp != cert.fingerprint)
            throw Error("certificate fingerprint does not match the assembled system");
        return SystemPair{std::move(trans), std::move(proj), std::move(rates),
                          std::move(pert), std::move(cert)};
    }

    int dim() const { return trans.dim(); }
};

namespace detail {

/// One backward implicit step: given y(j+1), return y(j). `tol` is an absolute
/// target for |u - u*|; the stop rule uses the a-posteriori contraction bound.
inline Vector backward_step(const SystemPair& sp, long j, const Vector& y_next, double tol) {
    const double c = sp.trans.a_inverse_norm(j) * sp.pert.gamma().at(j);
    if (!(c < 1.0)) throw P6Violated(j);
    const Matrix& ainv = sp.trans.a_inverse(j);
    const Vector base = ainv * y_next;
    Vector u = base;  // exact when f == 0, within the mu-ball otherwise
    if (sp.pert.is_zero()) return u;
    const double threshold = tol * (1.0 - c);
    for (long it = 0; it < 10000; ++it) {
        Vector u_next = base - ainv * sp.pert.f(j, u);
        const double change = (u_next - u).norm();
        u = std::move(u_next);
        if (change < threshold) return u;
    }
    throw NoConvergence("backward continuation stalled at step " + std::to_string(j), j);
}

}  // namespace detail

/// x(k, m, xi) = Phi(k,m) xi, stepped factor by factor in either direction.
inline Vector linear_solution(const SystemPair& sp, long k, long m, const Vector& xi) {
    Vector x = xi;
    if (k >= m)
        for (long j = m; j < k; ++j) x = sp.trans.a(j) * x;
    else
        for (long j = m - 1; j >= k; --j) x = sp.trans.a_inverse(j) * x;
    return x;
}

namespace detail {

inline Vector forward_iterate(const SystemPair& sp, long k, long m, const Vector& eta,
                              double overflow_guard) {
    Vector y = eta;
    for (long j = m; j < k; ++j) {
        y = sp.trans.a(j) * y + sp.pert.f(j, y);
        if (!(y.norm() <= overflow_guard)) throw Overflow(j + 1);
    }
    return y;
}

}  // namespace detail

/// y(k, m, eta) for k >= m. The 1e12 guard is a blow-up diagnostic for
/// uncertified systems.
inline Vector nonlinear_forward(const SystemPair& sp, long k, long m, const Vector& eta) {
    if (k < m) throw Error("nonlinear_forward requires k >= m");
    return detail::forward_iterate(sp, k, m, eta, 1e12);
}

/// y(n, k, eta) for n < k via per-step fixed points. `tol` is the absolute
/// accuracy target per implicit step.
inline Vector nonlinear_backward(const SystemPair& sp, long n, long k, const Vector& eta,
                                 double tol) {
    if (n >= k) throw Error("nonlinear_backward requires n < k");
    Vector y = eta;
    for (long j = k - 1; j >= n; --j) y = detail::backward_step(sp, j, y, tol);
    return y;
}

/// Orbit table y(j, m, eta) for j = 0..j_max: forward stepping above the
/// anchor, per-step implicit solves below it. The backward tolerance is
/// relative to the local state magnitude, which is what keeps the
/// Green-weighted sums downstream accurate while states grow.
inline std::vector<Vector> nonlinear_orbit(const SystemPair& sp, long m, const Vector& eta,
                                           long j_max, double rel_tol,
                                           double overflow_guard = 1e250) {
    std::vector<Vector> orbit(static_cast<std::size_t>(j_max) + 1);
    orbit[static_cast<std::size_t>(m)] = eta;
    Vector y = eta;
    for (long j = m; j < j_max; ++j) {
        y = sp.trans.a(j) * y + sp.pert.f(j, y);
        if (!(y.norm() <= overflow_guard)) throw Overflow(j + 1);
        orbit[static_cast<std::size_t>(j) + 1] = y;
    }
    y = eta;
    for (long j = m - 1; j >= 0; --j) {
        y = detail::backward_step(sp, j, y, rel_tol * std::max(1.0, y.norm()));
        orbit[static_cast<std::size_t>(j)] = y;
    }
    return orbit;
}

/// Linear orbit table x(j, m, xi) for j = 0..j_max.
inline std::vector<Vector> linear_orbit(const SystemPair& sp, long m, const Vector& xi,
                                        long j_max) {
    std::vector<Vector> orbit(static_cast<std::size_t>(j_max) + 1);
    orbit[static_cast<std::size_t>(m)] = xi;
    Vector x = xi;
    for (long j = m; j < j_max; ++j) {
        x = sp.trans.a(j) * x;
        orbit[static_cast<std::size_t>(j) + 1] = x;
    }
    x = xi;
    for (long j = m - 1; j >= 0; --j) {
        x = sp.trans.a_inverse(j) * x;
        orbit[static_cast<std::size_t>(j)] = x;
    }
    return orbit;
}

}  // namespace linequiv
