#pragma once

// Equilibria of the nonlinear system and the numerical side of stability
// preservation under the topological equivalence: uniqueness of y*,
// H(k,0) -> y*, G(k,y*) = Phi(k,0) y* -> 0, and the discrete-Gronwall
// convergence-rate majorant
//
//   |H(k,0) - y*| <= rho(0)|y*| h(k) prod_{j<k} (1 + gamma(j)rho(j+1)h(j)/h(j+1)).
//
// "Asymptotically stable" is probed over a declared horizon, not proven:
// limits are not decidable from finite data.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "linequiv/conjugacy.hpp"
#include "linequiv/trajectories.hpp"

namespace linequiv {

struct EquilibriumResult {
    Vector y_star;
    double residual = 0.0;           // max_n |y* - A(n)y* - f(n,y*)| over the horizon
    bool unique_flag = false;        // multistart solves all agreed
    std::vector<double> rate_bound;  // Gronwall majorant rho(0)|y*| h(k) prod(...)
};

namespace detail {

inline Vector solve_equilibrium_from(const SystemPair& sp, Vector y) {
    const Matrix A0 = sp.trans.a(0);
    // iterate to numerical convergence, not to a user tolerance: exact float
    // fixed points must land bit-exactly for the equality-case majorants
    for (long it = 0; it < 1000000; ++it) {
        Vector next = A0 * y + sp.pert.f(0, y);
        const double change = (next - y).norm();
        y = std::move(next);
        if (change <= 4e-16 * (1.0 + y.norm())) break;
    }
    return y;
}

/// Damped Gauss-Newton on r(y) = y - A(0)y - f(0,y) for the non-contractive
/// fallback; the Jacobian uses the perturbation's analytic or FD derivative.
inline Vector solve_equilibrium_newton(const SystemPair& sp, Vector y) {
    const int d = sp.dim();
    const Matrix A0 = sp.trans.a(0);
    for (long it = 0; it < 200; ++it) {
        Vector r = y - A0 * y - sp.pert.f(0, y);
        if (r.norm() <= 1e-14 * (1.0 + y.norm())) break;
        Matrix J = Matrix::Identity(d, d) - A0 - sp.pert.jacobian(0, y);
        Vector step = Eigen::PartialPivLU<Matrix>(J).solve(r);
        y -= step;
    }
    return y;
}

}  // namespace detail

/// Solves y = A(0)y + f(0,y), verifies the defining identity on the whole
/// horizon, and re-solves from spread starting points for uniqueness.
/// Contraction-case certificate required.
inline EquilibriumResult find_equilibrium(const SystemPair& sp, double tol) {
    if (!sp.cert.contraction_case) throw NotContractionCase();
    const int d = sp.dim();
    const long horizon = sp.cert.horizon;

    const double fp_condition = sp.rates.rho(0) * sp.rates.h(1) + sp.cert.s3_q_envelope;
    const double direct_lip = sp.trans.a_norm(0) + sp.pert.gamma().at(0);
    Vector y0 = Vector::Zero(d);
    Vector y_star = (fp_condition < 1.0 && direct_lip < 1.0)
                        ? detail::solve_equilibrium_from(sp, y0)
                        : detail::solve_equilibrium_newton(sp, y0);

    auto residual_at = [&](const Vector& y, long n) {
        return (y - sp.trans.a(n) * y - sp.pert.f(n, y)).norm();
    };
    if (residual_at(y_star, 0) > tol)
        throw NoEquilibrium("equilibrium residual floor not reached: " +
                            std::to_string(residual_at(y_star, 0)));

    EquilibriumResult out;
    out.y_star = y_star;
    out.residual = 0.0;
    for (long n = 0; n <= horizon; ++n)
        out.residual = std::max(out.residual, residual_at(y_star, n));
    if (out.residual > tol)
        throw NotStationary("the fixed point of the n=0 step is not an equilibrium for all n "
                            "(worst residual " + std::to_string(out.residual) +
                            "); f is genuinely time-dependent");

    out.unique_flag = true;
    const double spread = 1.0 + 2.0 * y_star.norm();
    for (int s = 0; s < 8; ++s) {
        Vector start = y_star;
        for (int i = 0; i < d; ++i)
            start(i) += ((s >> (i % 3)) & 1 ? spread : -spread) * (1.0 + 0.25 * s);
        Vector alt = (fp_condition < 1.0 && direct_lip < 1.0)
                         ? detail::solve_equilibrium_from(sp, start)
                         : detail::solve_equilibrium_newton(sp, start);
        if ((alt - y_star).norm() > 1e-8) out.unique_flag = false;
    }

    out.rate_bound.resize(static_cast<std::size_t>(horizon) + 1);
    const double lead = sp.rates.rho(0) * y_star.norm();
    double prod = 1.0;
    out.rate_bound[0] = lead * sp.rates.h(0);
    for (long k = 1; k <= horizon; ++k) {
        const long j = k - 1;
        prod *= 1.0 + sp.pert.gamma().at(j) * sp.rates.rho(j + 1) * sp.rates.h_ratio(j, j + 1);
        out.rate_bound[static_cast<std::size_t>(k)] = lead * sp.rates.h(k) * prod;
    }
    return out;
}

struct StabilityRow {
    long k = 0;
    double h_k0_dev = 0.0;      // |H(k,0) - y*|
    double majorant = 0.0;      // rho(0)|y*| h(k) prod(1 + gamma rho h-ratio)
    double g_kystar_norm = 0.0; // |G(k,y*)|
    double rho0_h_bound = 0.0;  // rho(0) h(k) |y*|
};

struct StabilityReport {
    bool y_star_zero = false;
    std::vector<StabilityRow> rows;
    double worst_majorant_excess = 0.0;  // max of dev - (majorant + allowance)
    double worst_g_excess = 0.0;
    double worst_g_identity = 0.0;       // max |G(k,y*) - Phi(k,0) y*|
    bool within = true;
};

/// Theorem-side checks: H(k,0), G(k,0) for a zero equilibrium; otherwise the
/// exact identity G(k,y*) = Phi(k,0)y*, the rho(0)h(k)|y*| envelope and the
/// Gronwall majorant for |H(k,0) - y*|.
inline StabilityReport verify_stability_preservation(const ConjugacyPair& cp,
                                                     const EquilibriumResult& eq,
                                                     long horizon) {
    const SystemPair& sp = cp.system();
    const int d = sp.dim();
    StabilityReport rep;
    rep.y_star_zero = eq.y_star.norm() <= 1e-10;
    rep.rows.resize(static_cast<std::size_t>(horizon) + 1);

    const Vector zero = Vector::Zero(d);
    for (long k = 0; k <= horizon; ++k) {
        StabilityRow& row = rep.rows[static_cast<std::size_t>(k)];
        row.k = k;
        const EvalResult Hk0 = cp.H_map(k, zero);
        row.h_k0_dev = (Hk0.value - eq.y_star).norm();
        row.majorant = eq.rate_bound[static_cast<std::size_t>(k)];
        const auto Gk = cp.G_map(k, eq.y_star);
        row.g_kystar_norm = Gk.value.norm();
        row.rho0_h_bound = sp.rates.rho(0) * sp.rates.h(k) * eq.y_star.norm();

        // measurement allowance: the map's own error bound plus a roundoff term;
        // gamma == 0 systems hit the majorant with exact equality
        const double allowance = Hk0.err + 1e-13 * (1.0 + eq.y_star.norm());
        if (rep.y_star_zero) {
            const double excess_h = row.h_k0_dev - allowance;
            const double excess_g = row.g_kystar_norm - (Gk.err + 1e-13);
            rep.worst_majorant_excess = std::max(rep.worst_majorant_excess, excess_h);
            rep.worst_g_excess = std::max(rep.worst_g_excess, excess_g);
            if (excess_h > 0.0 || excess_g > 0.0) rep.within = false;
        } else {
            const double excess_h = row.h_k0_dev - (row.majorant + allowance);
            const double excess_g =
                row.g_kystar_norm - (row.rho0_h_bound + Gk.err + 1e-13 * (1.0 + eq.y_star.norm()));
            rep.worst_majorant_excess = std::max(rep.worst_majorant_excess, excess_h);
            rep.worst_g_excess = std::max(rep.worst_g_excess, excess_g);
            if (excess_h > 0.0 || excess_g > 0.0) rep.within = false;

            Vector phi_ystar = eq.y_star;
            for (long j = 0; j < k; ++j) phi_ystar = sp.trans.a(j) * phi_ystar;
            const double ident = (Gk.value - phi_ystar).norm();
            rep.worst_g_identity = std::max(rep.worst_g_identity, ident);
            if (ident > Gk.err + 1e-12 * (1.0 + phi_ystar.norm())) rep.within = false;
        }
    }
    return rep;
}

struct ProbeSample {
    long j = 0;
    Vector eta;
    double initial_dev = 0.0;
    double tail_envelope = 0.0;  // max deviation over the trailing window
    bool decayed = false;
    double decomp_excess = 0.0;  // worst violation of the triangle decomposition
};

struct ProbeReport {
    std::vector<ProbeSample> samples;
    bool all_decayed = true;
    bool decomposition_ok = true;
};

/// Samples (j, eta), simulates |y(k,j,eta) - y*| along the horizon, flags
/// decay of the trailing envelope below 10% of the initial deviation, and
/// verifies the proof's decomposition
///   |y(k,j,eta) - y*| <= |H[k,x(k,j,xi)] - H(k,0)| + |H(k,0) - y*|,
/// with xi = G(j,eta), within the evaluation budget.
inline ProbeReport asymptotic_stability_probe(const ConjugacyPair& cp,
                                              const EquilibriumResult& eq, int n_samples,
                                              long horizon, double box,
                                              std::mt19937_64& rng) {
    const SystemPair& sp = cp.system();
    const int d = sp.dim();
    ProbeReport rep;
    rep.samples.reserve(static_cast<std::size_t>(n_samples));
    const long j_cap = std::max<long>(1, std::min<long>(horizon / 4, 10));
    for (int s = 0; s < n_samples; ++s) {
        ProbeSample ps;
        ps.j = static_cast<long>(rng() % static_cast<std::uint64_t>(j_cap + 1));
        ps.eta = eq.y_star;
        for (int i = 0; i < d; ++i) ps.eta(i) += uniform_in(rng, -box, box);
        ps.initial_dev = (ps.eta - eq.y_star).norm();

        std::vector<double> dev(static_cast<std::size_t>(horizon) + 1, 0.0);
        Vector y = ps.eta;
        dev[static_cast<std::size_t>(ps.j)] = ps.initial_dev;
        for (long k = ps.j; k < horizon; ++k) {
            y = sp.trans.a(k) * y + sp.pert.f(k, y);
            dev[static_cast<std::size_t>(k) + 1] = (y - eq.y_star).norm();
        }
        const long tail_start = horizon - std::max<long>(1, horizon / 10);
        double env = 0.0;
        for (long k = std::max(tail_start, ps.j); k <= horizon; ++k)
            env = std::max(env, dev[static_cast<std::size_t>(k)]);
        ps.tail_envelope = env;
        ps.decayed = env <= 0.1 * ps.initial_dev + 1e-14;
        if (!ps.decayed) rep.all_decayed = false;

        // the triangle decomposition at a few interior indices
        const auto G_j = cp.G_map(ps.j, ps.eta);
        for (long k : {ps.j + (horizon - ps.j) / 2, horizon}) {
            if (k <= ps.j || k > cp.policy().series_horizon) continue;
            const Vector x_k = linear_solution(sp, k, ps.j, G_j.value);
            const EvalResult H_kx = cp.H_map(k, x_k);
            const EvalResult H_k0 = cp.H_map(k, Vector::Zero(d));
            const double lhs = dev[static_cast<std::size_t>(k)];
            const double rhs = (H_kx.value - H_k0.value).norm() +
                               (H_k0.value - eq.y_star).norm();
            const double slack = H_kx.err + 2.0 * H_k0.err +
                                 cp.orbit_lipschitz(k, ps.j) * (G_j.err + 1e-12) +
                                 1e-12 * (1.0 + ps.eta.norm());
            ps.decomp_excess = std::max(ps.decomp_excess, lhs - (rhs + slack));
        }
        if (ps.decomp_excess > 0.0) rep.decomposition_ok = false;
        rep.samples.push_back(std::move(ps));
    }
    return rep;
}

}  // namespace linequiv
