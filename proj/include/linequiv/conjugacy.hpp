#pragma once

// Construction and evaluation of the topological-equivalence maps between a
// certified linear system and its nonlinear perturbation:
//
//   w*(k;(m,eta)) = -sum_j G(k,j+1) f(j, y(j,m,eta))          (direct series)
//   z*(k;(m,xi))  = sum_j G(k,j+1) f(j, x(j,m,xi) + z*(j))    (Banach fixed point)
//   H(k,xi)  = xi  + z*(k;(k,xi))
//   G(k,eta) = eta + w*(k;(k,eta))
//
// plus the contraction-case shortcuts G(k,v) = Phi(k,0) y(0,k,v) and
// H(k,v) = y(k,0, x(0,k,v)), the paper's identities, and dG/dxi via the
// variational recursion.
//
// Series are truncated at a policy horizon with certified tail envelopes, and
// the fixed point is iterated until the sup-norm change drops below
// eps_fp (1-q). Every returned value carries an explicit error bound; all
// downstream verification compares residuals against assembled budgets, never
// against bare machine epsilon.
//
// Evaluation of the two series uses the kernel recursions
//   S_P(k+1) = A(k) S_P(k) + P(k+1) g(k),      S_P(0) = 0
//   T_Q(k)   = A(k)^-1 (T_Q(k+1) + Q(k+1) g(k)),  T_Q(K+1) = 0
// so a whole table over [0, K_ser] costs O(K) matrix-vector products per
// sweep. The forward recursion lives in the P-invariant (stable) subspace and
// the backward one in the Q-invariant (unstable) subspace, so both are
// numerically stable despite the factors' growth.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "linequiv/certify.hpp"
#include "linequiv/trajectories.hpp"
#include "linequiv/truncation.hpp"

namespace linequiv {

struct EvalResult {
    Vector value;
    double err = 0.0;
};

struct ZSolve {
    std::vector<Vector> z;        // z*(k; anchor) on the grid k = 0..K_ser
    std::vector<Vector> x_orbit;  // linear orbit of the anchor
    long iters = 0;
    double apriori = 0.0;         // q^n (1-q)^-1 ||z_1 - phi_0||
    double max_ratio = 0.0;       // measured contraction ratio of the sweeps
    double final_change = 0.0;
};

struct ZResult {
    Vector value;
    double err = 0.0;
    long iters = 0;
    double apriori = 0.0;
};

struct ConjugacySample {
    long m = 0;
    Vector xi;
    Vector eta;
};

struct ConjugacyRow {
    long sample_id = 0;
    long k = 0;
    long m = 0;
    double res_conj = 0.0;    // |H[k, x(k,m,xi)] - y(k,m,H(m,xi))|
    double res_lin = 0.0;     // |G[k, y(k,m,eta)] - Phi(k,m) G(m,eta)|
    double res_inv_hg = 0.0;  // |H(k, G(k,eta)) - eta|
    double res_inv_gh = 0.0;  // |G(k, H(k,xi)) - xi|
    double res_ident_wz = 0.0;  // |w*(k;(m,eta)) + z*(k;(m,G(m,eta)))|
    double bud_conj = 0.0, bud_lin = 0.0, bud_inv = 0.0, bud_wz = 0.0;
    double err_budget = 0.0;  // max of the row budgets
};

struct ConjugacyReport {
    std::vector<ConjugacyRow> rows;
    double max_res_conj = 0.0, max_res_lin = 0.0, max_res_inv = 0.0, max_res_wz = 0.0;
    bool within_budget = true;
};

struct IdentityRow {
    long sample_id = 0;
    long k = 0;
    long m = 0;
    double res_fix_g = 0.0;   // |G(k,eta) - (eta - z*(k;(k,G(k,eta))))|
    double res_fix_h = 0.0;   // |H(k,xi) - (xi - w*(k;(k,H(k,xi))))|
    double res_flow = 0.0;    // |z*(k;(m,xi)) - z*(k;(p,x(p,m,xi)))|
    double res_wz = 0.0;      // |w*(k;(m,eta)) + z*(k;(m,G(m,eta)))|
    double bud_fix_g = 0.0, bud_fix_h = 0.0, bud_flow = 0.0, bud_wz = 0.0;
};

struct IdentityReport {
    std::vector<IdentityRow> rows;
    double max_res = 0.0;
    bool within_budget = true;
};

class ConjugacyPair {
public:
    // Roundoff allowance coefficient used in residual budgets; multiplied by
    // the relevant propagation factor and state scale.
    static constexpr double kRound = 1e-12;

    ConjugacyPair(SystemPair sys, TruncationPolicy pol)
        : sys_(std::move(sys)), pol_(pol) {
        const auto& cert = sys_.cert;
        if (!(cert.q < 1.0)) throw Error("conjugacy requires a certificate with q < 1");
        if (!std::isfinite(cert.p)) throw Error("conjugacy requires a certificate with p < inf");
        if (!cert.p6.holds) throw Error("conjugacy requires (P6): backward continuation must exist");
        if (pol_.series_horizon < 1) throw Error("series horizon must be positive");
        if (sys_.trans.horizon() < pol_.series_horizon + 1)
            throw Error("transition cache horizon must cover the series horizon");
        q_ = cert.q;
        contraction_ = cert.contraction_case;
        build_tables();
    }

    const SystemPair& system() const { return sys_; }
    const TruncationPolicy& policy() const { return pol_; }
    double q() const { return q_; }
    bool contraction_case() const { return contraction_; }

    /// Certified bound on the discarded Q-part tail sum_{j>K} ||G(k,j+1)|| mu(j).
    double tail_mu(long k) const { return tail_mu_[idx(k)]; }
    double tail_gamma(long k) const { return tail_gamma_[idx(k)]; }

    /// Error carried by one map value at index k: fixed-point + truncation,
    /// both amplified through the contraction.
    double base_err(long k) const {
        return pol_.fixed_point_tol / (1.0 - q_) + tail_mu_[idx(k)] / (1.0 - q_);
    }

    /// Lipschitz bound of the nonlinear flow from anchor m to index j
    /// (forward product of ||A||+gamma above m, backward C-product below).
    double orbit_lipschitz(long j, long m) const {
        if (j >= m) return fwd_lip_[idx(j)] / fwd_lip_[idx(m)];
        return bwd_lip_[idx(m)] / bwd_lip_[idx(j)];
    }

    double phi_norm(long k, long n) const { return phi_norm_[idx(k)][idx(n)]; }
    double green_norm(long k, long j) const { return g_norm_[idx(k)][idx(j)]; }

    /// sup_k sum_j ||G(k,j+1)|| gamma(j) ||Phi(j,a)|| / (1-q): bounds the
    /// sensitivity of z*(.;(a,xi)) to its anchor state.
    double z_sensitivity(long a) const { return zsens_[idx(a)]; }
    /// Direct-series analogue for w*, with orbit Lipschitz factors.
    double w_sensitivity(long a) const { return wsens_[idx(a)]; }

    // -- series evaluations ---------------------------------------------------

    /// Whole w* table from a nonlinear orbit anchored anywhere.
    std::vector<Vector> w_star_table(const std::vector<Vector>& orbit) const {
        const long K = pol_.series_horizon;
        const int d = sys_.dim();
        std::vector<Vector> g(static_cast<std::size_t>(K) + 1);
        for (long j = 0; j <= K; ++j)
            g[static_cast<std::size_t>(j)] = sys_.pert.f(j, orbit[static_cast<std::size_t>(j)]);
        std::vector<Vector> w(static_cast<std::size_t>(K) + 1, Vector::Zero(d));
        accumulate_series(g, w, /*negate_p=*/true);
        return w;
    }

    EvalResult w_star(long k, long m, const Vector& eta) const {
        auto orbit = nonlinear_orbit(sys_, m, eta, pol_.series_horizon, pol_.backward_tol);
        auto w = w_star_table(orbit);
        return EvalResult{w[idx(k)], base_err(k)};
    }

    ZSolve z_star_solve(long m, const Vector& xi) const {
        const long K = pol_.series_horizon;
        const int d = sys_.dim();
        ZSolve out;
        out.x_orbit = linear_orbit(sys_, m, xi, K);
        std::vector<Vector> phi(static_cast<std::size_t>(K) + 1, Vector::Zero(d));
        std::vector<Vector> next(static_cast<std::size_t>(K) + 1, Vector::Zero(d));
        std::vector<Vector> g(static_cast<std::size_t>(K) + 1);
        const double threshold = pol_.fixed_point_tol * (1.0 - q_);
        double z1_norm = 0.0;
        double prev_change = -1.0;
        for (long it = 1; it <= pol_.max_iters; ++it) {
            for (long j = 0; j <= K; ++j)
                g[static_cast<std::size_t>(j)] =
                    sys_.pert.f(j, out.x_orbit[static_cast<std::size_t>(j)] + phi[static_cast<std::size_t>(j)]);
            for (auto& v : next) v.setZero();
            accumulate_series(g, next, /*negate_p=*/false);
            double change = 0.0;
            for (long j = 0; j <= K; ++j)
                change = std::max(change,
                                  (next[static_cast<std::size_t>(j)] - phi[static_cast<std::size_t>(j)]).norm());
            phi.swap(next);
            out.iters = it;
            out.final_change = change;
            if (it == 1) {
                z1_norm = 0.0;
                for (const auto& v : phi) z1_norm = std::max(z1_norm, v.norm());
            } else if (prev_change > 1e3 * z1_norm * 1e-16 && prev_change > 0.0) {
                out.max_ratio = std::max(out.max_ratio, change / prev_change);
            }
            if (change < threshold) {
                out.z = std::move(phi);
                out.apriori = (q_ > 0.0 ? std::pow(q_, static_cast<double>(it)) : 0.0) /
                              (1.0 - q_) * z1_norm;
                return out;
            }
            prev_change = change;
        }
        throw NoConvergence("Gamma iteration did not converge within the budget; "
                            "the certified q is likely wrong", pol_.max_iters);
    }

    ZResult z_star(long k, long m, const Vector& xi) const {
        ZSolve s = z_star_solve(m, xi);
        return ZResult{s.z[idx(k)], base_err(k), s.iters, s.apriori};
    }

    // -- the maps -------------------------------------------------------------

    EvalResult H_map(long k, const Vector& xi) const {
        ZSolve s = z_star_solve(k, xi);
        return EvalResult{xi + s.z[idx(k)], base_err(k)};
    }

    struct GResult {
        Vector value;           // eta + w*(k;(k,eta))      (authoritative form)
        double err = 0.0;
        Vector alt_value;       // Phi(k,0) { y(0,k,eta) + w*(0;(k,eta)) }
        double discrepancy = 0.0;
        double alt_budget = 0.0;  // the alternative amplifies backward-orbit error
                                  // by ||Phi(k,0)||, so it is a cross-check only
    };

    GResult G_map(long k, const Vector& eta) const {
        auto orbit = nonlinear_orbit(sys_, k, eta, pol_.series_horizon, pol_.backward_tol);
        auto w = w_star_table(orbit);
        GResult out;
        out.value = eta + w[idx(k)];
        out.err = base_err(k);
        Vector seed = orbit[0] + w[0];
        Vector alt = seed;
        for (long j = 0; j < k; ++j) alt = sys_.trans.a(j) * alt;
        out.alt_value = std::move(alt);
        out.discrepancy = (out.value - out.alt_value).norm();
        out.alt_budget = out.err + phi_norm(k, 0) * (base_err(0) + kRound * (1.0 + seed.norm())) +
                         kRound * (1.0 + eta.norm());
        return out;
    }

    struct ShortcutResult {
        Vector G_short;  // Phi(k,0) y(0,k,v)
        Vector H_short;  // y(k,0, x(0,k,v))
        double err_g = 0.0;
        double err_h = 0.0;
    };

    /// Contraction-case closed forms; must agree with the series maps within
    /// the combined budget.
    ShortcutResult shortcut_maps(long k, const Vector& v) const {
        if (!contraction_) throw NotContractionCase();
        ShortcutResult out;
        Vector y0 = v;
        for (long j = k - 1; j >= 0; --j)
            y0 = detail::backward_step(sys_, j, y0, pol_.backward_tol * std::max(1.0, y0.norm()));
        Vector g = y0;
        for (long j = 0; j < k; ++j) g = sys_.trans.a(j) * g;
        out.G_short = std::move(g);
        const double bw_growth = bwd_lip_[idx(k)];  // prod 1/(1-c) relative growth
        out.err_g = static_cast<double>(k + 1) * pol_.backward_tol * bw_growth *
                        (1.0 + out.G_short.norm()) +
                    kRound * (1.0 + v.norm());

        Vector x0 = v;
        for (long j = k - 1; j >= 0; --j) x0 = sys_.trans.a_inverse(j) * x0;
        out.H_short = detail::forward_iterate(sys_, k, 0, x0, 1e250);
        out.err_h = orbit_lipschitz(k, 0) * static_cast<double>(k + 1) * 1e-15 *
                        (1.0 + x0.norm()) +
                    kRound * (1.0 + v.norm());
        return out;
    }

    /// dG/dxi(k, .) = Phi(k,0) Z(0), where Z solves the variational recursion
    /// Z(n+1) = [A(n) + Df(n, y(n,k,xi))] Z(n), Z(k) = I, backward along the
    /// backward orbit. Contraction case only; [A + Df] is invertible under (P6).
    Matrix d_G(long k, const Vector& xi) const {
        if (!contraction_) throw NotContractionCase();
        const int d = sys_.dim();
        std::vector<Vector> orbit(static_cast<std::size_t>(k) + 1);
        orbit[static_cast<std::size_t>(k)] = xi;
        Vector y = xi;
        for (long j = k - 1; j >= 0; --j) {
            y = detail::backward_step(sys_, j, y, pol_.backward_tol * std::max(1.0, y.norm()));
            orbit[static_cast<std::size_t>(j)] = y;
        }
        Matrix Z = Matrix::Identity(d, d);
        for (long n = k - 1; n >= 0; --n) {
            Matrix B = sys_.trans.a(n) + sys_.pert.jacobian(n, orbit[static_cast<std::size_t>(n)]);
            Z = Eigen::PartialPivLU<Matrix>(B).solve(Z);
        }
        for (long j = 0; j < k; ++j) Z = sys_.trans.a(j) * Z;
        return Z;
    }

    // -- verification reports ---------------------------------------------------

    ConjugacyReport verify_conjugacy(const std::vector<ConjugacySample>& samples,
                                     long k_max) const {
        check_window(k_max);
        const double lip_slack = 2.0 / (1.0 - q_);
        ConjugacyReport rep;
        rep.rows.reserve(samples.size() * static_cast<std::size_t>(k_max + 1));
        long sid = 0;
        for (const auto& s : samples) {
            ZSolve zs = z_star_solve(s.m, s.xi);
            const Vector H_m = s.xi + zs.z[idx(s.m)];
            auto orbit_h = nonlinear_orbit(sys_, s.m, H_m, k_max, pol_.backward_tol);
            auto orbit_eta = nonlinear_orbit(sys_, s.m, s.eta, pol_.series_horizon,
                                             pol_.backward_tol);
            auto w_tab = w_star_table(orbit_eta);
            const Vector G_m = s.eta + w_tab[idx(s.m)];
            ZSolve z_gm = z_star_solve(s.m, G_m);
            for (long k = 0; k <= k_max; ++k) {
                ConjugacyRow row;
                row.sample_id = sid;
                row.k = k;
                row.m = s.m;

                const Vector& x_k = zs.x_orbit[idx(k)];
                EvalResult Hk = H_map(k, x_k);
                row.res_conj = (Hk.value - orbit_h[idx(k)]).norm();
                row.bud_conj = Hk.err +
                               orbit_lipschitz(k, s.m) *
                                   (base_err(s.m) + 2.0 * kRound * (1.0 + H_m.norm())) +
                               kRound * (1.0 + x_k.norm());

                const Vector& y_km = orbit_eta[idx(k)];
                GResult Gk = G_map(k, y_km);
                const Vector lin_rhs = linear_solution(sys_, k, s.m, G_m);
                row.res_lin = (Gk.value - lin_rhs).norm();
                row.bud_lin = Gk.err * lip_slack +
                              phi_norm(k, s.m) * (base_err(s.m) + kRound * (1.0 + G_m.norm())) +
                              kRound * orbit_lipschitz(k, s.m) * (1.0 + s.eta.norm()) * lip_slack +
                              kRound * (1.0 + y_km.norm());

                GResult G_eta = G_map(k, s.eta);
                EvalResult H_of = H_map(k, G_eta.value);
                row.res_inv_hg = (H_of.value - s.eta).norm();

                EvalResult H_xi = H_map(k, s.xi);
                GResult G_of = G_map(k, H_xi.value);
                row.res_inv_gh = (G_of.value - s.xi).norm();
                row.bud_inv = base_err(k) * (1.0 + lip_slack) +
                              kRound * (1.0 + std::max(s.xi.norm(), s.eta.norm()));

                row.res_ident_wz = (w_tab[idx(k)] + z_gm.z[idx(k)]).norm();
                row.bud_wz = 2.0 * base_err(k) + z_sensitivity(s.m) * base_err(s.m) +
                             kRound * (1.0 + s.eta.norm());

                row.err_budget = std::max({row.bud_conj, row.bud_lin, row.bud_inv, row.bud_wz});
                rep.max_res_conj = std::max(rep.max_res_conj, row.res_conj);
                rep.max_res_lin = std::max(rep.max_res_lin, row.res_lin);
                rep.max_res_inv = std::max(rep.max_res_inv,
                                           std::max(row.res_inv_hg, row.res_inv_gh));
                rep.max_res_wz = std::max(rep.max_res_wz, row.res_ident_wz);
                if (row.res_conj > row.bud_conj || row.res_lin > row.bud_lin ||
                    row.res_inv_hg > row.bud_inv || row.res_inv_gh > row.bud_inv ||
                    row.res_ident_wz > row.bud_wz)
                    rep.within_budget = false;
                rep.rows.push_back(row);
            }
            ++sid;
        }
        return rep;
    }

    IdentityReport verify_identities(const std::vector<ConjugacySample>& samples,
                                     long k_max) const {
        check_window(k_max);
        IdentityReport rep;
        rep.rows.reserve(samples.size() * static_cast<std::size_t>(k_max + 1));
        long sid = 0;
        for (const auto& s : samples) {
            ZSolve zs = z_star_solve(s.m, s.xi);
            const long p = std::min(s.m + 1, pol_.series_horizon);
            ZSolve zs_shift = z_star_solve(p, zs.x_orbit[idx(p)]);

            auto orbit_eta = nonlinear_orbit(sys_, s.m, s.eta, pol_.series_horizon,
                                             pol_.backward_tol);
            auto w_tab = w_star_table(orbit_eta);
            const Vector G_m = s.eta + w_tab[idx(s.m)];
            ZSolve z_gm = z_star_solve(s.m, G_m);

            for (long k = 0; k <= k_max; ++k) {
                IdentityRow row;
                row.sample_id = sid;
                row.k = k;
                row.m = s.m;

                GResult G_k = G_map(k, s.eta);
                ZSolve z_fix = z_star_solve(k, G_k.value);
                row.res_fix_g = (G_k.value - (s.eta - z_fix.z[idx(k)])).norm();
                row.bud_fix_g = base_err(k) * (2.0 + z_sensitivity(k)) +
                                kRound * (1.0 + s.eta.norm());

                EvalResult H_k = H_map(k, s.xi);
                auto orbit_fix = nonlinear_orbit(sys_, k, H_k.value, pol_.series_horizon,
                                                 pol_.backward_tol);
                auto w_fix = w_star_table(orbit_fix);
                row.res_fix_h = (H_k.value - (s.xi - w_fix[idx(k)])).norm();
                row.bud_fix_h = base_err(k) * (2.0 + w_sensitivity(k)) +
                                kRound * (1.0 + s.xi.norm());

                row.res_flow = (zs.z[idx(k)] - zs_shift.z[idx(k)]).norm();
                row.bud_flow = 2.0 * base_err(k) +
                               z_sensitivity(p) * kRound * (1.0 + zs.x_orbit[idx(p)].norm());

                row.res_wz = (w_tab[idx(k)] + z_gm.z[idx(k)]).norm();
                row.bud_wz = 2.0 * base_err(k) + z_sensitivity(s.m) * base_err(s.m) +
                             kRound * (1.0 + s.eta.norm());

                rep.max_res = std::max({rep.max_res, row.res_fix_g, row.res_fix_h,
                                        row.res_flow, row.res_wz});
                if (row.res_fix_g > row.bud_fix_g || row.res_fix_h > row.bud_fix_h ||
                    row.res_flow > row.bud_flow || row.res_wz > row.bud_wz)
                    rep.within_budget = false;
                rep.rows.push_back(row);
            }
            ++sid;
        }
        return rep;
    }

private:
    std::size_t idx(long k) const {
        if (k < 0 || k > pol_.series_horizon)
            throw Error("conjugacy evaluation at k=" + std::to_string(k) +
                        " outside the series horizon " + std::to_string(pol_.series_horizon));
        return static_cast<std::size_t>(k);
    }

    void check_window(long k_max) const {
        if (k_max > pol_.series_horizon)
            throw Error("verification window exceeds the series horizon; raise series_horizon");
    }

    /// Shared kernel-recursion pass: out[k] (+)= S_P(k) - T_Q(k) from per-index
    /// inputs g(j). With negate_p the P part enters with a minus sign and the
    /// Q part with a plus sign (the w* orientation); otherwise the z*/Gamma
    /// orientation is used.
    void accumulate_series(const std::vector<Vector>& g, std::vector<Vector>& out,
                           bool negate_p) const {
        const long K = pol_.series_horizon;
        const int d = sys_.dim();
        const double sp_sign = negate_p ? -1.0 : 1.0;
        Vector sp = Vector::Zero(d);  // S_P(0) = 0
        for (long k = 1; k <= K; ++k) {
            sp = sys_.trans.a(k - 1) * sp + p_mat_[static_cast<std::size_t>(k)] * g[static_cast<std::size_t>(k - 1)];
            out[static_cast<std::size_t>(k)] += sp_sign * sp;
        }
        if (contraction_) return;
        Vector tq = Vector::Zero(d);
        for (long k = K; k >= 0; --k) {
            tq = sys_.trans.a_inverse(k) * (tq + q_mat_[static_cast<std::size_t>(k) + 1] * g[static_cast<std::size_t>(k)]);
            out[static_cast<std::size_t>(k)] -= sp_sign * tq;
        }
    }

    void build_tables() {
        const long K = pol_.series_horizon;
        const int d = sys_.dim();
        const auto n = static_cast<std::size_t>(K) + 1;

        p_mat_.resize(n + 1);
        q_mat_.resize(n + 1);
        for (long j = 0; j <= K + 1; ++j) {
            p_mat_[static_cast<std::size_t>(j)] = sys_.proj.p(j);
            q_mat_[static_cast<std::size_t>(j)] = sys_.proj.q(j);
        }

        phi_norm_.assign(n, std::vector<double>(n, 0.0));
        g_norm_.assign(n, std::vector<double>(n, 0.0));
        for (long k = 0; k <= K; ++k) {
            // march Phi(k, .) by column to reuse products
            Matrix m = Matrix::Identity(d, d);
            phi_norm_[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = operator_norm(m);
            for (long j = k; j > 0; --j) {  // Phi(k,j-1) = Phi(k,j) A(j-1)
                m = m * sys_.trans.a(j - 1);
                phi_norm_[static_cast<std::size_t>(k)][static_cast<std::size_t>(j - 1)] = operator_norm(m);
            }
            m = Matrix::Identity(d, d);
            for (long j = k + 1; j <= K; ++j) {  // Phi(k,j) = Phi(k,j-1) A(j-1)^-1
                m = m * sys_.trans.a_inverse(j - 1);
                phi_norm_[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = operator_norm(m);
            }
            for (long j = 0; j <= K; ++j)
                g_norm_[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] =
                    operator_norm(green_kernel(sys_.trans, sys_.proj, k, j + 1));
        }

        fwd_lip_.resize(n);
        bwd_lip_.resize(n);
        fwd_lip_[0] = 1.0;
        bwd_lip_[0] = 1.0;
        for (long j = 1; j <= K; ++j) {
            const double gj = sys_.pert.gamma().at(j - 1);
            fwd_lip_[static_cast<std::size_t>(j)] =
                fwd_lip_[static_cast<std::size_t>(j - 1)] * (sys_.trans.a_norm(j - 1) + gj);
            const double c = sys_.trans.a_inverse_norm(j - 1) * gj;
            bwd_lip_[static_cast<std::size_t>(j)] =
                c < 1.0 ? bwd_lip_[static_cast<std::size_t>(j - 1)] *
                              (sys_.trans.a_inverse_norm(j - 1) / (1.0 - c))
                        : std::numeric_limits<double>::infinity();
        }

        tail_mu_.resize(n);
        tail_gamma_.resize(n);
        for (long k = 0; k <= K; ++k) {
            if (contraction_) {
                tail_mu_[static_cast<std::size_t>(k)] = 0.0;
                tail_gamma_[static_cast<std::size_t>(k)] = 0.0;
            } else {
                tail_mu_[static_cast<std::size_t>(k)] =
                    sys_.rates.tail_envelope(K, k, sys_.pert.mu());
                tail_gamma_[static_cast<std::size_t>(k)] =
                    sys_.rates.tail_envelope(K, k, sys_.pert.gamma());
            }
        }

        std::vector<double> gamma_cache(n);
        for (long j = 0; j <= K; ++j)
            gamma_cache[static_cast<std::size_t>(j)] = sys_.pert.gamma().at(j);

        zsens_.resize(n);
        wsens_.resize(n);
        for (long a = 0; a <= K; ++a) {
            double zmax = 0.0, wmax = 0.0;
            for (long k = 0; k <= K; ++k) {
                double zsum = 0.0, wsum = 0.0;
                for (long j = 0; j <= K; ++j) {
                    const double gg = g_norm_[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] *
                                      gamma_cache[static_cast<std::size_t>(j)];
                    if (gg == 0.0) continue;
                    zsum += gg * phi_norm_[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
                    wsum += gg * orbit_lip_raw(j, a);
                }
                zmax = std::max(zmax, zsum);
                wmax = std::max(wmax, wsum);
            }
            zsens_[static_cast<std::size_t>(a)] = zmax / (1.0 - q_);
            wsens_[static_cast<std::size_t>(a)] = wmax;
        }
    }

    double orbit_lip_raw(long j, long m) const {
        if (j >= m) return fwd_lip_[static_cast<std::size_t>(j)] / fwd_lip_[static_cast<std::size_t>(m)];
        return bwd_lip_[static_cast<std::size_t>(m)] / bwd_lip_[static_cast<std::size_t>(j)];
    }

    SystemPair sys_;
    TruncationPolicy pol_;
    double q_ = 0.0;
    bool contraction_ = false;

    std::vector<Matrix> p_mat_, q_mat_;              // P(j), Q(j), j = 0..K+1
    std::vector<std::vector<double>> phi_norm_;      // ||Phi(i,j)||
    std::vector<std::vector<double>> g_norm_;        // ||G(k,j+1)||
    std::vector<double> fwd_lip_, bwd_lip_;          // cumulative Lipschitz products
    std::vector<double> tail_mu_, tail_gamma_;
    std::vector<double> zsens_, wsens_;
};

}  // namespace linequiv
