#pragma once

// Certification of the dichotomy and perturbation hypotheses on a declared
// system pair, over a declared finite horizon:
//
//   (P1) A(k) invertible, max(sup||A||, sup||A^-1||) = M >= 1
//   (P2) ||Phi(k,n)P(n)|| <= rho(n) h(k)/h(n) for k >= n,
//        ||Phi(k,n)Q(n)|| <= rho(n) h(n)/h(k) for k <= n
//   (P3) |f(k,y)-f(k,yt)| <= gamma(k)|y-yt|, |f(k,y)| <= mu(k)  (sampled)
//   (P4) sup_l sum_j ||G(l,j+1)|| mu(j) = p < inf
//   (P5) sup_l sum_j ||G(l,j+1)|| gamma(j) = q < 1
//   (P6) ||A(l)^-1|| gamma(l) < 1
//   (S4) h(k) prod_{j<k} (1 + gamma(j) rho(j+1) h(j)/h(j+1)) -> 0  (trend)
//
// The certificate is explicitly finite-horizon: the paper's conditions
// quantify over all of Z+, which is undecidable for tabulated input. Series
// are truncated with certified tail envelopes and the constants p, q are
// reported as truncated value + tail bound.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "linequiv/matrix_sequence.hpp"
#include "linequiv/perturbation.hpp"
#include "linequiv/rates.hpp"
#include "linequiv/sequences.hpp"
#include "linequiv/truncation.hpp"

namespace linequiv {

struct HypothesisResult {
    bool holds = false;
    double worst = 0.0;   // worst violation / margin, meaning depends on the hypothesis
    long witness_k = -1;
    long witness_n = -1;
};

struct SeriesValue {
    double value = 0.0;
    double tail_bound = 0.0;
    double total() const { return value + tail_bound; }
};

struct DichotomyCertificate {
    int dim = 0;
    long horizon = 0;
    double M = 1.0;

    double p = 0.0;             // sup_l of the mu series, value + tail (P4)
    double q = 0.0;             // sup_l of the gamma series, value + tail (P5)
    double s3_q_envelope = 0.0; // sup_k sum_{j<k} gamma(j) rho(j+1) h(k)/h(j+1) (S3 form)
    double p6_margin = 0.0;     // 1 - sup_l ||A(l)^-1|| gamma(l)

    bool contraction_case = false;
    double sup_p_norm = 0.0;    // measured diagnostic; the paper never bounds ||P(n)||
    double sup_q_norm = 0.0;
    double proj_idempotency_defect = 0.0;
    double proj_invariance_defect = 0.0;

    HypothesisResult p1, p2, p3, p4, p5, p6, s4;
    std::vector<double> s4_curve;

    std::uint64_t fingerprint = 0;

    bool all_hold() const {
        bool core = p1.holds && p2.holds && p3.holds && p4.holds && p5.holds && p6.holds;
        return contraction_case ? core && s4.holds : core;
    }
};

/// (P1): M over the horizon, clamped below by 1.
inline HypothesisResult certify_p1(const TransitionCache& cache, long horizon, double* M_out) {
    double M = 1.0;
    for (long k = 0; k <= horizon; ++k)
        M = std::max({M, cache.a_norm(k), cache.a_inverse_norm(k)});
    if (M_out) *M_out = M;
    HypothesisResult r;
    r.holds = std::isfinite(M);
    r.worst = M;
    return r;
}

/// (P2) grid check. `worst` is max over the grid of ||.||/envelope - 1; the
/// hypothesis holds when no ratio exceeds 1 beyond a roundoff slack.
inline HypothesisResult certify_p2(const TransitionCache& cache, const ProjectorPair& proj,
                                   const RatePair& rates, long horizon,
                                   double slack = 1e-9) {
    HypothesisResult r;
    double worst = -1.0;
    for (long n = 0; n <= horizon; ++n) {
        const Matrix P = proj.p(n);
        const Matrix Q = proj.q(n);
        const double rho_n = rates.rho(n);
        for (long k = n; k <= horizon; ++k) {
            const double lhs = operator_norm(cache.phi(k, n) * P);
            const double rhs = rho_n * rates.h_ratio(k, n);
            const double v = lhs / rhs - 1.0;
            if (v > worst) { worst = v; r.witness_k = k; r.witness_n = n; }
        }
        const bool q_zero = operator_norm(Q) <= 1e-14;
        if (!q_zero) {
            for (long k = 0; k <= n; ++k) {
                const double lhs = operator_norm(cache.phi(k, n) * Q);
                const double rhs = rho_n * rates.h_ratio(n, k);
                const double v = lhs / rhs - 1.0;
                if (v > worst) { worst = v; r.witness_k = k; r.witness_n = n; }
            }
        }
    }
    r.worst = worst;
    r.holds = worst <= slack;
    return r;
}

/// Truncated N(l, w) = sum_j ||G(l,j+1)|| w(j) with a certified tail bound.
/// The split follows the kernel: j < l contributes the P part, j >= l the Q
/// part. For a contraction (Q == 0) the sum is finite and the tail is zero.
inline SeriesValue series_constant(const TransitionCache& cache, const ProjectorPair& proj,
                                   const RatePair& rates, const ScalarSequence& weight,
                                   long ell, const TruncationPolicy& policy) {
    SeriesValue out;
    for (long j = 0; j < ell; ++j) {
        const double w = weight.at(j);
        if (w != 0.0)
            out.value += operator_norm(cache.phi(ell, j + 1) * proj.p(j + 1)) * w;
    }
    const bool contraction = proj.is_contraction(cache.horizon());
    if (contraction) return out;

    const long k_last = std::max(policy.series_horizon, ell);
    for (long j = ell; j <= k_last; ++j) {
        const double w = weight.at(j);
        if (w != 0.0)
            out.value += operator_norm(cache.phi(ell, j + 1) * proj.q(j + 1)) * w;
    }
    out.tail_bound = rates.tail_envelope(k_last, ell, weight);
    return out;
}

/// (P6): ||A(l)^-1|| gamma(l) < 1 on the horizon; margin = 1 - worst product.
inline HypothesisResult certify_p6(const TransitionCache& cache, const PerturbationSpec& pert,
                                   long horizon) {
    HypothesisResult r;
    double worst_product = 0.0;
    r.witness_k = 0;
    for (long l = 0; l <= horizon; ++l) {
        const double prod = cache.a_inverse_norm(l) * pert.gamma().at(l);
        if (prod > worst_product) { worst_product = prod; r.witness_k = l; }
    }
    r.worst = 1.0 - worst_product;  // margin
    r.holds = worst_product < 1.0;
    return r;
}

/// Backward-continuation Lipschitz product
///   C_k(n) = prod_{j=n}^{k-1} ||A(j)^-1|| / (1 - ||A(j)^-1|| gamma(j)).
/// Upper-bounds sampled backward difference quotients; requires (P6) on [n,k).
inline double backward_lipschitz_product(const TransitionCache& cache,
                                         const PerturbationSpec& pert, long n, long k) {
    double prod = 1.0;
    for (long j = n; j < k; ++j) {
        const double ainv = cache.a_inverse_norm(j);
        const double c = ainv * pert.gamma().at(j);
        if (!(c < 1.0)) throw P6Violated(j);
        prod *= ainv / (1.0 - c);
    }
    return prod;
}

/// Forward product prod_{p=k}^{j-1} (||A(p)-I|| + gamma(p)); empty product = 1.
inline double forward_gronwall_product(const TransitionCache& cache,
                                       const PerturbationSpec& pert, long k, long j) {
    const int d = cache.dim();
    double prod = 1.0;
    for (long p = k; p < j; ++p)
        prod *= operator_norm(cache.a(p) - Matrix::Identity(d, d)) + pert.gamma().at(p);
    return prod;
}

struct S4Result {
    HypothesisResult flag;        // holds_empirically: tail decreasing and s(H) < s(0)/10
    std::vector<double> curve;    // s(k), k = 0..horizon
};

/// (S4) trend: s(k) = h(k) prod_{j<k} (1 + gamma(j) rho(j+1) h(j)/h(j+1)).
/// The limit itself is not decidable numerically; this reports a trend.
inline S4Result certify_s4(const RatePair& rates, const PerturbationSpec& pert, long horizon) {
    S4Result out;
    out.curve.resize(static_cast<std::size_t>(horizon) + 1);
    double prod = 1.0;
    out.curve[0] = rates.h(0);
    for (long k = 1; k <= horizon; ++k) {
        const long j = k - 1;
        prod *= 1.0 + pert.gamma().at(j) * rates.rho(j + 1) * rates.h_ratio(j, j + 1);
        out.curve[static_cast<std::size_t>(k)] = rates.h(k) * prod;
    }
    long last_rise = -1;
    for (long k = 0; k < horizon; ++k)
        if (out.curve[static_cast<std::size_t>(k) + 1] > out.curve[static_cast<std::size_t>(k)])
            last_rise = k;
    const bool eventually_decreasing = (last_rise + 1) <= horizon / 2;
    const bool decayed = out.curve[static_cast<std::size_t>(horizon)] < out.curve[0] / 10.0;
    out.flag.holds = eventually_decreasing && decayed;
    out.flag.worst = out.curve[static_cast<std::size_t>(horizon)];
    out.flag.witness_k = last_rise;
    return out;
}

struct CertifyOptions {
    long horizon = 50;
    int p3_samples = 1000;
    double p3_box = 2.0;
    std::uint64_t seed = 1;
    double p2_slack = 1e-9;
};

inline std::uint64_t system_fingerprint(const MatrixSequence& seq, const ProjectorPair& proj,
                                        const RatePair& rates, const PerturbationSpec& pert,
                                        long horizon) {
    std::vector<double> buf;
    buf.push_back(static_cast<double>(horizon));
    seq.append_fingerprint(buf);
    proj.append_fingerprint(buf);
    rates.append_fingerprint(buf);
    pert.append_fingerprint(buf);
    return fingerprint_bits(buf);
}

inline DichotomyCertificate certify_system(const TransitionCache& cache,
                                           const ProjectorPair& proj, const RatePair& rates,
                                           const PerturbationSpec& pert,
                                           const TruncationPolicy& policy,
                                           const CertifyOptions& opts) {
    DichotomyCertificate cert;
    cert.dim = cache.dim();
    cert.horizon = opts.horizon;
    cert.fingerprint = system_fingerprint(cache.sequence(), proj, rates, pert, opts.horizon);

    cert.p1 = certify_p1(cache, opts.horizon, &cert.M);
    cert.p2 = certify_p2(cache, proj, rates, opts.horizon, opts.p2_slack);

    std::mt19937_64 rng(opts.seed);
    const auto p3 = pert.validate_p3(opts.horizon, opts.p3_box, opts.p3_samples, rng);
    cert.p3.holds = p3.holds;
    cert.p3.worst = std::max(p3.worst_lip_excess, p3.worst_bound_excess);
    cert.p3.witness_k = p3.witness_k;

    cert.contraction_case = proj.is_contraction(opts.horizon);
    cert.proj_idempotency_defect = proj.idempotency_defect(opts.horizon);
    cert.proj_invariance_defect = proj.invariance_defect(cache, opts.horizon);
    for (long n = 0; n <= opts.horizon; ++n) {
        cert.sup_p_norm = std::max(cert.sup_p_norm, operator_norm(proj.p(n)));
        cert.sup_q_norm = std::max(cert.sup_q_norm, operator_norm(proj.q(n)));
    }

    // (P4)/(P5): "for any l" read as a uniform bound, so take the sup over the
    // horizon of truncated value + tail.
    double p_sup = 0.0, q_sup = 0.0;
    long p_wit = 0, q_wit = 0;
    for (long l = 0; l <= opts.horizon; ++l) {
        const double pv = series_constant(cache, proj, rates, pert.mu(), l, policy).total();
        const double qv = series_constant(cache, proj, rates, pert.gamma(), l, policy).total();
        if (pv > p_sup) { p_sup = pv; p_wit = l; }
        if (qv > q_sup) { q_sup = qv; q_wit = l; }
    }
    cert.p = p_sup;
    cert.q = q_sup;
    cert.p4.holds = std::isfinite(p_sup);
    cert.p4.worst = p_sup;
    cert.p4.witness_k = p_wit;
    cert.p5.holds = q_sup < 1.0;
    cert.p5.worst = q_sup;
    cert.p5.witness_k = q_wit;

    cert.p6 = certify_p6(cache, pert, opts.horizon);
    cert.p6_margin = cert.p6.worst;

    // Envelope form of the series constant (the contraction-corollary (S3) sum);
    // the stability module's uniqueness precondition uses this one.
    double env = 0.0;
    for (long k = 0; k <= opts.horizon; ++k) {
        double s = 0.0;
        for (long j = 0; j < k; ++j)
            s += pert.gamma().at(j) * rates.rho(j + 1) * rates.h_ratio(k, j + 1);
        env = std::max(env, s);
    }
    cert.s3_q_envelope = env;

    const S4Result s4 = certify_s4(rates, pert, opts.horizon);
    cert.s4 = s4.flag;
    cert.s4_curve = s4.curve;

    return cert;
}

}  // namespace linequiv
