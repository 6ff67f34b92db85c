#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>

#include "linequiv/certify.hpp"
#include "test_systems.hpp"

using namespace linequiv;
using testsys::scalar;

namespace {

TransitionCache scalar_cache(double a, long horizon) {
    return TransitionCache(MatrixSequence::constant(scalar(a)), horizon);
}

PerturbationSpec sine_pert(double amp) {
    PerturbationSpec::Component c;
    c.amp = amp;
    c.func = PerturbationSpec::Component::Func::Sin;
    return PerturbationSpec::componentwise({c}, ScalarSequence::constant(amp),
                                           ScalarSequence::constant(amp));
}

}  // namespace

TEST_CASE("certify_p1 on the contract examples") {
    double M = 0.0;
    {
        Vector d(2);
        d << 0.5, 2.0;
        TransitionCache cache(MatrixSequence::diagonal(d), 10);
        // oracle: operator norm of a diagonal matrix is the largest |entry|
        auto r = certify_p1(cache, 10, &M);
        CHECK(r.holds);
        CHECK(M == 2.0);
    }
    {
        TransitionCache cache(MatrixSequence::constant(Matrix::Identity(2, 2)), 10);
        certify_p1(cache, 10, &M);
        CHECK(M == 1.0);
    }
    {
        TransitionCache cache = scalar_cache(2.0, 10);
        certify_p1(cache, 10, &M);
        CHECK(M == 2.0);  // from ||A||; ||A^-1|| = 1/2
    }
}

TEST_CASE("certify_p2: scalar contraction meets the envelope with equality") {
    TransitionCache cache = scalar_cache(0.5, 30);
    ProjectorPair proj = ProjectorPair::identity(1);
    RatePair rates = RatePair::geometric(ScalarSequence::constant(1.0), 0.5, 32);
    auto r = certify_p2(cache, proj, rates, 30);
    CHECK(r.holds);
    CHECK(r.worst == 0.0);  // |Phi(k,n)| = 2^(n-k) exactly
}

TEST_CASE("certify_p2: hyperbolic diagonal holds on both branches") {
    Vector d(2), stable(2);
    d << 0.5, 2.0;
    stable << 1.0, 0.0;
    TransitionCache cache(MatrixSequence::diagonal(d), 30);
    ProjectorPair proj = ProjectorPair::diagonal(stable);
    RatePair rates = RatePair::geometric(ScalarSequence::constant(1.0), 0.5, 32);
    auto r = certify_p2(cache, proj, rates, 30);
    CHECK(r.holds);
    CHECK(std::fabs(r.worst) <= 1e-12);
}

TEST_CASE("certify_p2: uniform exponential with K > 1, and a violation witness") {
    TransitionCache cache = scalar_cache(0.5, 20);
    ProjectorPair proj = ProjectorPair::identity(1);
    // rho = K = 3 leaves slack everywhere
    RatePair loose = RatePair::geometric(ScalarSequence::constant(3.0), 0.5, 22);
    CHECK(certify_p2(cache, proj, loose, 20).holds);
    // theta = 0.4 under-estimates the true decay 0.5: must fail with a witness
    RatePair wrong = RatePair::geometric(ScalarSequence::constant(1.0), 0.4, 22);
    auto bad = certify_p2(cache, proj, wrong, 20);
    CHECK_FALSE(bad.holds);
    CHECK(bad.worst > 0.0);
    CHECK(bad.witness_k > bad.witness_n);
}

TEST_CASE("series_constant: zero weight, geometric closed form, uniform bound") {
    TruncationPolicy pol{.series_horizon = 60};
    TransitionCache cache = scalar_cache(0.5, 62);
    ProjectorPair proj = ProjectorPair::identity(1);
    RatePair rates = RatePair::geometric(ScalarSequence::constant(1.0), 0.5, 62);

    auto zero = series_constant(cache, proj, rates, ScalarSequence::constant(0.0), 7, pol);
    CHECK(zero.value == 0.0);
    CHECK(zero.tail_bound == 0.0);

    // oracle: geometric partial sum sum_{j<l} 2^{-(l-1-j)} gamma = gamma (2 - 2^{1-l})
    const double gamma = 0.1;
    for (long l : {1L, 3L, 5L, 12L}) {
        auto nv = series_constant(cache, proj, rates, ScalarSequence::constant(gamma), l, pol);
        const double oracle = gamma * (2.0 - std::pow(2.0, 1.0 - static_cast<double>(l)));
        CHECK_THAT(nv.value, Catch::Matchers::WithinRel(oracle, 1e-14));
        CHECK(nv.tail_bound == 0.0);  // contraction case: finite sum
        CHECK(nv.total() < 2.0 * gamma);
    }

    // uniform exponential case: N(l,gamma) stays below gamma K/(1-theta)
    const double bound = gamma * 1.0 / (1.0 - 0.5);
    auto big = series_constant(cache, proj, rates, ScalarSequence::constant(gamma), 40, pol);
    CHECK(big.total() <= bound);
    CHECK(big.total() > 0.95 * bound);  // and approaches it
}

TEST_CASE("series_constant: hyperbolic Q part is truncated with a certified tail") {
    TruncationPolicy pol{.series_horizon = 60};
    Vector d(2), stable(2);
    d << 0.5, 2.0;
    stable << 1.0, 0.0;
    TransitionCache cache(MatrixSequence::diagonal(d), 62);
    ProjectorPair proj = ProjectorPair::diagonal(stable);
    RatePair rates = RatePair::geometric(ScalarSequence::constant(1.0), 0.5, 62);
    const double gamma = 0.05;

    // oracle: P part gamma (2 - 2^{1-l}); truncated Q part + tail envelope
    // reassemble to gamma (3 - 2^{1-l}) exactly for this system
    for (long l : {0L, 5L, 25L}) {
        auto nv = series_constant(cache, proj, rates, ScalarSequence::constant(gamma), l, pol);
        const double expected = gamma * (3.0 - std::pow(2.0, 1.0 - static_cast<double>(l)));
        CHECK_THAT(nv.total(), Catch::Matchers::WithinRel(expected, 1e-12));
        CHECK(nv.tail_bound > 0.0);
        CHECK(nv.total() < 3.0 * gamma);
    }
}

TEST_CASE("series_constant: tabulated rates demand a weight cutoff") {
    TruncationPolicy pol{.series_horizon = 20};
    Vector d(2), stable(2);
    d << 0.5, 2.0;
    stable << 1.0, 0.0;
    TransitionCache cache(MatrixSequence::diagonal(d), 22);
    ProjectorPair proj = ProjectorPair::diagonal(stable);
    std::vector<double> h(23);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::pow(0.5, static_cast<double>(i));
    RatePair rates = RatePair::tabulated(ScalarSequence::constant(1.0), h);

    std::vector<double> w(5, 0.1);
    auto ok = series_constant(cache, proj, rates, ScalarSequence::tabulated(w, 5), 3, pol);
    CHECK(ok.tail_bound == 0.0);  // weight cut off inside the summed range
    CHECK(ok.value > 0.0);

    CHECK_THROWS_AS(series_constant(cache, proj, rates, ScalarSequence::constant(0.1), 3, pol),
                    TailNotSummable);
}

TEST_CASE("certify_p6 examples") {
    TransitionCache cache = scalar_cache(0.5, 10);
    {
        auto r = certify_p6(cache, PerturbationSpec::zero(1), 10);
        CHECK(r.holds);
        CHECK(r.worst == 1.0);  // margin
    }
    {
        auto r = certify_p6(cache, sine_pert(0.1), 10);
        CHECK(r.holds);
        CHECK_THAT(r.worst, Catch::Matchers::WithinAbs(0.8, 1e-15));  // 1 - 2*0.1
    }
    {
        auto r = certify_p6(cache, sine_pert(0.6), 10);
        CHECK_FALSE(r.holds);  // product 1.2
        CHECK(r.witness_k == 0);
    }
}

TEST_CASE("backward_lipschitz_product") {
    TransitionCache cache = scalar_cache(0.5, 10);
    // per factor 2/(1-0.2) = 2.5
    CHECK_THAT(backward_lipschitz_product(cache, sine_pert(0.1), 1, 3),
               Catch::Matchers::WithinRel(6.25, 1e-15));
    CHECK(backward_lipschitz_product(cache, sine_pert(0.1), 4, 4) == 1.0);  // empty product
    CHECK(backward_lipschitz_product(cache, PerturbationSpec::zero(1), 0, 3) == 8.0);
    CHECK_THROWS_AS(backward_lipschitz_product(cache, sine_pert(0.6), 0, 2), P6Violated);
}

TEST_CASE("forward_gronwall_product") {
    {
        TransitionCache cache(MatrixSequence::constant(Matrix::Identity(1, 1)), 10);
        CHECK(forward_gronwall_product(cache, sine_pert(0.1), 4, 4) == 1.0);
        CHECK_THAT(forward_gronwall_product(cache, sine_pert(0.1), 2, 5),
                   Catch::Matchers::WithinRel(1e-3, 1e-14));
    }
    {
        TransitionCache cache = scalar_cache(0.5, 10);
        CHECK_THAT(forward_gronwall_product(cache, sine_pert(0.05), 3, 5),
                   Catch::Matchers::WithinRel(0.3025, 1e-14));  // (0.5 + 0.05)^2
    }
}

TEST_CASE("certify_s4 trend") {
    {
        // gamma == 0: s(k) = h(k), strictly decreasing
        RatePair rates = RatePair::geometric(ScalarSequence::constant(1.0), 0.5, 42);
        auto r = certify_s4(rates, PerturbationSpec::zero(1), 40);
        CHECK(r.flag.holds);
        for (std::size_t k = 0; k + 1 < r.curve.size(); ++k) CHECK(r.curve[k + 1] < r.curve[k]);
    }
    {
        // uniform case: s(k) = (theta + gamma K)^k = 0.6^k
        RatePair rates = RatePair::geometric(ScalarSequence::constant(1.0), 0.5, 42);
        auto r = certify_s4(rates, sine_pert(0.1), 40);
        CHECK(r.flag.holds);
        CHECK_THAT(r.curve[10], Catch::Matchers::WithinRel(0.0060466176, 1e-12));
        for (long k = 0; k <= 40; ++k)
            CHECK_THAT(r.curve[static_cast<std::size_t>(k)],
                       Catch::Matchers::WithinRel(std::pow(0.6, static_cast<double>(k)), 1e-12));
    }
}

TEST_CASE("P3 sampling accepts honest declarations and rejects understated gamma") {
    std::mt19937_64 rng(2024);
    CHECK(sine_pert(0.1).validate_p3(20, 2.0, 1000, rng).holds);

    PerturbationSpec::Component c;
    c.amp = 0.1;
    c.func = PerturbationSpec::Component::Func::Sin;
    auto lying = PerturbationSpec::componentwise({c}, ScalarSequence::constant(0.02),
                                                 ScalarSequence::constant(0.1));
    auto rep = lying.validate_p3(20, 2.0, 1000, rng);
    CHECK_FALSE(rep.holds);
    CHECK(rep.worst_lip_excess > 0.0);
}

TEST_CASE("full certification: hyperbolic 2d") {
    auto built = testsys::hyperbolic_2d();
    const auto& cert = built.sys.cert;
    CHECK(cert.all_hold());
    CHECK(cert.M == 2.0);
    CHECK(cert.q <= 0.15);
    CHECK(cert.q > 0.14);
    CHECK(cert.p6_margin >= 0.9);
    CHECK_FALSE(cert.contraction_case);
    CHECK(cert.p <= 3.0 * 0.05 * std::sqrt(2.0) + 1e-12);
}

TEST_CASE("full certification: scalar affine has q = 0, p = 0.6") {
    auto built = testsys::scalar_affine();
    const auto& cert = built.sys.cert;
    CHECK(cert.all_hold());
    CHECK(cert.q == 0.0);
    CHECK_THAT(cert.p, Catch::Matchers::WithinAbs(0.6, 1e-12));
    CHECK(cert.contraction_case);
}

TEST_CASE("remark R6 implication: the diagonal Green term stays below q") {
    auto built = testsys::hyperbolic_2d();
    const auto& sys = built.sys;
    for (long l = 0; l + 1 <= 40; ++l) {
        const double term =
            operator_norm(green_kernel(sys.trans, sys.proj, l, l + 1)) * sys.pert.gamma().at(l);
        CHECK(term <= sys.cert.q);
    }
}

TEST_CASE("generalized exponential rates: h(0) = 1 and certification passes") {
    auto built = testsys::generalized_exp_scalar();
    CHECK(built.sys.rates.h(0) == 1.0);
    // h(k) = exp(-sum_{j<k} 1/(j+1))
    CHECK_THAT(built.sys.rates.h(3),
               Catch::Matchers::WithinRel(std::exp(-(1.0 + 0.5 + 1.0 / 3.0)), 1e-14));
    CHECK(built.sys.cert.all_hold());
    CHECK(built.sys.cert.contraction_case);
}

TEST_CASE("certificates are hash-linked to their system") {
    auto a = testsys::scalar_affine();
    auto b = testsys::scalar_sine();
    CHECK_THROWS_AS(SystemPair::assemble(a.sys.trans, a.sys.proj, a.sys.rates, a.sys.pert,
                                         b.sys.cert),
                    Error);
}
