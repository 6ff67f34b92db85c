#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>

#include "linequiv/conjugacy.hpp"
#include "test_systems.hpp"

using namespace linequiv;

namespace {

Vector v1(double x) {
    Vector v(1);
    v << x;
    return v;
}

double draw(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<ConjugacySample> draw_samples(std::mt19937_64& rng, int dim, int count, long m_max,
                                          double box) {
    std::vector<ConjugacySample> out;
    for (int s = 0; s < count; ++s) {
        ConjugacySample cs;
        cs.m = static_cast<long>(rng() % static_cast<std::uint64_t>(m_max + 1));
        cs.xi = Vector(dim);
        cs.eta = Vector(dim);
        for (int i = 0; i < dim; ++i) {
            cs.xi(i) = draw(rng, -box, box);
            cs.eta(i) = draw(rng, -box, box);
        }
        out.push_back(std::move(cs));
    }
    return out;
}

}  // namespace

TEST_CASE("w* closed form on the scalar affine system") {
    auto cp = testsys::scalar_affine().conjugacy();
    // w*(k;(k,eta)) = -0.6 (1 - 2^-k) independent of eta (f is constant)
    for (long k : {0L, 1L, 3L, 10L}) {
        const double expected = -0.6 * (1.0 - std::pow(2.0, -static_cast<double>(k)));
        auto r = cp.w_star(k, k, v1(0.8));
        CHECK_THAT(r.value(0), Catch::Matchers::WithinAbs(expected, 1e-13));
        CHECK(r.err >= 0.0);
    }
    CHECK_THAT(cp.w_star(3, 3, v1(-2.0)).value(0), Catch::Matchers::WithinAbs(-0.525, 1e-13));
}

TEST_CASE("w* solves its initial value problem along the orbit") {
    // w_{k+1} = A(k) w_k - f(k, y(k,m,eta))
    auto cp = testsys::hyperbolic_2d().conjugacy();
    const auto& sys = cp.system();
    Vector eta(2);
    eta << 0.6, -0.4;
    const long m = 4;
    auto orbit = nonlinear_orbit(sys, m, eta, cp.policy().series_horizon, 1e-13);
    auto w = cp.w_star_table(orbit);
    for (long k = 0; k + 1 <= 50; ++k) {
        const Vector rhs = sys.trans.a(k) * w[static_cast<std::size_t>(k)] -
                           sys.pert.f(k, orbit[static_cast<std::size_t>(k)]);
        CHECK((w[static_cast<std::size_t>(k) + 1] - rhs).norm() <= 1e-9);
    }
    // and w(0) carries only the Q part: P(0) w(0) should vanish
    CHECK((sys.proj.p(0) * w[0]).norm() <= 1e-9);
}

TEST_CASE("z*: identity case converges in one sweep to zero") {
    auto cp = testsys::identity_2d().conjugacy();
    Vector xi(2);
    xi << 0.3, 0.9;
    auto r = cp.z_star(7, 2, xi);
    CHECK(r.value.norm() == 0.0);
    CHECK(r.iters == 1);
    CHECK(r.apriori == 0.0);
}

TEST_CASE("z* closed form on the scalar affine system") {
    auto cp = testsys::scalar_affine().conjugacy();
    // z*(k) = 2c (1 - 2^-k) with one effective Gamma application since gamma = 0
    auto r = cp.z_star(3, 0, v1(4.0));
    CHECK_THAT(r.value(0), Catch::Matchers::WithinAbs(0.525, 1e-13));
    CHECK(r.iters <= 2);
    for (long k : {1L, 5L, 12L, 40L}) {
        const double expected = 0.6 * (1.0 - std::pow(2.0, -static_cast<double>(k)));
        CHECK_THAT(cp.z_star(k, 0, v1(4.0)).value(0), Catch::Matchers::WithinAbs(expected, 1e-12));
    }
}

TEST_CASE("z* solves its fixed-point difference equation") {
    // z_{k+1} = A(k) z_k + f(k, x(k,m,xi) + z_k) within the combined tolerance
    auto cp = testsys::hyperbolic_2d().conjugacy();
    const auto& sys = cp.system();
    Vector xi(2);
    xi << 0.5, 0.2;
    const long m = 3;
    auto zs = cp.z_star_solve(m, xi);
    for (long k = 0; k + 1 <= 50; ++k) {
        const Vector rhs = sys.trans.a(k) * zs.z[static_cast<std::size_t>(k)] +
                           sys.pert.f(k, zs.x_orbit[static_cast<std::size_t>(k)] +
                                             zs.z[static_cast<std::size_t>(k)]);
        CHECK((zs.z[static_cast<std::size_t>(k) + 1] - rhs).norm() <=
              cp.base_err(k + 1) + cp.base_err(k));
    }
}

TEST_CASE("z* against the direct Green-kernel summation oracle") {
    auto cp = testsys::hyperbolic_2d().conjugacy();
    const auto& sys = cp.system();
    Vector xi(2);
    xi << -0.3, 0.7;
    auto zs = cp.z_star_solve(2, xi);
    const long K = cp.policy().series_horizon;
    for (long k : {0L, 1L, 7L, 23L}) {
        Vector direct = Vector::Zero(2);
        for (long j = 0; j <= K; ++j)
            direct += green_kernel(sys.trans, sys.proj, k, j + 1) *
                      sys.pert.f(j, zs.x_orbit[static_cast<std::size_t>(j)] +
                                        zs.z[static_cast<std::size_t>(j)]);
        CHECK((zs.z[static_cast<std::size_t>(k)] - direct).norm() <=
              cp.policy().fixed_point_tol * 10.0);
    }
}

TEST_CASE("Gamma iteration contracts no slower than the certified q") {
    auto cp = testsys::hyperbolic_2d().conjugacy();
    std::mt19937_64 rng(8);
    for (int i = 0; i < 10; ++i) {
        Vector xi(2);
        xi << draw(rng, -1, 1), draw(rng, -1, 1);
        auto zs = cp.z_star_solve(static_cast<long>(rng() % 11), xi);
        CHECK(zs.max_ratio <= cp.system().cert.q + 1e-9);
        CHECK(zs.final_change <= cp.policy().fixed_point_tol);
    }
}

TEST_CASE("H and G closed forms on the scalar affine system") {
    auto cp = testsys::scalar_affine().conjugacy();
    auto H = cp.H_map(3, v1(1.0));
    CHECK_THAT(H.value(0), Catch::Matchers::WithinAbs(1.525, 1e-12));
    auto G = cp.G_map(3, v1(1.0));
    CHECK_THAT(G.value(0), Catch::Matchers::WithinAbs(0.475, 1e-12));
    // the homeo-G1 cross-check agrees tightly in the contraction case
    CHECK(G.discrepancy <= G.alt_budget);
    CHECK(G.discrepancy <= 1e-11);

    // boundedness |H(k,u) - u| <= p + err
    std::mt19937_64 rng(44);
    for (int i = 0; i < 50; ++i) {
        const long k = static_cast<long>(rng() % 41);
        const Vector u = v1(draw(rng, -3, 3));
        CHECK((cp.H_map(k, u).value - u).norm() <=
              cp.system().cert.p + cp.base_err(k));
        CHECK((cp.G_map(k, u).value - u).norm() <=
              cp.system().cert.p + cp.base_err(k));
    }
}

TEST_CASE("identity case: H and G are the identity, exactly") {
    auto cp = testsys::identity_2d().conjugacy();
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20; ++i) {
        Vector u(2);
        u << draw(rng, -2, 2), draw(rng, -2, 2);
        const long k = static_cast<long>(rng() % 51);
        CHECK((cp.H_map(k, u).value - u).norm() == 0.0);
        CHECK((cp.G_map(k, u).value - u).norm() == 0.0);
    }
}

TEST_CASE("shortcut maps match the series maps in the contraction case") {
    auto cp = testsys::scalar_affine().conjugacy();
    // G_short(3, 1) = 2^-3 (2^3 - 0.6 (2^3 - 1)) = 0.475
    auto sc = cp.shortcut_maps(3, v1(1.0));
    CHECK_THAT(sc.G_short(0), Catch::Matchers::WithinAbs(0.475, 1e-12));
    auto G = cp.G_map(3, v1(1.0));
    CHECK((sc.G_short - G.value).norm() <= G.err + sc.err_g);

    // H_short(k, G_short(k, eta)) = eta
    std::mt19937_64 rng(15);
    for (int i = 0; i < 20; ++i) {
        const long k = static_cast<long>(rng() % 31);
        const Vector eta = v1(draw(rng, -2, 2));
        auto fwd = cp.shortcut_maps(k, eta);
        auto back = cp.shortcut_maps(k, fwd.G_short);
        CHECK((back.H_short - eta).norm() <= 1e-9);
    }
}

TEST_CASE("shortcut maps on the 2d contraction agree within combined budgets") {
    auto cp = testsys::contraction_2d().conjugacy();
    std::mt19937_64 rng(25);
    for (int i = 0; i < 15; ++i) {
        const long k = static_cast<long>(rng() % 41);
        Vector v(2);
        v << draw(rng, -1, 1), draw(rng, -1, 1);
        auto sc = cp.shortcut_maps(k, v);
        auto G = cp.G_map(k, v);
        auto H = cp.H_map(k, v);
        CHECK((sc.G_short - G.value).norm() <= G.err + sc.err_g);
        CHECK((sc.H_short - H.value).norm() <= H.err + sc.err_h);
    }
}

TEST_CASE("shortcut maps reject the hyperbolic case") {
    auto cp = testsys::hyperbolic_2d().conjugacy();
    Vector v(2);
    v << 0.1, 0.1;
    CHECK_THROWS_AS(cp.shortcut_maps(3, v), NotContractionCase);
    CHECK_THROWS_AS(cp.d_G(3, v), NotContractionCase);
}

TEST_CASE("d_G: constant perturbation leaves the identity derivative") {
    auto cp = testsys::scalar_affine().conjugacy();
    for (long k : {0L, 3L, 11L}) {
        const Matrix dg = cp.d_G(k, v1(0.7));
        CHECK_THAT(dg(0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("d_G matches central finite differences of G_map") {
    const double h = 1e-5;
    {
        auto cp = testsys::scalar_sine().conjugacy();
        for (long k : {1L, 5L, 13L}) {
            for (double x : {-0.8, 0.3, 1.4}) {
                const Matrix dg = cp.d_G(k, v1(x));
                const double fd =
                    (cp.G_map(k, v1(x + h)).value(0) - cp.G_map(k, v1(x - h)).value(0)) /
                    (2.0 * h);
                CHECK_THAT(dg(0, 0), Catch::Matchers::WithinRel(fd, 1e-5));
            }
        }
    }
    {
        auto cp = testsys::contraction_2d().conjugacy();
        std::mt19937_64 rng(62);
        for (long k : {2L, 9L, 17L}) {
            Vector xi(2);
            xi << draw(rng, -1, 1), draw(rng, -1, 1);
            const Matrix dg = cp.d_G(k, xi);
            Matrix fd(2, 2);
            for (int j = 0; j < 2; ++j) {
                Vector e = Vector::Zero(2);
                e(j) = h;
                fd.col(j) =
                    (cp.G_map(k, xi + e).value - cp.G_map(k, xi - e).value) / (2.0 * h);
            }
            CHECK((dg - fd).norm() <= 1e-5 * fd.norm());
        }
    }
}

TEST_CASE("verify_conjugacy: scalar affine residuals at closed-form accuracy") {
    auto cp = testsys::scalar_affine().conjugacy();
    std::mt19937_64 rng(2);
    auto samples = draw_samples(rng, 1, 10, 5, 1.0);
    auto rep = cp.verify_conjugacy(samples, 40);
    CHECK(rep.within_budget);
    CHECK(rep.max_res_conj < 1e-10);
    CHECK(rep.max_res_lin < 1e-10);
    CHECK(rep.max_res_inv < 1e-10);
    CHECK(rep.max_res_wz < 1e-10);
}

TEST_CASE("verify_conjugacy: identity case residuals are exactly zero") {
    auto cp = testsys::identity_2d().conjugacy();
    std::mt19937_64 rng(3);
    auto samples = draw_samples(rng, 2, 6, 5, 1.0);
    auto rep = cp.verify_conjugacy(samples, 50);
    for (const auto& row : rep.rows) {
        CHECK(row.res_conj == 0.0);
        CHECK(row.res_lin == 0.0);
        CHECK(row.res_inv_hg == 0.0);
        CHECK(row.res_inv_gh == 0.0);
        CHECK(row.res_ident_wz == 0.0);
    }
}

TEST_CASE("verify_conjugacy: hyperbolic suite within budgets") {
    auto cp = testsys::hyperbolic_2d().conjugacy();
    std::mt19937_64 rng(7);
    auto samples = draw_samples(rng, 2, 12, 10, 1.0);
    auto rep = cp.verify_conjugacy(samples, 50);
    CHECK(rep.within_budget);
    // the same-index compositions stay near the truncation scale
    CHECK(rep.max_res_inv < 1e-3);
    CHECK(rep.max_res_wz < 1e-2);
}

TEST_CASE("verify_identities: fixed-point and flow identities") {
    {
        auto cp = testsys::scalar_affine().conjugacy();
        std::mt19937_64 rng(9);
        auto samples = draw_samples(rng, 1, 8, 5, 1.0);
        auto rep = cp.verify_identities(samples, 40);
        CHECK(rep.within_budget);
        CHECK(rep.max_res < 1e-10);
    }
    {
        auto cp = testsys::hyperbolic_2d().conjugacy();
        std::mt19937_64 rng(10);
        auto samples = draw_samples(rng, 2, 8, 10, 1.0);
        auto rep = cp.verify_identities(samples, 50);
        CHECK(rep.within_budget);
    }
}

TEST_CASE("refinement shrinks the truncation-governed residuals by 10x") {
    TruncationPolicy coarse{.series_horizon = 60, .fixed_point_tol = 1e-9};
    TruncationPolicy fine{.series_horizon = 120, .fixed_point_tol = 1e-10};
    auto cp_coarse = testsys::hyperbolic_2d(60, coarse).conjugacy();
    auto cp_fine = testsys::hyperbolic_2d(60, fine).conjugacy();

    std::mt19937_64 rng(12);
    auto samples = draw_samples(rng, 2, 8, 10, 1.0);
    auto rep_c = cp_coarse.verify_conjugacy(samples, 50);
    auto rep_f = cp_fine.verify_conjugacy(samples, 50);
    CHECK(rep_c.within_budget);
    CHECK(rep_f.within_budget);
    CHECK(rep_f.max_res_inv * 10.0 <= rep_c.max_res_inv);
    CHECK(rep_f.max_res_wz * 10.0 <= rep_c.max_res_wz);
}
