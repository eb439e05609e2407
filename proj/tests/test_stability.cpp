#include "doctest.h"

#include "cvsheet/errors.hpp"
#include "cvsheet/stability.hpp"

#include <cmath>
#include <random>

using namespace cvsheet;

namespace {

V3 constant(std::size_t n, const Vec3& a)
{
    V3 f = make_v3(n);
    for (int q = 0; q < 3; ++q) std::fill(f[q].begin(), f[q].end(), a[q]);
    return f;
}

// Tangential part of a constant ambient vector on a curved surface.
V3 tangential(const SurfaceGeometry& sg, const Vec3& a)
{
    V3 f = constant(sg.kappa.size(), a);
    for (std::size_t k = 0; k < sg.kappa.size(); ++k) {
        double d = 0;
        for (int q = 0; q < 3; ++q) d += f[q][k] * sg.normal[q][k];
        for (int q = 0; q < 3; ++q) f[q][k] -= d * sg.normal[q][k];
    }
    return f;
}

} // namespace

TEST_CASE("Upsilon closed forms")
{
    for (double c : {0.0, 0.3, 0.7, 1.0, 1.2}) {
        const Vec3 hp{1, 0, 0}, hm{0, 1, 0}, w{c, c, 0};
        CHECK(upsilon(hp, hm, w, 1, 1).value == doctest::Approx(0.5 - 0.5 * c * c).epsilon(1e-12).scale(1));
        CHECK(tensor_form_min_eig(hp, hm, w, 1, 1) == doctest::Approx(0.5 - 0.5 * c * c).scale(1));
    }
    CHECK(upsilon({1, 0, 0}, {0, 1, 0}, {0, 0, 0}, 1, 1).value == doctest::Approx(0.5));
    // pure shear: minimized along w
    const double rp = 2, rm = 3;
    auto r = upsilon({0, 0, 0}, {0, 0, 0}, {0.6, -0.8, 0}, rp, rm);
    CHECK(r.value == doctest::Approx(-rp * rm / 25.0).epsilon(1e-12));
    CHECK(std::abs(r.direction[0] * 0.6 - r.direction[1] * 0.8) == doctest::Approx(1).epsilon(1e-6));
}

TEST_CASE("Upsilon on a curved surface: scan against the eigenvalue and the serial reference")
{
    auto t = std::make_shared<Torus>(16, 16);
    auto c = ReferenceChart::flat(t, 0.0);
    Field X = c.node_x(), Y = c.node_y(), g(c.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.05 * std::sin(2 * M_PI * X[k]) * std::cos(2 * M_PI * Y[k]);
    SurfaceGeometry sg = immerse(c, g);
    V3 hp = tangential(sg, {1, 0.2, 0}), hm = tangential(sg, {-0.1, 1, 0}), w = tangential(sg, {0.5, 0.4, 0});
    for (std::size_t k = 0; k < g.size(); ++k) hp[0][k] *= 1 + 0.3 * std::cos(2 * M_PI * Y[k]);
    UpsilonResult a = upsilon(sg, hp, hm, w, 1, 2), b = upsilon_serial(sg, hp, hm, w, 1, 2);
    CHECK(a.value == b.value);
    CHECK(a.node == b.node);
    Field eig = tensor_form_min_eig(sg, hp, hm, w, 1, 2);
    CHECK(a.value == doctest::Approx(*std::min_element(eig.begin(), eig.end())).epsilon(1e-10));
    // the minimizing direction is tangent
    double dn = 0;
    for (int q = 0; q < 3; ++q) dn += a.direction[q] * sg.normal[q][a.node];
    CHECK(std::abs(dn) < 1e-14);
}

TEST_CASE("Syrovatskij conditions on the worked example")
{
    const Vec3 hp{1, 0, 0}, hm{0, 1, 0};
    for (double c : {0.0, 0.5, 0.99, 1.01, 1.3, 1.45}) {
        const Vec3 w{c, c, 0};
        CHECK(syro_strict_margin(hp, hm, w, 1, 1) == doctest::Approx(2 - 2 * c * c));
        auto [first, second] = syr_classical(hp, hm, w, 1, 1);
        CHECK(first == (c * c < 2));
        CHECK(second == (c * c <= 1));
        // |h+ x h-| = 1 and |h+- x w| = c
        CHECK(strong_stability(hp, hm, w) == (c < 1));
    }
    CHECK(syro_strict_margin(hp, hm, {0, 0, 0}, 1, 1) > 0);
    CHECK(strong_stability(hp, hm, {0, 0, 0}));
    // parallel fields have no cross product to spare
    const Vec3 par{2, 0, 0}, w{0.3, 0.1, 0};
    CHECK(syro_strict_margin(hp, par, w, 1, 1) <= 0);
    CHECK_FALSE(strong_stability(hp, par, w));

    const std::size_t n = 5;
    V3 Hp = constant(n, hp), Hm = constant(n, hm), W = constant(n, {0.5, 0.5, 0});
    CHECK(check_syro_strict(Hp, Hm, W, 1, 1).all());
    CHECK(check_syro_strict(Hp, Hm, W, 1, 1).min_margin() == doctest::Approx(1.5));
    CHECK(check_strong_stability(Hp, Hm, W));
    W[0][2] = W[1][2] = 1.2;
    CHECK_FALSE(check_syro_strict(Hp, Hm, W, 1, 1).all());
    ClassicalCheck cc = check_syr_classical(Hp, Hm, W, 1, 1);
    CHECK(cc.all_first());
    CHECK_FALSE(cc.all_second());
    CHECK_FALSE(check_strong_stability(Hp, Hm, W));
}

TEST_CASE("strict condition implies positivity on random draws")
{
    StrictConditionReport r = strict_condition_test(10000, 7);
    MESSAGE(r.strict << " of " << r.samples << " draws strictly stable");
    CHECK(r.strict > 100);
    CHECK(r.violations == 0);
    CHECK(r.classical_violations == 0);
    CHECK(r.homogeneity_error < 1e-12);
}

TEST_CASE("dispersion relation")
{
    DispersionParams p;
    p.w = {1, 0, 0};
    // Kelvin-Helmholtz: every k with w.k != 0 grows
    for (double kx : {0.5, 2.0, 7.0}) {
        Dispersion d = dispersion_rate({kx, 0.3}, p);
        CHECK(d.omega2 == doctest::Approx(-0.25 * kx * kx));
        CHECK_FALSE(d.stable);
    }
    CHECK(dispersion_rate({0, 1}, p).stable);
    CHECK_THROWS_AS(dispersion_rate({0, 0}, p), ZeroWavevector);

    // capillary symbol at k = 2 pi, equal densities and depths
    DispersionParams cap;
    cap.alpha = 1;
    const double k = 2 * M_PI;
    CHECK(dispersion_rate({k, 0}, cap).omega2 == doctest::Approx(k * k * M_PI * std::tanh(k)));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    int sign_mismatch = 0;
    for (int i = 0; i < 1000; ++i) {
        DispersionParams q;
        q.rho_plus = 1 + u(rng) * 0.5;
        q.rho_minus = 1.2 + u(rng) * 0.5;
        q.hp = {u(rng), u(rng), 0};
        q.hm = {u(rng), u(rng), 0};
        q.w = {2 * u(rng), 2 * u(rng), 0};
        const std::array<double, 2> kv{3 * u(rng), 3 * u(rng)};
        const double kk = std::hypot(kv[0], kv[1]);
        const Dispersion d = dispersion_rate(kv, q);
        const double form = stability_form({kv[0] / kk, kv[1] / kk, 0}, q.hp, q.hm, q.w, q.rho_plus, q.rho_minus);
        if ((d.omega2 >= 0) != (form >= 0)) ++sign_mismatch;
        // even in k, and odd field reversal does nothing
        CHECK(dispersion_rate({-kv[0], -kv[1]}, q).omega2 == doctest::Approx(d.omega2));
        DispersionParams r = q;
        for (int c = 0; c < 3; ++c) {
            r.hp[c] = -q.hp[c];
            r.hm[c] = -q.hm[c];
            r.w[c] = -q.w[c];
        }
        CHECK(dispersion_rate(kv, r).omega2 == doctest::Approx(d.omega2));
    }
    CHECK(sign_mismatch == 0);
}

TEST_CASE("unstable band with surface tension is finite")
{
    DispersionParams p;
    p.alpha = 1;
    p.rho_minus = 2;
    p.d_plus = 0.7;
    p.w = {3, 0, 0};
    p.hm = {0, 1, 0};
    const double kc = unstable_cutoff(0, p);
    REQUIRE(std::isfinite(kc));
    CHECK(kc > 0);
    CHECK_FALSE(dispersion_rate({0.999 * kc, 0}, p).stable);
    CHECK(dispersion_rate({1.001 * kc, 0}, p).stable);
    CHECK(std::abs(dispersion_rate({kc, 0}, p).omega2) <= 1e-8 * kc * kc * 9);
    CHECK(unstable_cutoff(M_PI / 2, p) == 0);
    p.alpha = 0;
    CHECK(std::isinf(unstable_cutoff(0, p)));
}

TEST_CASE("measured rates follow the dispersion relation")
{
    auto t = std::make_shared<Torus>(16, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    Field X = c.node_x(), z(c.size(), 0.0), g(c.size());
    for (std::size_t k = 0; k < g.size(); ++k)
        g[k] = 1e-6 * (std::sin(2 * M_PI * X[k]) + std::cos(4 * M_PI * X[k]));
    PlasmaParams pp;
    pp.M = 12;

    SUBCASE("capillary")
    {
        pp.alpha = 1;
        SimState s = make_state(c, g, z, pp, WallFlux{});
        auto m = measure_growth_rates(c, s, pp, {{1, 0}, {2, 0}}, 2e-3, 60);
        DispersionParams d;
        d.alpha = 1;
        for (int i = 0; i < 2; ++i) {
            const double ref = dispersion_rate({2 * M_PI * (i + 1), 0}, d).omega2;
            CHECK(m[i].omega2 == doctest::Approx(ref).epsilon(0.01));
        }
    }
    SUBCASE("Kelvin-Helmholtz, moving frame")
    {
        WallFlux f;
        f.v_plus = {0.9, 0};
        f.v_minus = {-0.1, 0};
        pp.rho_minus = 2;
        SimState s = make_state(c, g, z, pp, f);
        auto m = measure_growth_rate(c, s, pp, {2, 0}, 4e-3, 40);
        DispersionParams d;
        d.rho_minus = 2;
        d.w = {1, 0, 0};
        CHECK(m.omega2 == doctest::Approx(dispersion_rate({4 * M_PI, 0}, d).omega2).epsilon(0.01));
        CHECK(m.omega2 < 0);
    }
    SUBCASE("rest stays at rest")
    {
        pp.alpha = 1;
        SimState s = make_state(c, z, z, pp, WallFlux{});
        auto m = measure_growth_rate(c, s, pp, {1, 0}, 2e-3, 5);
        CHECK(m.omega2 == 0);
        CHECK(m.residual == 0);
    }
    CHECK_THROWS_AS(measure_growth_rate(c, make_state(c, g, z, pp, WallFlux{}), pp, {1, 0}, 1e-3, 2),
                    InsufficientSamples);
}
