#include "doctest.h"

#include "cvsheet/curvature_map.hpp"
#include "cvsheet/dynamics.hpp"
#include "cvsheet/errors.hpp"

#include <cmath>

using namespace cvsheet;

namespace {

double maxabs(const Field& f)
{
    double m = 0;
    for (double x : f) m = std::max(m, std::abs(x));
    return m;
}

double maxdiff(const Field& a, const Field& b)
{
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double maxabs3(const V3& u)
{
    double m = 0;
    for (auto& c : u) m = std::max(m, maxabs(c));
    return m;
}

// Fourier sine coefficient of mode m along x (n2 = 1 grids).
double sin_coeff(const ReferenceChart& c, const Field& f, int m)
{
    Field X = c.node_x();
    double s = 0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * std::sin(2 * M_PI * m * X[k]);
    return 2 * s / double(f.size());
}

WallFlux streams(Vec2 vp, Vec2 vm, Vec2 hp, Vec2 hm)
{
    WallFlux w;
    w.v_plus = vp;
    w.v_minus = vm;
    w.h_plus = hp;
    w.h_minus = hm;
    return w;
}

// Curved state with vorticity, current, shear and fields on a square grid.
struct Curved {
    std::shared_ptr<Torus> t;
    ReferenceChart c;
    PlasmaParams pp;
    SimState s;
};

Curved curved_state(int n, int M)
{
    Curved C;
    C.t = std::make_shared<Torus>(n, n);
    C.c = ReferenceChart::flat(C.t, 0.0);
    C.pp.M = M;
    C.pp.rho_plus = 1;
    C.pp.rho_minus = 2;
    C.pp.alpha = 0.7;
    Field X = C.c.node_x(), Y = C.c.node_y(), g(C.c.size()), dg(C.c.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        g[k] = 0.03 * (std::sin(2 * M_PI * X[k]) + 0.5 * std::cos(2 * M_PI * (X[k] - Y[k])));
        dg[k] = 0.3 * std::cos(2 * M_PI * X[k]);
    }
    C.s = make_state(C.c, g, dg, C.pp, streams({0.4, 0.1}, {-0.4, 0}, {1, 0}, {0.2, 1}));
    EllipticOptions eo;
    eo.M = M;
    Elliptic e(C.c, g, eo);
    for (int i = 0; i < 2; ++i) {
        const BulkGrid& G = e.grid(side_of(i));
        for (std::size_t p = 0; p < G.size(); ++p) {
            const double x = G.X[0][p], z = G.X[2][p], d = i == 0 ? z + 1 : 1 - z;
            C.s.omega_star[i][1][p] = 0.5 * d * std::cos(2 * M_PI * x);
            C.s.j_star[i][1][p] = 0.3 * d * d * std::sin(2 * M_PI * x);
        }
    }
    return C;
}

} // namespace

TEST_CASE("plasma parameters")
{
    PlasmaParams p;
    p.rho_plus = 1;
    p.rho_minus = 3;
    CHECK(p.lambda() == 0.25);
    CHECK(p.c() == doctest::Approx(3.0 / 16).epsilon(1e-15));
    CHECK_NOTHROW(p.validate());
    p.alpha = 1.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.alpha = 0.5;
    p.rho_minus = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("weighted velocity")
{
    auto t = std::make_shared<Torus>(16, 16);
    auto c = ReferenceChart::flat(t, 0.0);
    Field X = c.node_x(), g(c.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.02 * std::sin(2 * M_PI * X[k]);
    EllipticOptions eo;
    eo.M = 8;
    Elliptic e(c, g, eo);
    V3 a = make_v3(c.size()), b = make_v3(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
        a[0][k] = 1 + X[k];
        a[2][k] = 0.3;
        b[0][k] = -1;
        b[1][k] = X[k];
    }
    // give b the normal trace of a
    const auto& n = e.surface().normal;
    for (std::size_t k = 0; k < c.size(); ++k) {
        double d = 0;
        for (int q = 0; q < 3; ++q) d += (a[q][k] - b[q][k]) * n[q][k];
        for (int q = 0; q < 3; ++q) b[q][k] += d * n[q][k];
    }
    V3 u = weighted_velocity(e, a, a, 0.3);
    CHECK(maxabs(u[0]) == doctest::Approx(maxabs(a[0])));
    V3 m = weighted_velocity(e, a, b, 0.5);
    for (int q = 0; q < 3; ++q)
        for (std::size_t k = 0; k < c.size(); ++k) CHECK(m[q][k] == doctest::Approx(0.5 * (a[q][k] + b[q][k])));
    // w = v+ - v- is tangent
    double wn = 0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        double d = 0;
        for (int q = 0; q < 3; ++q) d += (a[q][k] - b[q][k]) * n[q][k];
        wn = std::max(wn, std::abs(d));
    }
    CHECK(wn < 1e-14);
    b[2][3] += 1e-3;
    CHECK_THROWS_AS(weighted_velocity(e, a, b, 0.5), TraceMismatch);
}

TEST_CASE("curvature operators on a flat interface")
{
    auto t = std::make_shared<Torus>(16, 16);
    auto c = ReferenceChart::flat(t, 0.0);
    EllipticOptions eo;
    eo.M = 24;
    eo.rho_plus = 1;
    eo.rho_minus = 2;
    Elliptic e(c, Field(c.size(), 0.0), eo);
    Field X = c.node_x(), Y = c.node_y(), f(c.size()), one(c.size(), 1.0);
    CHECK(maxabs(operator_A_apply(e, one)) < 1e-10);
    const double kx = 2 * M_PI, ky = 4 * M_PI, k = std::hypot(kx, ky);
    for (std::size_t q = 0; q < f.size(); ++q) f[q] = std::cos(kx * X[q] + ky * Y[q]);
    // A = -Lap Ntilde, Ntilde = N N / (rho- N + rho+ N) at equal depths
    const double N = k * std::tanh(k), sym = k * k * N / 3.0;
    Field Af = operator_A_apply(e, f);
    for (std::size_t q = 0; q < f.size(); ++q) CHECK(Af[q] == doctest::Approx(sym * f[q]).epsilon(1e-7).scale(sym));

    std::array<Field, 2> J{Field(c.size(), 0.7), Field(c.size(), -0.4)};
    Field Rf = operator_R_apply(*t, J, f);
    const double jk = 0.7 * kx - 0.4 * ky;
    for (std::size_t q = 0; q < f.size(); ++q) CHECK(Rf[q] == doctest::Approx(-jk * jk * f[q]).scale(jk * jk));
    CHECK(maxabs(operator_R_apply(*t, J, one)) < 1e-12);
}

TEST_CASE("A is symmetric and positive in the Ntilde pairing on a curved interface")
{
    auto t = std::make_shared<Torus>(24, 24);
    auto c = ReferenceChart::flat(t, 0.0);
    Field X = c.node_x(), Y = c.node_y(), g(c.size()), f(c.size()), h(c.size());
    for (std::size_t q = 0; q < g.size(); ++q) {
        g[q] = 0.04 * std::sin(2 * M_PI * X[q]) * std::cos(2 * M_PI * Y[q]);
        f[q] = std::sin(2 * M_PI * (X[q] + Y[q])) + 0.3 * std::cos(4 * M_PI * X[q]);
        h[q] = std::cos(2 * M_PI * Y[q]) - 0.2 * std::sin(2 * M_PI * (X[q] - 2 * Y[q]));
    }
    EllipticOptions eo;
    eo.M = 24;
    Elliptic e(c, g, eo);
    const auto& sg = e.surface();
    auto pair = [&](const Field& a, const Field& b) {
        Field nb = e.ntilde(b), p(a.size());
        for (std::size_t q = 0; q < a.size(); ++q) p[q] = a[q] * nb[q];
        return surface_integral(*t, sg, p);
    };
    f = e.project(f);
    h = e.project(h);
    const double fh = pair(operator_A_apply(e, f), h), hf = pair(operator_A_apply(e, h), f);
    const double ff = pair(operator_A_apply(e, f), f), hh = pair(operator_A_apply(e, h), h);
    CHECK(ff > 0);
    CHECK(hh > 0);
    CHECK(std::abs(fh - hf) <= 1e-9 * std::sqrt(ff * hh));
}

TEST_CASE("remainder vanishes at rest and for a rigid tangential flow")
{
    auto t = std::make_shared<Torus>(16, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    PlasmaParams pp;
    pp.M = 12;
    pp.alpha = 0.5;
    Field z(c.size(), 0.0);
    for (auto flux : {WallFlux{}, streams({0.8, 0.2}, {0.8, 0.2}, {0, 0}, {0, 0})}) {
        SimState s = make_state(c, z, z, pp, flux);
        Evaluation ev = evaluate(c, s, pp);
        CHECK(maxabs(ev.R0) < 1e-10);
        CHECK(maxabs(ev.kappa_tt) < 1e-10);
    }
}

TEST_CASE("normal acceleration identity and agreement of both curvature routes")
{
    Curved C = curved_state(24, 20);
    const ReferenceChart& c = C.c;
    const PlasmaParams& pp = C.pp;
    Evaluation ev = evaluate(c, C.s, pp);
    const Elliptic& e = *ev.e;
    const auto& sg = e.surface();
    const std::size_t n = c.size();

    // -n.a = -alpha^2 Ntilde kappa + c II(w,w) - lambda II(h+,h+) - (1 - lambda) II(h-,h-) + r0
    Field Nk = e.ntilde(sg.kappa);
    V3 w = make_v3(n);
    for (int q = 0; q < 3; ++q)
        for (std::size_t k = 0; k < n; ++k) w[q][k] = ev.V[0][q][k] - ev.V[1][q][k];
    auto wc = chart_components(sg, w), hp = chart_components(sg, ev.H[0]), hm = chart_components(sg, ev.H[1]);
    Field IIw = ii_form(sg, wc, wc), IIp = ii_form(sg, hp, hp), IIm = ii_form(sg, hm, hm);
    const double lam = pp.lambda(), cc = pp.c(), al2 = pp.alpha * pp.alpha;
    double err = 0, scale = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double na = 0;
        for (int q = 0; q < 3; ++q) na += sg.normal[q][k] * ev.frak_a[q][k];
        const double rhs = -al2 * Nk[k] + cc * IIw[k] - lam * IIp[k] - (1 - lam) * IIm[k] + ev.r0[k];
        err = std::max(err, std::abs(-na - rhs));
        scale = std::max(scale, std::abs(na));
    }
    MESSAGE("normal acceleration identity: " << err << " of " << scale);
    CHECK(err <= 1e-7 * scale);

    // d_tt kappa_a from the curvature equation and from the second variation of K
    double d = maxdiff(ev.kappa_tt, ev.kappa_tt_chain), s = maxabs(ev.kappa_tt_chain);
    MESSAGE("curvature route vs chain route: " << d << " of " << s);
    CHECK(d <= 1e-8 * s);

    EvalOptions o1;
    o1.variant = Remainder::R1;
    Evaluation e1 = evaluate(c, C.s, pp, o1);
    CHECK(maxdiff(e1.kappa_tt, ev.kappa_tt) <= 1e-8 * s);
}

TEST_CASE("kappa acceleration: equilibrium, linear modes and the a^2 gamma channel")
{
    auto t = std::make_shared<Torus>(64, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    Field X = c.node_x(), z(c.size(), 0.0);

    SUBCASE("equilibrium")
    {
        PlasmaParams pp;
        pp.M = 12;
        pp.alpha = 0.9;
        SimState s = make_state(c, z, z, pp, streams({0.3, 0}, {-0.1, 0.2}, {1, 0}, {0, 1}));
        Evaluation ev = evaluate(c, s, pp);
        CHECK(maxabs(ev.kappa_tt) < 1e-10);
    }
    SUBCASE("linear modes")
    {
        struct Case {
            double alpha;
            WallFlux f;
        };
        const Case cases[] = {{0, streams({0.5, 0}, {-0.5, 0}, {0, 0}, {0, 0})},
                              {1, WallFlux{}},
                              {0.5, streams({0.3, 0}, {-0.3, 0}, {0.6, 0}, {0, 1})}};
        for (const auto& cs : cases)
            for (int m : {1, 3}) {
                PlasmaParams pp;
                pp.M = 16;
                pp.alpha = cs.alpha;
                Field g(c.size());
                for (std::size_t k = 0; k < g.size(); ++k) g[k] = 1e-5 * std::sin(2 * M_PI * m * X[k]);
                SimState s = make_state(c, g, z, pp, cs.f);
                Evaluation ev = evaluate(c, s, pp);
                const double k = 2 * M_PI * m, N = k * std::tanh(k);
                const double w = cs.f.v_plus[0] - cs.f.v_minus[0], hp = cs.f.h_plus[0], hm = cs.f.h_minus[0];
                const double om2 = cs.alpha * cs.alpha * k * k * N / 2 - 0.25 * w * w * k * k +
                                   0.5 * (hp * hp + hm * hm) * k * k;
                const double measured = -sin_coeff(c, ev.kappa_tt, m) / sin_coeff(c, s.kappa_a, m);
                CHECK(measured == doctest::Approx(om2).epsilon(0.05));
                CHECK(measured == doctest::Approx(om2).epsilon(1e-4));
            }
    }
    SUBCASE("a-scaling")
    {
        Field g(c.size()), dg(c.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] = 0.02 * std::sin(2 * M_PI * X[k]) + 0.01 * std::cos(4 * M_PI * X[k]);
            dg[k] = 0.1 * std::cos(2 * M_PI * X[k]);
        }
        PlasmaParams p1;
        p1.M = 16;
        p1.alpha = 0.6;
        PlasmaParams p2 = p1;
        p2.a = 2 * p1.a;
        WallFlux f = streams({0.3, 0}, {-0.3, 0}, {0.5, 0}, {0, 1});
        Evaluation e1 = evaluate(c, make_state(c, g, dg, p1, f), p1);
        Evaluation e2 = evaluate(c, make_state(c, g, dg, p2, f), p2);
        // kappa_tt - a^2 d_tt gamma is the curvature part and does not see a
        Field r1(c.size()), r2(c.size());
        for (std::size_t k = 0; k < r1.size(); ++k) {
            r1[k] = e1.kappa_tt[k] - p1.a * p1.a * e1.dtt_gamma[k];
            r2[k] = e2.kappa_tt[k] - p2.a * p2.a * e2.dtt_gamma[k];
        }
        CHECK(maxdiff(e1.dtt_gamma, e2.dtt_gamma) <= 1e-9 * maxabs(e1.dtt_gamma));
        CHECK(maxdiff(r1, r2) <= 1e-8 * maxabs(r1));
    }
}

TEST_CASE("time step keeps equilibria and respects the stability limit")
{
    auto t = std::make_shared<Torus>(16, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    PlasmaParams pp;
    pp.M = 8;
    pp.alpha = 1;
    Field z(c.size(), 0.0);
    SimState s0 = make_state(c, z, z, pp, streams({0.2, 0.1}, {-0.2, 0.3}, {1, 0}, {0, 1}));
    Evaluation ev = evaluate(c, s0, pp);
    const double lim = dt_limit(ev, pp);
    CHECK_THROWS_AS(time_step(c, s0, pp, 2 * lim), CFLViolation);
    SimState s = s0;
    for (int i = 0; i < 100; ++i) s = time_step(c, s, pp, lim);
    CHECK(maxabs(s.kappa_a) < 1e-9);
    CHECK(maxabs(s.kappa_a_dot) < 1e-9);
    CHECK(std::abs(s.flux.v_plus[0] - 0.2) < 1e-12);
    CHECK(std::abs(s.flux.h_minus[1] - 1) < 1e-12);
    CHECK(s.t == doctest::Approx(100 * lim));
}

TEST_CASE("RK4 order on a linear capillary wave")
{
    auto t = std::make_shared<Torus>(16, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    PlasmaParams pp;
    pp.M = 12;
    pp.alpha = 1;
    pp.cfl = 1;
    Field X = c.node_x(), g(c.size()), z(c.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 1e-6 * std::sin(2 * M_PI * X[k]);
    SimState s0 = make_state(c, g, z, pp, WallFlux{});
    const double k = 2 * M_PI, om = std::sqrt(k * k * k * std::tanh(k) / 2);
    // half a period forward and back; the error of the round trip is O(dt^4)
    auto roundtrip = [&](int steps) {
        const double T = M_PI / om, dt = T / steps;
        SimState s = s0;
        for (int i = 0; i < steps; ++i) s = time_step(c, s, pp, dt);
        for (auto& v : s.kappa_a_dot) v = -v;
        for (int i = 0; i < steps; ++i) s = time_step(c, s, pp, dt);
        return maxdiff(s.kappa_a, s0.kappa_a) / maxabs(s0.kappa_a);
    };
    const double e1 = roundtrip(64), e2 = roundtrip(128);
    MESSAGE("round trip errors " << e1 << ", " << e2);
    CHECK(e1 / e2 > 12);
}

TEST_CASE("transport: uniform advection and the Eulerian cross-check")
{
    auto t = std::make_shared<Torus>(32, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    EllipticOptions eo;
    eo.M = 12;
    Field z(c.size(), 0.0);
    Elliptic e(c, z, eo);
    const std::size_t N = e.grid(Side::plus).size();
    std::array<V3, 2> om, j, v, h;
    for (int i = 0; i < 2; ++i) {
        const BulkGrid& g = e.grid(side_of(i));
        om[i] = make_v3(N);
        j[i] = make_v3(N);
        v[i] = make_v3(N);
        h[i] = make_v3(N);
        for (std::size_t p = 0; p < N; ++p) {
            const double x = g.X[0][p], zz = g.X[2][p], d = i == 0 ? zz + 1 : 1 - zz;
            om[i][1][p] = std::sin(2 * M_PI * x) * d * d;
            v[i][0][p] = 0.7;
        }
    }
    SUBCASE("pure advection")
    {
        const double dt = 0.01;
        auto r = transport_step(e, om, j, v, h, z, dt);
        double err = 0;
        for (int i = 0; i < 2; ++i) {
            const BulkGrid& g = e.grid(side_of(i));
            for (std::size_t p = 0; p < N; ++p) {
                const double x = g.X[0][p], zz = g.X[2][p], d = i == 0 ? zz + 1 : 1 - zz;
                err = std::max(err, std::abs(r.first[i][1][p] - std::sin(2 * M_PI * (x - 0.7 * dt)) * d * d));
            }
            CHECK(maxabs3(r.second[i]) < 1e-12);
            CHECK(std::abs(wall_integral(g, r.first[i][2])) < 1e-12);
        }
        CHECK(err < 1e-4);  // cubic interpolation at 32 nodes
    }
    SUBCASE("stretching and source against the Eulerian rate")
    {
        // v = h with a sheared profile: eta = omega + j is carried by v - h = 0
        for (int i = 0; i < 2; ++i) {
            const BulkGrid& g = e.grid(side_of(i));
            for (std::size_t p = 0; p < N; ++p) {
                const double x = g.X[0][p], zz = g.X[2][p], d = i == 0 ? zz + 1 : 1 - zz;
                v[i][0][p] = 0.5 + 0.2 * d * d;
                v[i][1][p] = 0.3 * std::cos(2 * M_PI * x) * d;
                h[i][0][p] = v[i][0][p];
                h[i][1][p] = v[i][1][p];
                j[i][1][p] = 0.2 * std::cos(2 * M_PI * x) * d * d;
            }
            j[i] = leray_project(e, side_of(i), j[i]);
        }
        auto err_for = [&](double dt) {
            auto r = transport_step(e, om, j, v, h, z, dt);
            BulkRates R = bulk_rates(e, om, j, v, h, z);
            double m = 0;
            for (int i = 0; i < 2; ++i)
                for (int q = 0; q < 3; ++q)
                    for (int l = 1; l < e.grid(side_of(i)).M; ++l)
                        for (std::size_t k = 0; k < c.size(); ++k) {
                            const std::size_t p = l * c.size() + k;
                            m = std::max(m, std::abs(r.first[i][q][p] - om[i][q][p] - dt * R.omega_dot[i][q][p]));
                            m = std::max(m, std::abs(r.second[i][q][p] - j[i][q][p] - dt * R.j_dot[i][q][p]));
                        }
            return m;
        };
        const double e1 = err_for(2e-3), e2 = err_for(1e-3);
        MESSAGE("one-step differences " << e1 << ", " << e2);
        CHECK(e1 / e2 > 3);
    }
    SUBCASE("a foot outside the slab is refused")
    {
        for (int i = 0; i < 2; ++i)
            for (auto& x : v[i][2]) x = 50;
        CHECK_THROWS_AS(transport_step(e, om, j, v, h, z, 0.1), CFLViolation);
    }
}

TEST_CASE("wall flux rates")
{
    auto t = std::make_shared<Torus>(16, 16);
    auto c = ReferenceChart::flat(t, 0.0);
    EllipticOptions eo;
    eo.M = 8;
    Field z(c.size(), 0.0);
    Elliptic e(c, z, eo);
    const std::size_t N = e.grid(Side::plus).size();
    std::array<V3, 2> zero{make_v3(N), make_v3(N)}, v = zero, h = zero;
    // uniform streams: nothing moves
    for (int i = 0; i < 2; ++i) {
        for (auto& x : v[i][0]) x = 0.3;
        for (auto& x : h[i][1]) x = 1;
    }
    BulkRates R = bulk_rates(e, zero, zero, v, h, z);
    CHECK(std::abs(R.flux_dot.v_plus[0]) + std::abs(R.flux_dot.h_minus[1]) < 1e-14);
    // manufactured shear (cos 2pi y, sin 2pi y, -2pi (z+1) cos 2pi y) in the
    // lower slab: the x-rate is the wall average of sin^2, times 2 pi
    const BulkGrid& g = e.grid(Side::plus);
    for (std::size_t p = 0; p < N; ++p) {
        const double y = g.X[1][p], zz = g.X[2][p];
        v[0][0][p] = std::cos(2 * M_PI * y);
        v[0][1][p] = std::sin(2 * M_PI * y);
        v[0][2][p] = -2 * M_PI * (zz + 1) * std::cos(2 * M_PI * y);
    }
    R = bulk_rates(e, zero, zero, v, zero, z);
    CHECK(R.flux_dot.v_plus[0] == doctest::Approx(M_PI).epsilon(1e-12));
    CHECK(std::abs(R.flux_dot.v_plus[1]) < 1e-12);
    CHECK(std::abs(R.flux_dot.h_plus[0]) < 1e-12);
}

TEST_CASE("energies")
{
    auto t = std::make_shared<Torus>(16, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    PlasmaParams pp;
    pp.M = 8;
    Field z(c.size(), 0.0);
    SimState s = make_state(c, z, z, pp, WallFlux{});
    Evaluation ev = evaluate(c, s, pp);
    Energies E = energy_functionals(ev, s, pp);
    CHECK(E.E0 == 0);
    CHECK(E.E1 == 0);
    CHECK(E.E2 == 0);
    CHECK(E.E3 == 0);
    CHECK(std::abs(E.El) < 1e-20);
    pp.alpha = 1;
    E = energy_functionals(ev, s, pp);
    CHECK(E.E0 == doctest::Approx(1.0).epsilon(1e-14));
    // uniform streams: kinetic energy rho |v|^2 / 2 over each unit-volume slab
    pp.rho_minus = 3;
    s = make_state(c, z, z, pp, streams({0.5, 0}, {0, 1}, {0, 0}, {0, 0}));
    ev = evaluate(c, s, pp);
    E = energy_functionals(ev, s, pp);
    CHECK(E.kinetic == doctest::Approx(0.5 * 0.25 + 0.5 * 3).epsilon(1e-12));
    CHECK(E.E3 == doctest::Approx(1.25));
}

TEST_CASE("W residual: equilibrium, smooth run and fault injection")
{
    auto t = std::make_shared<Torus>(32, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    PlasmaParams pp;
    pp.M = 16;
    pp.alpha = 1;
    Field X = c.node_x(), z(c.size(), 0.0), g(c.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.01 * std::sin(2 * M_PI * X[k]);
    const WallFlux f = streams({0.25, 0}, {-0.25, 0}, {1, 0}, {0, 1});

    SUBCASE("equilibrium")
    {
        SimState s = make_state(c, z, z, pp, f);
        WMonitor W;
        for (int i = 0; i < 5; ++i) {
            Evaluation ev = evaluate(c, s, pp);
            W.push(ev, s.t);
            if (i < 4) s = time_step(c, s, pp, 1e-3, nullptr, {}, &ev);
        }
        REQUIRE(W.ready());
        CHECK(W.residual() <= 1e-8);
    }
    SUBCASE("smooth run and fault injection")
    {
        auto run = [&](double dt, int steps, bool corrupt) {
            SimState s = make_state(c, g, z, pp, f);
            WMonitor W;
            Evaluation ev = evaluate(c, s, pp);
            W.push(ev, s.t);
            for (int i = 0; i < steps; ++i) {
                s = time_step(c, s, pp, dt, nullptr, {}, &ev);
                if (corrupt && i == steps - 1) {
                    // vorticity appearing from nowhere breaks the dynamics
                    const BulkGrid& gp = ev.e->grid(Side::plus);
                    for (std::size_t p = 0; p < gp.size(); ++p) s.omega_star[0][1][p] += 0.1 * std::cos(2 * M_PI * gp.X[0][p]);
                }
                ev = evaluate(c, s, pp);
                W.push(ev, s.t);
            }
            return W.residual();
        };
        const double w1 = run(4e-4, 8, false);
        MESSAGE("W residual " << w1);
        CHECK(w1 <= 1e-6);
        CHECK(run(4e-4, 8, true) > 100 * w1);
    }
}

TEST_CASE("Picard refinement")
{
    auto t = std::make_shared<Torus>(16, 1);
    auto c = ReferenceChart::flat(t, 0.0);
    PlasmaParams pp;
    pp.M = 12;
    pp.alpha = 1;
    pp.tol_picard = 1e-12;
    Field X = c.node_x(), g(c.size()), z(c.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.01 * std::sin(2 * M_PI * X[k]);
    SimState s = make_state(c, g, z, pp, streams({0.2, 0}, {-0.2, 0}, {0.8, 0}, {0, 1}));
    Evaluation ev = evaluate(c, s, pp);
    const double dt = dt_limit(ev, pp);

    SimState euler = picard_refine(c, s, pp, dt, 1);
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(euler.kappa_a[k] == doctest::Approx(s.kappa_a[k] + dt * s.kappa_a_dot[k]).epsilon(1e-14));
        CHECK(euler.kappa_a_dot[k] == doctest::Approx(s.kappa_a_dot[k] + dt * ev.kappa_tt[k]).scale(1e-6));
    }
    auto diff = [&](double h) {
        StepInfo info;
        SimState p = picard_refine(c, s, pp, h, 40, &info);
        CHECK(info.contraction < 1);
        CHECK(info.iterations < 40);
        SimState r = time_step(c, s, pp, h);
        return maxdiff(p.kappa_a, r.kappa_a) + h * maxdiff(p.kappa_a_dot, r.kappa_a_dot);
    };
    const double d1 = diff(dt), d2 = diff(dt / 2);
    MESSAGE("Picard vs RK4 " << d1 << ", " << d2);
    CHECK(d1 / d2 > 4);
}
