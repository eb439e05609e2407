#include "doctest.h"

#include "cvsheet/elliptic.hpp"
#include "cvsheet/errors.hpp"

#include <cmath>

using namespace cvsheet;

namespace {

double maxabs(const Field& f)
{
    double m = 0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

Field cos2pix(const ReferenceChart& c)
{
    Field X = c.node_x(), f(c.size());
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = std::cos(2 * M_PI * X[k]);
    return f;
}

Field wavy(const ReferenceChart& c, double amp)
{
    Field X = c.node_x(), Y = c.node_y(), f(c.size());
    for (std::size_t k = 0; k < f.size(); ++k)
        f[k] = amp * (std::sin(2 * M_PI * X[k]) + 0.5 * std::cos(2 * M_PI * (X[k] + Y[k])));
    return f;
}

double dS_dot(const Elliptic& e, const Field& a, const Field& b)
{
    Field p(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) p[k] = a[k] * b[k];
    return surface_integral(e.torus(), e.surface(), p);
}

} // namespace

TEST_CASE("harmonic coordinates of a flat and a lifted interface")
{
    auto t = std::make_shared<Torus>(16, 8);
    auto c = ReferenceChart::flat(t, 0.0);
    BulkPair g = harmonic_coordinates(c, Field(c.size(), 0.0), 12);
    for (Side s : {Side::plus, Side::minus}) {
        const BulkGrid& b = g[s];
        for (std::size_t i = 0; i < b.size(); ++i) {
            CHECK(std::abs(b.J[i] - 1) < 1e-13);
            CHECK(std::abs(b.X[2][i] - b.zlev[i / b.n]) < 1e-13);
        }
    }
    const double lift = 0.2;
    BulkPair h = harmonic_coordinates(c, Field(c.size(), lift), 12);
    const BulkGrid& p = h.plus;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double z = p.zlev[i / p.n];
        CHECK(p.X[2][i] == doctest::Approx(z + lift * (z + 1)));
        CHECK(p.J[i] == doctest::Approx(1 + lift));
    }
    CHECK(h.minus.J[0] == doctest::Approx(1 - lift));
}

TEST_CASE("folded harmonic coordinates are reported")
{
    auto t = std::make_shared<Torus>(32, 4);
    auto c = ReferenceChart::flat(t, 0.0);
    Field g(c.size());
    Field X = c.node_x();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.6 * std::sin(2 * M_PI * 8 * X[k]);
    c.closeness_delta = 100;
    CHECK_THROWS_AS(harmonic_coordinates(c, g, 16), FoldedMap);
}

TEST_CASE("harmonic extension matches the cosh profile on a flat slab")
{
    auto t = std::make_shared<Torus>(16, 4);
    auto c = ReferenceChart::flat(t, 0.0);
    Elliptic e(c, Field(c.size(), 0.0), {});
    Field f = cos2pix(c);
    Field u = e.extend(Side::plus, f);
    const BulkGrid& g = e.grid(Side::plus);
    const double k = 2 * M_PI;
    double err = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double z = g.zlev[i / g.n];
        err = std::max(err, std::abs(u[i] - std::cosh(k * (z + 1)) / std::cosh(k) * f[i % g.n]));
    }
    CHECK(err < 1e-8);
    Field one = e.extend(Side::minus, Field(c.size(), 1.0));
    for (double v : one) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("flat Dirichlet-Neumann symbols")
{
    auto t = std::make_shared<Torus>(16, 4);
    auto c = ReferenceChart::flat(t, 0.0);
    const double k = 2 * M_PI;
    Field f = cos2pix(c);
    Elliptic e(c, Field(c.size(), 0.0), {});
    Field np = e.dn(Side::plus, f), nm = e.dn(Side::minus, f), nt = e.ntilde(f);
    double ep = 0, em = 0, et = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        ep = std::max(ep, std::abs(np[i] - k * std::tanh(k) * f[i]));
        em = std::max(em, std::abs(nm[i] - k * std::tanh(k) * f[i]));
        et = std::max(et, std::abs(nt[i] - 0.5 * k * std::tanh(k) * f[i]));
    }
    CHECK(ep < 1e-6);
    CHECK(em < 1e-6);
    CHECK(et < 1e-6);

    EllipticOptions closed;
    closed.mode = WallMode::closed_interior;
    Elliptic ec(c, Field(c.size(), 0.0), closed);
    Field nc = ec.dn(Side::plus, f);
    double ec_err = 0;
    for (std::size_t i = 0; i < f.size(); ++i) ec_err = std::max(ec_err, std::abs(nc[i] - k / std::tanh(k) * f[i]));
    CHECK(ec_err < 1e-6);
}

TEST_CASE("curved interface DN against exact harmonic functions")
{
    auto t = std::make_shared<Torus>(48, 4);
    auto c = ReferenceChart::flat(t, 0.0);
    Field X0 = c.node_x(), gam(c.size());
    for (std::size_t i = 0; i < gam.size(); ++i) gam[i] = 0.05 * std::sin(2 * M_PI * X0[i]);
    const double k = 2 * M_PI;
    EllipticOptions opt;
    opt.M = 24;
    opt.mode = WallMode::closed_interior;
    Elliptic e(c, gam, opt);
    const SurfaceGeometry& s = e.surface();
    // plus: sinh(k(z+1)) cos(kx), zero on the wall at z = -1
    // minus: cosh(k(1-z)) cos(kx), Neumann on the wall at z = 1
    Field fp(c.size()), fm(c.size()), np(c.size()), nm(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        double x = s.phi[0][i], z = s.phi[2][i];
        double nx = s.normal[0][i], nz = s.normal[2][i];
        fp[i] = std::sinh(k * (z + 1)) * std::cos(k * x);
        np[i] = nx * (-k * std::sinh(k * (z + 1)) * std::sin(k * x)) + nz * k * std::cosh(k * (z + 1)) * std::cos(k * x);
        fm[i] = std::cosh(k * (1 - z)) * std::cos(k * x);
        nm[i] = -(nx * (-k * std::cosh(k * (1 - z)) * std::sin(k * x)) - nz * k * std::sinh(k * (1 - z)) * std::cos(k * x));
    }
    Field ap = e.dn(Side::plus, fp), am = e.dn(Side::minus, fm);
    double ep = 0, em = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        ep = std::max(ep, std::abs(ap[i] - np[i]));
        em = std::max(em, std::abs(am[i] - nm[i]));
    }
    CHECK(ep / maxabs(np) < 1e-8);
    CHECK(em / maxabs(nm) < 1e-8);
}

TEST_CASE("DN operators on a curved interface: symmetry, sign, kernel, inverse")
{
    auto t = std::make_shared<Torus>(24, 24);
    auto c = ReferenceChart::flat(t, 0.1);
    EllipticOptions opt;
    opt.M = 24;
    opt.rho_plus = 1.0;
    opt.rho_minus = 0.5;
    Elliptic e(c, wavy(c, 0.04), opt);
    Field X = c.node_x(), Y = c.node_y(), f(c.size()), h(c.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = std::cos(2 * M_PI * X[i]) + 0.3 * std::sin(4 * M_PI * Y[i]);
        h[i] = std::sin(2 * M_PI * (X[i] - Y[i])) + 0.2;
    }
    for (Side sd : {Side::plus, Side::minus}) {
        Field Nf = e.dn(sd, f), Nh = e.dn(sd, h);
        double a = dS_dot(e, h, Nf), b = dS_dot(e, f, Nh);
        CHECK(std::abs(a - b) < 1e-7 * std::abs(a));
        CHECK(dS_dot(e, f, Nf) > 0);
        CHECK(std::abs(surface_integral(e.torus(), e.surface(), Nf)) < 1e-9);
        CHECK(maxabs(e.dn(sd, Field(c.size(), 3.0))) < 1e-9);
        Field r = e.dn_inverse(sd, Nf), pf = e.project(f);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= pf[i];
        CHECK(maxabs(r) < 1e-8);
    }
    Field Nb = e.nbar(f);
    Field r = e.nbar_inverse(Nb), pf = e.project(f);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= pf[i];
    CHECK(maxabs(r) < 1e-8);
    Field Nt = e.ntilde(f), Nth = e.ntilde(h);
    CHECK(std::abs(dS_dot(e, h, Nt) - dS_dot(e, f, Nth)) < 1e-8 * std::abs(dS_dot(e, h, Nt)) + 1e-9);
    CHECK(dS_dot(e, f, Nt) > 0);
}

TEST_CASE("Dirichlet Poisson solve on a flat slab")
{
    auto t = std::make_shared<Torus>(16, 4);
    auto c = ReferenceChart::flat(t, 0.0);
    Elliptic e(c, Field(c.size(), 0.0), {});
    const BulkGrid& g = e.grid(Side::plus);
    const double k = 2 * M_PI, q = M_PI / 2;
    Field X = c.node_x(), f(g.size()), exact(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double z = g.zlev[i / g.n];
        exact[i] = std::sin(q * z) * std::cos(k * X[i % g.n]);
        f[i] = (q * q + k * k) * exact[i];
    }
    Field u = e.dirichlet_poisson(Side::plus, f);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= exact[i];
    CHECK(maxabs(u) < 1e-9);
}

TEST_CASE("parallel and serial mapped operators agree")
{
    auto t = std::make_shared<Torus>(16, 16);
    auto c = ReferenceChart::flat(t, 0.0);
    BulkPair g = harmonic_coordinates(c, wavy(c, 0.05), 10);
    Field u(g.plus.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::sin(0.37 * double(i)) + 0.1 * std::cos(1.3 * double(i));
    Field a, b;
    apply_L(g.plus, u, a);
    apply_L_serial(g.plus, u, b);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    CHECK(maxabs(a) < 1e-10 * maxabs(b));
}
