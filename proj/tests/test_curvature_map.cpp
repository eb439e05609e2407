#include "doctest.h"

#include "cvsheet/curvature_map.hpp"
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

Field diff(const Field& a, const Field& b)
{
    Field d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

Field sincos(const ReferenceChart& c, double amp)
{
    Field X = c.node_x(), Y = c.node_y(), f(c.size());
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = amp * std::sin(2 * M_PI * X[k]) * std::cos(2 * M_PI * Y[k]);
    return f;
}

} // namespace

TEST_CASE("curvature map on trivial data")
{
    auto t = std::make_shared<Torus>(16, 16);
    auto c = ReferenceChart::flat(t, 0.0);
    const double a = 3.0;
    Field zero(c.size(), 0.0);
    CHECK(maxabs(invert_K(c, zero, a, zero)) < 1e-14);
    Field lift = forward_K(c, Field(c.size(), 0.1), a);
    for (double v : lift) CHECK(v == doctest::Approx(a * a * 0.1));
    Field g = invert_K(c, Field(c.size(), a * a * 0.1), a, zero);
    for (double v : g) CHECK(v == doctest::Approx(0.1));
}

TEST_CASE("linearized curvature map has symbol |k|^2 + a^2")
{
    auto t = std::make_shared<Torus>(32, 8);
    auto c = ReferenceChart::flat(t, 0.0);
    const double a = 2.0, eps = 1e-6;
    Field X = c.node_x(), g(c.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = eps * std::sin(2 * M_PI * X[i]);
    Field K = forward_K(c, g, a);
    double err = 0;
    for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(K[i] - (4 * M_PI * M_PI + a * a) * g[i]));
    CHECK(err < 1e-9 * eps * (4 * M_PI * M_PI + a * a));
}

TEST_CASE("forward and inverse curvature map round trip")
{
    auto t = std::make_shared<Torus>(32, 32);
    auto c = ReferenceChart::flat(t, 0.0);
    const double a = 2.0;
    Field g = sincos(c, 0.05);
    Field K = forward_K(c, g, a);
    InvertReport rep;
    Field back = invert_K(c, K, a, Field(c.size(), 0.0), {}, &rep);
    CHECK(maxabs(diff(back, g)) < 1e-8);
    CHECK(rep.contraction < 1);

    InvertOptions newton;
    newton.newton = true;
    InvertReport nrep;
    Field nb = invert_K(c, K, a, Field(c.size(), 0.0), newton, &nrep);
    CHECK(maxabs(diff(nb, g)) < 1e-8);
    CHECK(nrep.iterations < rep.iterations);

    // a different starting point lands on the same interface
    Field other = invert_K(c, K, a, sincos(c, -0.03));
    CHECK(maxabs(diff(other, g)) < 1e-8);
}

TEST_CASE("single-mode inversion at large a")
{
    auto t = std::make_shared<Torus>(8, 32);
    auto c = ReferenceChart::flat(t, 0.0);
    const double a = 10.0, delta = 0.01;
    Field Y = c.node_y(), ka(c.size());
    for (std::size_t i = 0; i < ka.size(); ++i) ka[i] = delta * std::sin(2 * M_PI * Y[i]);
    Field g = invert_K(c, ka, a, Field(c.size(), 0.0));
    // first-order amplitude with a cubic correction from the curvature nonlinearity
    double lin = delta / (4 * M_PI * M_PI + a * a);
    double amp = 0;
    for (std::size_t i = 0; i < g.size(); ++i) amp = std::max(amp, std::abs(g[i]));
    CHECK(std::abs(amp - lin) < 1e-3 * lin);
    CHECK(maxabs(diff(forward_K(c, g, a), ka)) < 1e-10 * a * a);
}

TEST_CASE("curvature map derivative matches finite differences")
{
    auto t = std::make_shared<Torus>(24, 24);
    auto c = ReferenceChart::flat(t, 0.05);
    const double a = 1.5, h = 1e-5;
    Field g = sincos(c, 0.06), X = c.node_x(), Y = c.node_y(), q(c.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::cos(2 * M_PI * (X[i] + 2 * Y[i]));
    Field gp = g, gm = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
        gp[i] += h * q[i];
        gm[i] -= h * q[i];
    }
    Field fd = diff(forward_K(c, gp, a), forward_K(c, gm, a));
    for (double& v : fd) v /= 2 * h;
    Field d = dK_apply(c, g, q, a);
    CHECK(maxabs(diff(fd, d)) < 1e-6 * maxabs(d));
    Field back = dK_solve(c, g, d, a);
    CHECK(maxabs(diff(back, q)) < 1e-9);
}

TEST_CASE("inversion failures are reported")
{
    auto t = std::make_shared<Torus>(16, 16);
    auto c = ReferenceChart::flat(t, 0.0);
    Field g = sincos(c, 0.05);
    Field K = forward_K(c, g, 2.0);
    InvertOptions opt;
    opt.max_iter = 1;
    CHECK_THROWS_AS(invert_K(c, K, 2.0, Field(c.size(), 0.0), opt), NoConvergence);
    CHECK_THROWS_AS(invert_K(c, K, 0.5, Field(c.size(), 0.0)), NoConvergence);
}
