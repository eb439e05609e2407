#include "cvsheet/fields.hpp"

#include "cvsheet/errors.hpp"

#include <cmath>
#include <sstream>

namespace cvsheet {

V3 curl_x(const BulkGrid& g, const V3& u)
{
    auto D = jacobian_x(g, u);
    V3 c = make_v3(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        c[0][i] = D[7][i] - D[5][i];
        c[1][i] = D[2][i] - D[6][i];
        c[2][i] = D[3][i] - D[1][i];
    }
    return c;
}

Field div_x(const BulkGrid& g, const V3& u)
{
    // (1/J) div_y of the Piola transform keeps this exact for constants
    Field d = div_y(g, piola(g, u));
    for (std::size_t i = 0; i < d.size(); ++i) d[i] /= g.J[i];
    return d;
}

V3 trace(const BulkGrid& g, const V3& u, int l)
{
    return {level(g, u[0], l), level(g, u[1], l), level(g, u[2], l)};
}

double slab_integral(const BulkGrid& g, const Field& f)
{
    const double dA = g.torus->cell_area(), jz = 1.0 / std::abs(g.sz);
    double s = 0;
    for (int l = 0; l <= g.M; ++l) {
        double row = 0;
        for (std::size_t k = 0; k < g.n; ++k) {
            std::size_t i = l * g.n + k;
            row += f[i] * g.J[i];
        }
        s += g.cheb->w[l] * jz * row;
    }
    return s * dA;
}

double wall_integral(const BulkGrid& g, const Field& f)
{
    double s = 0;
    for (std::size_t k = 0; k < g.n; ++k) s += f[g.M * g.n + k];
    return s * g.torus->cell_area();
}

Field normal_trace(const Elliptic& e, const V3& u)
{
    const auto& n = e.surface().normal;
    Field t(u[0].size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = u[0][k] * n[0][k] + u[1][k] * n[1][k] + u[2][k] * n[2][k];
    return t;
}

namespace {

// -Lap_y Psi = rhs on the flat slab; component c of a vector potential.
Field flat_potential(const BulkGrid& g, const Field& rhs, bool neumann)
{
    FlatModeSolver S(g, neumann ? BC::conormal : BC::dirichlet, neumann ? BC::conormal : BC::dirichlet, neumann);
    Field in(rhs.size() + (neumann ? 1 : 0), 0.0), out;
    for (std::size_t i = g.n; i < std::size_t(g.M) * g.n; ++i) in[i] = rhs[i];
    S.apply(in, out);
    out.resize(rhs.size());
    return out;
}

V3 curl_y(const BulkGrid& g, const V3& P)
{
    V3 G0 = grad_y(g, P[0]), G1 = grad_y(g, P[1]), G2 = grad_y(g, P[2]);
    V3 c = make_v3(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        c[0][i] = G2[1][i] - G1[2][i];
        c[1][i] = G0[2][i] - G2[0][i];
        c[2][i] = G1[0][i] - G0[1][i];
    }
    return c;
}

double l1_wall(const BulkGrid& g, const Field& f)
{
    double s = 0;
    for (std::size_t k = 0; k < g.n; ++k) s += std::abs(f[g.M * g.n + k]);
    return s * g.torus->cell_area();
}

} // namespace

V3 solve_div_curl(const Elliptic& e, Side s, const V3& curl, const Field& div, const Field& normal_bc, Vec2 flux)
{
    const BulkGrid& g = e.grid(s);
    const std::size_t N = g.size(), n = g.n;
    const double sgn = s == Side::plus ? 1.0 : -1.0;

    Field Jd(N);
    Field absJd(N);
    for (std::size_t i = 0; i < N; ++i) {
        Jd[i] = g.J[i] * div[i];
        absJd[i] = std::abs(div[i]);
    }
    {
        double lhs = slab_integral(g, div), rhs = sgn * surface_integral(e.torus(), e.surface(), normal_bc);
        Field an(normal_bc);
        for (auto& v : an) v = std::abs(v);
        double scale = slab_integral(g, absJd) + surface_integral(e.torus(), e.surface(), an);
        if (std::abs(lhs - rhs) > 1e-8 * scale + 1e-14) {
            std::ostringstream os;
            os << "bulk divergence " << lhs << " does not match boundary flux " << rhs;
            throw CompatibilityViolation(os.str());
        }
        double w = wall_integral(g, curl[2]);
        if (std::abs(w) > 1e-6 * l1_wall(g, curl[2]) + 1e-12) {
            std::ostringstream os;
            os << "wall integral of the normal curl is " << w;
            throw CompatibilityViolation(os.str());
        }
    }

    V3 Om = piola(g, curl);
    V3 Psi;
    for (int c = 0; c < 3; ++c) Psi[c] = flat_potential(g, Om[c], c == 2);
    V3 A = curl_y(g, Psi);
    for (int c = 0; c < 2; ++c) {
        double cc = (flux[c] - wall_integral(g, A[c])) / (g.torus->cell_area() * double(n));
        for (auto& v : A[c]) v += cc;
    }

    // K A carries the normal flux; phi fixes divergence and normal traces
    V3 KA = make_v3(N);
    for (std::size_t i = 0; i < N; ++i) {
        KA[0][i] = g.K[0][i] * A[0][i] + g.K[1][i] * A[1][i] + g.K[2][i] * A[2][i];
        KA[1][i] = g.K[1][i] * A[0][i] + g.K[3][i] * A[1][i] + g.K[4][i] * A[2][i];
        KA[2][i] = g.K[2][i] * A[0][i] + g.K[4][i] * A[1][i] + g.K[5][i] * A[2][i];
    }
    Field rhs = div_y(g, KA);
    for (std::size_t i = 0; i < N; ++i) rhs[i] -= Jd[i];
    Field top(n), bot(n);
    for (std::size_t k = 0; k < n; ++k) {
        top[k] = g.sqrtg[k] * normal_bc[k] - KA[2][k];
        bot[k] = -KA[2][g.M * n + k];
    }
    Field phi = e.solver(s, BC::conormal, BC::conormal).solve(rhs, top, bot);
    V3 G = grad_y(g, phi);
    V3 u = make_v3(N);
    for (std::size_t i = 0; i < N; ++i) {
        double b0 = A[0][i] + G[0][i], b1 = A[1][i] + G[1][i], b2 = A[2][i] + G[2][i];
        for (int j = 0; j < 3; ++j) u[j][i] = g.DXi[j][i] * b0 + g.DXi[3 + j][i] * b1 + g.DXi[6 + j][i] * b2;
    }
    return u;
}

V3 leray_project(const Elliptic& e, Side s, const V3& Y)
{
    const BulkGrid& g = e.grid(s);
    Field rhs = div_y(g, piola(g, Y));
    for (auto& v : rhs) v = -v;
    Field phi = e.solver(s, BC::dirichlet, BC::conormal).solve(rhs, {}, {});
    V3 G = grad_x(g, phi), out = Y;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < g.size(); ++i) out[c][i] -= G[c][i];
    return out;
}

Field kinematic_theta(const Elliptic& e, const Field& dgamma_dt)
{
    const auto& n = e.surface().normal;
    const auto& nu = e.chart().nu;
    Field t(dgamma_dt.size());
    for (std::size_t k = 0; k < t.size(); ++k)
        t[k] = (n[0][k] * nu[0][k] + n[1][k] * nu[1][k] + n[2][k] * nu[2][k]) * dgamma_dt[k];
    return t;
}

std::array<V3, 2> recover_velocity(const Elliptic& e, const Field& dgamma_dt, const std::array<V3, 2>& omega_star,
                                   const WallFlux& flux)
{
    Field theta = kinematic_theta(e, dgamma_dt);
    Field zero(e.grid(Side::plus).size(), 0.0);
    return {solve_div_curl(e, Side::plus, omega_star[0], zero, theta, flux.v_plus),
            solve_div_curl(e, Side::minus, omega_star[1], zero, theta, flux.v_minus)};
}

std::array<V3, 2> recover_magnetic(const Elliptic& e, const std::array<V3, 2>& j_star, const WallFlux& flux)
{
    Field zero(e.grid(Side::plus).size(), 0.0), zt(e.chart().size(), 0.0);
    return {solve_div_curl(e, Side::plus, j_star[0], zero, zt, flux.h_plus),
            solve_div_curl(e, Side::minus, j_star[1], zero, zt, flux.h_minus)};
}

namespace {

// -Lap p = tr(Da Db), p = 0 on the interface, d_n p = 0 on a flat wall.
Field p_ab(const Elliptic& e, Side s, const V3& a, const V3& b)
{
    const BulkGrid& g = e.grid(s);
    auto Da = jacobian_x(g, a), Db = jacobian_x(g, b);
    Field f(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) f[i] += Da[3 * p + q][i] * Db[3 * q + p][i];
    return e.dirichlet_poisson(s, f);
}

// 2 D_{v^T} theta - II(v^T, v^T) + II(h, h) + d_n(p_vv - p_hh)
Field g_side(const Elliptic& e, Side s, const V3& v, const V3& h, const Field& pvv, const Field& phh)
{
    const BulkGrid& g = e.grid(s);
    const SurfaceGeometry& sg = e.surface();
    V3 vt = trace(g, v), ht = trace(g, h);
    Field theta = normal_trace(e, vt);
    auto vc = chart_components(sg, vt), hc = chart_components(sg, ht);
    Field dth = directional(e.torus(), vc, theta);
    Field IIv = ii_form(sg, vc, vc), IIh = ii_form(sg, hc, hc);
    Field dp = conormal(g, pvv, 0), dh = conormal(g, phh, 0);
    Field out(theta.size());
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = 2 * dth[k] - IIv[k] + IIh[k] + (dp[k] - dh[k]) / sg.sqrtg[k];
    return out;
}

} // namespace

PressureParts pressure_decomposition(const Elliptic& e, const std::array<V3, 2>& v, const std::array<V3, 2>& h,
                                     double alpha)
{
    PressureParts P;
    const double rp = e.options().rho_plus, rm = e.options().rho_minus;
    const double rho[2] = {rp, rm};
    for (int s = 0; s < 2; ++s) {
        P.p_vv[s] = p_ab(e, side_of(s), v[s], v[s]);
        P.p_hh[s] = p_ab(e, side_of(s), h[s], h[s]);
    }
    P.g_plus = g_side(e, Side::plus, v[0], h[0], P.p_vv[0], P.p_hh[0]);
    P.g_minus = g_side(e, Side::minus, v[1], h[1], P.p_vv[1], P.p_hh[1]);
    Field rhs(P.g_plus.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = -P.g_plus[k] + P.g_minus[k];
    Field ext_pp, ext_pm;
    P.frak_p = e.nbar_inverse(rhs, &ext_pp, &ext_pm);

    const Field& kappa = e.surface().kappa;
    Field Nk = e.dn(Side::minus, kappa);
    for (auto& x : Nk) x /= rm;
    Field ext_bp, ext_bm;
    P.B_kappa = e.nbar_inverse(Nk, &ext_bp, &ext_bm);
    // In the slab the DN composites only see mean-free data; the mean of
    // kappa is restored as a constant on the plus side.
    const double mk = e.options().mode == WallMode::torus_slab ? e.mean(kappa) : 0.0;
    Field Hk = e.extend(Side::minus, kappa);

    const std::size_t N = ext_bp.size();
    for (int s = 0; s < 2; ++s) {
        P.p_kappa[s].resize(N);
        P.p_b[s].resize(N);
        P.total[s].resize(N);
    }
    for (std::size_t i = 0; i < N; ++i) {
        P.p_kappa[0][i] = (ext_bp[i] + mk) / rp;
        P.p_kappa[1][i] = (ext_bm[i] - Hk[i] + mk) / rm;
        P.p_b[0][i] = ext_pp[i] / rp;
        P.p_b[1][i] = ext_pm[i] / rm;
        for (int s = 0; s < 2; ++s)
            P.total[s][i] =
                rho[s] * (P.p_vv[s][i] - P.p_hh[s][i] + alpha * alpha * P.p_kappa[s][i] + P.p_b[s][i]);
    }
    return P;
}

} // namespace cvsheet
