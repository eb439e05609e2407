#include "cvsheet/dynamics.hpp"

#include "cvsheet/curvature_map.hpp"
#include "cvsheet/errors.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <sstream>

namespace cvsheet {

using C2 = std::array<Field, 2>;
using T3 = std::array<Field, 3>;

void PlasmaParams::validate() const
{
    std::ostringstream os;
    if (!(rho_plus > 0) || !(rho_minus > 0)) os << "densities must be positive; ";
    if (!(alpha >= 0 && alpha <= 1)) os << "alpha must lie in [0, 1]; ";
    if (!(a > 0)) os << "a must be positive; ";
    if (M < 4) os << "M must be at least 4; ";
    if (!(dt > 0)) os << "dt must be positive; ";
    if (!(cfl > 0)) os << "cfl must be positive; ";
    if (!os.str().empty()) throw ConfigError(os.str());
}

namespace {

double dot3(const V3& a, const V3& b, std::size_t k) { return a[0][k] * b[0][k] + a[1][k] * b[1][k] + a[2][k] * b[2][k]; }

V3 axpy_v3(double s, const V3& a, const V3& b)
{
    V3 r = b;
    for (int c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < r[c].size(); ++k) r[c][k] += s * a[c][k];
    return r;
}

// dU[i][alpha] = d_i U^alpha on the chart
std::array<V3, 2> chart_grad(const Torus& t, const V3& U)
{
    std::array<V3, 2> d;
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 3; ++c) d[i][c] = t.d(U[c], i);
    return d;
}

// D_J of every component of an ambient field.
V3 directional_v3(const Torus& t, const C2& J, const V3& U)
{
    return {directional(t, J, U[0]), directional(t, J, U[1]), directional(t, J, U[2])};
}

Field nodewise_dot(const V3& a, const V3& b)
{
    Field r(a[0].size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = dot3(a, b, k);
    return r;
}

V3 scaled(const Field& f, const V3& nu)
{
    V3 r = nu;
    for (int c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < f.size(); ++k) r[c][k] *= f[k];
    return r;
}

Field lap(const Elliptic& e, const Field& f) { return laplace_beltrami(e.torus(), e.surface(), f); }

// Physical gradient of a bulk scalar on the interface level.
V3 iface_grad(const BulkGrid& g, const Field& p) { return trace(g, grad_x(g, p), 0); }

Field dn_plus_normal(const BulkGrid& g, const Field& u)
{
    Field c = conormal(g, u, 0);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] /= g.sqrtg[k];
    return c;
}

V3 field_accel(const Elliptic& e, const std::array<V3, 2>& V, const std::array<V3, 2>& H, const PlasmaParams& pp)
{
    const Torus& t = e.torus();
    const auto& sg = e.surface();
    const double lam = pp.lambda(), c = pp.c();
    V3 w = axpy_v3(-1.0, V[1], V[0]);
    C2 wc = chart_components(sg, w), hp = chart_components(sg, H[0]), hm = chart_components(sg, H[1]);
    V3 Dww = directional_v3(t, wc, w), Dhp = directional_v3(t, hp, H[0]), Dhm = directional_v3(t, hm, H[1]);
    V3 r = make_v3(t.size());
    for (int a = 0; a < 3; ++a)
        for (std::size_t k = 0; k < t.size(); ++k)
            r[a][k] = c * Dww[a][k] - lam * Dhp[a][k] - (1 - lam) * Dhm[a][k];
    return r;
}

} // namespace

V3 weighted_velocity(const Elliptic& e, const V3& vp, const V3& vm, double lambda, double tol)
{
    Field tp = normal_trace(e, vp), tm = normal_trace(e, vm);
    double scale = 1, diff = 0;
    for (int c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < vp[c].size(); ++k) scale = std::max({scale, std::abs(vp[c][k]), std::abs(vm[c][k])});
    for (std::size_t k = 0; k < tp.size(); ++k) diff = std::max(diff, std::abs(tp[k] - tm[k]));
    if (diff > tol * scale) {
        std::ostringstream os;
        os << "normal traces of v+ and v- differ by " << diff;
        throw TraceMismatch(os.str());
    }
    V3 u = make_v3(tp.size());
    for (int c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < tp.size(); ++k) u[c][k] = lambda * vp[c][k] + (1 - lambda) * vm[c][k];
    return u;
}

Field operator_A_apply(const Elliptic& e, const Field& f)
{
    Field r = lap(e, e.ntilde(f));
    for (auto& x : r) x = -x;
    return r;
}

Field operator_R_apply(const Torus& t, const C2& J, const Field& f) { return directional(t, J, directional(t, J, f)); }

Field RemainderTerms::total() const
{
    Field r(normal_accel.size(), 0.0);
    for (const Field* f : {&normal_accel, &lap_u, &hess, &grad_sq, &ii_du, &ii_a, &shear, &mag_plus, &mag_minus, &lap_r0})
        for (std::size_t k = 0; k < r.size(); ++k) r[k] += (*f)[k];
    return r;
}

V3 acceleration_a(const Elliptic& e, const PressureParts& P, const std::array<V3, 2>& V, const std::array<V3, 2>& H,
                  const std::array<V3, 2>&, const PlasmaParams& pp)
{
    V3 gp = iface_grad(e.grid(Side::plus), P.total[0]), gm = iface_grad(e.grid(Side::minus), P.total[1]);
    V3 r = field_accel(e, V, H, pp);
    const double s = 1.0 / (pp.rho_plus + pp.rho_minus);
    for (int a = 0; a < 3; ++a)
        for (std::size_t k = 0; k < r[a].size(); ++k) r[a][k] += s * (gp[a][k] + gm[a][k]);
    return r;
}

V3 acceleration_b(const Elliptic& e, const PressureParts& P, const std::array<V3, 2>& V, const std::array<V3, 2>& H,
                  const std::array<V3, 2>&, const PlasmaParams& pp)
{
    // q+ = rho+ (p_vv - p_hh) + alpha^2 H+ Nbar^-1 (N- kappa / rho-) + H+ p
    // q- = rho- (p_vv - p_hh) - alpha^2 H- Nbar^-1 (N+ kappa / rho+) + H- p
    const Field& kappa = e.surface().kappa;
    const double rp = pp.rho_plus, rm = pp.rho_minus, a2 = pp.alpha * pp.alpha;
    Field Nk = e.dn(Side::plus, kappa);
    for (auto& x : Nk) x /= rp;
    Field ext_p, ext_m;
    e.nbar_inverse(Nk, &ext_p, &ext_m);
    const std::size_t N = ext_m.size();
    Field qp(N), qm(N);
    for (std::size_t i = 0; i < N; ++i) {
        qp[i] = rp * (P.p_vv[0][i] - P.p_hh[0][i]) + a2 * rp * P.p_kappa[0][i] + rp * P.p_b[0][i];
        qm[i] = rm * (P.p_vv[1][i] - P.p_hh[1][i]) - a2 * ext_m[i] + rm * P.p_b[1][i];
    }
    V3 gp = iface_grad(e.grid(Side::plus), qp), gm = iface_grad(e.grid(Side::minus), qm);
    V3 r = field_accel(e, V, H, pp);
    const double s = 1.0 / (rp + rm);
    for (int a = 0; a < 3; ++a)
        for (std::size_t k = 0; k < r[a].size(); ++k) r[a][k] += s * (gp[a][k] + gm[a][k]);
    return r;
}

Field r0_term(const Elliptic& e, const PressureParts& P, const PlasmaParams& pp)
{
    const BulkGrid &gp = e.grid(Side::plus), &gm = e.grid(Side::minus);
    const std::size_t N = P.p_b[0].size();
    Field bp(N), bm(N), sp(N), sm(N);
    for (std::size_t i = 0; i < N; ++i) {
        bp[i] = pp.rho_plus * P.p_b[0][i];
        bm[i] = pp.rho_minus * P.p_b[1][i];
        sp[i] = P.p_vv[0][i] - P.p_hh[0][i];
        sm[i] = P.p_vv[1][i] - P.p_hh[1][i];
    }
    Field Np = e.dn_of(Side::plus, bp), Nm = e.dn_of(Side::minus, bm);
    Field dp = dn_plus_normal(gp, sp), dm = dn_plus_normal(gm, sm);
    const double lam = pp.lambda(), s = 1.0 / (pp.rho_plus + pp.rho_minus);
    Field r(Np.size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = -s * (Np[k] - Nm[k]) - lam * dp[k] - (1 - lam) * dm[k];
    return r;
}

RemainderTerms assemble_remainder(const Elliptic& e, const V3& U, const std::array<V3, 2>& V,
                                  const std::array<V3, 2>& H, const V3& frak, const Field& r0,
                                  const PlasmaParams& pp)
{
    const Torus& t = e.torus();
    const auto& sg = e.surface();
    const std::size_t n = t.size();
    const double lam = pp.lambda(), c = pp.c();
    const V3& nn = sg.normal;
    RemainderTerms T;

    // Lap n = -|II|^2 n + grad kappa
    Field ii2 = tensor_dot(sg, sg.ii, sg.ii);
    V3 gk = tangential_gradient(t, sg, sg.kappa);
    T.normal_accel.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0;
        for (int a = 0; a < 3; ++a) s += frak[a][k] * (-ii2[k] * nn[a][k] + gk[a][k]);
        T.normal_accel[k] = -s;
    }

    auto dU = chart_grad(t, U);
    C2 Tl = chart_components(sg, laplace_beltrami(t, sg, U));
    T.lap_u.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0;
        for (int a = 0; a < 3; ++a) s += nn[a][k] * (Tl[0][k] * dU[0][a][k] + Tl[1][k] * dU[1][a][k]);
        T.lap_u[k] = 2 * s;
    }

    T3 A, NH, S;
    for (auto* X : {&A, &NH, &S})
        for (auto& f : *X) f.assign(n, 0.0);
    const int I[3] = {0, 0, 1}, Jx[3] = {0, 1, 1};
    for (int a = 0; a < 3; ++a) {
        auto Ha = hessian(t, sg, U[a]);
        for (int q = 0; q < 3; ++q)
            for (std::size_t k = 0; k < n; ++k) NH[q][k] += nn[a][k] * Ha[q][k];
    }
    for (int q = 0; q < 3; ++q) {
        const int i = I[q], j = Jx[q];
        for (std::size_t k = 0; k < n; ++k) {
            double ui_pj = 0, uj_pi = 0, ui_uj = 0;
            for (int a = 0; a < 3; ++a) {
                ui_pj += dU[i][a][k] * sg.dphi[j][a][k];
                uj_pi += dU[j][a][k] * sg.dphi[i][a][k];
                ui_uj += dU[i][a][k] * dU[j][a][k];
            }
            A[q][k] = 0.5 * (ui_pj + uj_pi);
            S[q][k] = ui_uj;
        }
    }
    T.hess = tensor_dot(sg, A, NH);
    for (auto& x : T.hess) x *= 4;

    T.grad_sq.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double G[2] = {0, 0};
        for (int i = 0; i < 2; ++i)
            for (int a = 0; a < 3; ++a) G[i] += nn[a][k] * dU[i][a][k];
        double g2 = sg.ginv[0][k] * G[0] * G[0] + 2 * sg.ginv[1][k] * G[0] * G[1] + sg.ginv[2][k] * G[1] * G[1];
        T.grad_sq[k] = -sg.kappa[k] * g2;
    }

    T.ii_du = tensor_dot(sg, sg.ii, S);
    for (auto& x : T.ii_du) x *= -2;

    auto C1 = tensor_compose(sg, sg.ii, A), C2x = tensor_compose(sg, A, sg.ii);
    T3 Cs;
    for (auto& f : Cs) f.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        Cs[0][k] = C1[0][k] + C2x[0][k];
        Cs[1][k] = 0.5 * (C1[1][k] + C2x[1][k] + C1[2][k] + C2x[2][k]);
        Cs[2][k] = C1[3][k] + C2x[3][k];
    }
    T.ii_a = tensor_dot(sg, Cs, A);
    for (auto& x : T.ii_a) x *= 4;

    V3 w = axpy_v3(-1.0, V[1], V[0]);
    auto pair_term = [&](const V3& J) {
        C2 Jc = chart_components(sg, J);
        Field Rk = operator_R_apply(t, Jc, sg.kappa), LII = lap(e, ii_form(sg, Jc, Jc));
        for (std::size_t k = 0; k < n; ++k) Rk[k] -= LII[k];
        return Rk;
    };
    T.shear = pair_term(w);
    T.mag_plus = pair_term(H[0]);
    T.mag_minus = pair_term(H[1]);
    for (std::size_t k = 0; k < n; ++k) {
        T.shear[k] *= c;
        T.mag_plus[k] *= -lam;
        T.mag_minus[k] *= -(1 - lam);
    }
    T.lap_r0 = lap(e, r0);
    for (auto& x : T.lap_r0) x = -x;
    return T;
}

namespace {

// Eulerian rates of omega and j in the moving reference frame and the wall
// flux rates of one side.
void side_rates(const BulkGrid& g, const V3& om, const V3& jj, const V3& v, const V3& h, const V3& dX, V3& om_dot,
                V3& j_dot, Vec2& fv_dot, Vec2& fh_dot)
{
    const std::size_t N = g.size();
    auto Dom = jacobian_x(g, om), Dj = jacobian_x(g, jj), Dv = jacobian_x(g, v), Dh = jacobian_x(g, h);
    om_dot = make_v3(N);
    j_dot = make_v3(N);
    for (std::size_t p = 0; p < N; ++p) {
        double S[3];
        {
            double s0 = 0, s1 = 0, s2 = 0;
            for (int l = 0; l < 3; ++l) {
                const double a0 = Dv[3 * l][p], a1 = Dv[3 * l + 1][p], a2 = Dv[3 * l + 2][p];
                const double b0 = Dh[3 * l][p], b1 = Dh[3 * l + 1][p], b2 = Dh[3 * l + 2][p];
                s0 += a1 * b2 - a2 * b1;
                s1 += a2 * b0 - a0 * b2;
                s2 += a0 * b1 - a1 * b0;
            }
            S[0] = s0;
            S[1] = s1;
            S[2] = s2;
        }
        for (int i = 0; i < 3; ++i) {
            double ro = 0, rj = 0;
            for (int k = 0; k < 3; ++k) {
                const double adv = dX[k][p] - v[k][p];
                ro += adv * Dom[3 * i + k][p] + h[k][p] * Dj[3 * i + k][p] + om[k][p] * Dv[3 * i + k][p] -
                      jj[k][p] * Dh[3 * i + k][p];
                rj += adv * Dj[3 * i + k][p] + h[k][p] * Dom[3 * i + k][p] + jj[k][p] * Dv[3 * i + k][p] -
                      om[k][p] * Dh[3 * i + k][p];
            }
            om_dot[i][p] = ro;
            j_dot[i][p] = rj - 2 * S[i];
        }
    }
    Field a(g.size(), 0.0), b(g.size(), 0.0);
    for (int c = 0; c < 2; ++c) {
        for (std::size_t q = 0; q < g.n; ++q) {
            const std::size_t p = g.M * g.n + q;
            double sv = 0, sh = 0;
            for (int k = 0; k < 3; ++k) {
                sv += -v[k][p] * Dv[3 * c + k][p] + h[k][p] * Dh[3 * c + k][p];
                sh += h[k][p] * Dv[3 * c + k][p] - v[k][p] * Dh[3 * c + k][p];
            }
            a[p] = sv;
            b[p] = sh;
        }
        fv_dot[c] = wall_integral(g, a);
        fh_dot[c] = wall_integral(g, b);
    }
}

} // namespace

BulkRates bulk_rates(const Elliptic& e, const std::array<V3, 2>& omega, const std::array<V3, 2>& j,
                     const std::array<V3, 2>& v, const std::array<V3, 2>& h, const Field& dgamma)
{
    BulkRates R;
    V3 gnu = scaled(dgamma, e.chart().nu);
    for (int i = 0; i < 2; ++i) {
        const BulkGrid& g = e.grid(side_of(i));
        V3 dX;
        for (int a = 0; a < 3; ++a) dX[a] = flat_extension(g, gnu[a]);
        Vec2 fv{0, 0}, fh{0, 0};
        side_rates(g, omega[i], j[i], v[i], h[i], dX, R.omega_dot[i], R.j_dot[i], fv, fh);
        (i == 0 ? R.flux_dot.v_plus : R.flux_dot.v_minus) = fv;
        (i == 0 ? R.flux_dot.h_plus : R.flux_dot.h_minus) = fh;
    }
    return R;
}

Evaluation evaluate(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp, const EvalOptions& opt)
{
    Evaluation ev;
    const Torus& t = *chart.torus;
    const std::size_t n = t.size();
    InvertOptions io;
    io.tol = pp.tol_invert;
    Field guess = s.gamma.size() == n ? s.gamma : flat_K_inverse(t, s.kappa_a, pp.a);
    ev.gamma = invert_K(chart, s.kappa_a, pp.a, guess, io);
    EllipticOptions eo;
    eo.M = pp.M;
    eo.rho_plus = pp.rho_plus;
    eo.rho_minus = pp.rho_minus;
    ev.e = std::make_shared<Elliptic>(chart, ev.gamma, eo);
    const Elliptic& e = *ev.e;
    const auto& sg = e.surface();
    const double lam = pp.lambda(), c = pp.c(), a2 = pp.a * pp.a, al2 = pp.alpha * pp.alpha;

    // d_t gamma, with the dS-mean of theta removed: the slabs keep their volume
    ev.dgamma = dK_solve(chart, ev.gamma, s.kappa_a_dot, pp.a);
    {
        Field theta = kinematic_theta(e, ev.dgamma);
        const double m = e.mean(theta);
        ev.volume_correction = m;
        for (std::size_t k = 0; k < n; ++k) {
            const double nnu = sg.normal[0][k] * chart.nu[0][k] + sg.normal[1][k] * chart.nu[1][k] +
                               sg.normal[2][k] * chart.nu[2][k];
            ev.dgamma[k] -= m / nnu;
        }
    }

    for (int i = 0; i < 2; ++i) {
        ev.omega[i] = opt.project ? leray_project(e, side_of(i), s.omega_star[i]) : s.omega_star[i];
        ev.j[i] = opt.project ? leray_project(e, side_of(i), s.j_star[i]) : s.j_star[i];
    }
    ev.v = recover_velocity(e, ev.dgamma, ev.omega, s.flux);
    ev.h = recover_magnetic(e, ev.j, s.flux);
    ev.P = pressure_decomposition(e, ev.v, ev.h, pp.alpha);
    for (int i = 0; i < 2; ++i) {
        const BulkGrid& g = e.grid(side_of(i));
        ev.V[i] = trace(g, ev.v[i]);
        ev.H[i] = trace(g, ev.h[i]);
    }
    ev.U = weighted_velocity(e, ev.V[0], ev.V[1], lam);
    ev.frak_a = acceleration_a(e, ev.P, ev.V, ev.H, ev.v, pp);
    const V3 frak = opt.variant == Remainder::R1 ? acceleration_b(e, ev.P, ev.V, ev.H, ev.v, pp) : ev.frak_a;
    ev.r0 = r0_term(e, ev.P, pp);
    RemainderTerms RT = assemble_remainder(e, ev.U, ev.V, ev.H, frak, ev.r0, pp);
    ev.R0 = RT.total();

    // Dbar_t^2 kappa = -alpha^2 A kappa - c R(w) kappa + lambda R(h+) kappa + (1 - lambda) R(h-) kappa + R0
    {
        Field Nk = e.dn_of(Side::plus, ev.P.p_kappa[0]);  // Ntilde kappa
        Field LNk = lap(e, Nk);
        V3 w = axpy_v3(-1.0, ev.V[1], ev.V[0]);
        C2 wc = chart_components(sg, w), hp = chart_components(sg, ev.H[0]), hm = chart_components(sg, ev.H[1]);
        Field Rw = operator_R_apply(t, wc, sg.kappa), Rp = operator_R_apply(t, hp, sg.kappa),
              Rm = operator_R_apply(t, hm, sg.kappa);
        ev.Dt2_kappa.resize(n);
        for (std::size_t k = 0; k < n; ++k)
            ev.Dt2_kappa[k] = al2 * LNk[k] - c * Rw[k] + lam * Rp[k] + (1 - lam) * Rm[k] + ev.R0[k];
    }

    // Pull back to the chart. X = U - d_t gamma nu = Phi_,i ustar^i.
    V3 gnu = scaled(ev.dgamma, chart.nu);
    V3 X = axpy_v3(-1.0, gnu, ev.U);
    ev.ustar = chart_components(sg, X);
    V3 DU = directional_v3(t, ev.ustar, ev.U), Dg = directional_v3(t, ev.ustar, gnu);
    V3 acc = make_v3(n);  // Dbar_t u - D_ustar U
    for (int a = 0; a < 3; ++a)
        for (std::size_t k = 0; k < n; ++k) acc[a][k] = -frak[a][k] - DU[a][k];
    ev.dtt_gamma.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double num = 0, nnu = 0;
        for (int a = 0; a < 3; ++a) {
            num += sg.normal[a][k] * (acc[a][k] - Dg[a][k]);
            nnu += sg.normal[a][k] * chart.nu[a][k];
        }
        ev.dtt_gamma[k] = num / nnu;
    }

    // d_t ustar^i = d_t g^ij (X.Phi_j) + g^ij (d_t X.Phi_j + X.d_j(d_t gamma nu))
    std::array<V3, 2> E = chart_grad(t, gnu);
    C2 dus;
    dus[0].resize(n);
    dus[1].resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double G[2][2] = {{sg.ginv[0][k], sg.ginv[1][k]}, {sg.ginv[1][k], sg.ginv[2][k]}};
        double dg[2][2], XP[2], b[2];
        for (int i = 0; i < 2; ++i) {
            double xp = 0, xe = 0, tp = 0;
            for (int a = 0; a < 3; ++a) {
                const double dXa = acc[a][k] - ev.dtt_gamma[k] * chart.nu[a][k];
                xp += X[a][k] * sg.dphi[i][a][k];
                xe += X[a][k] * E[i][a][k];
                tp += dXa * sg.dphi[i][a][k];
            }
            XP[i] = xp;
            b[i] = tp + xe;
            for (int j = 0; j < 2; ++j) {
                double s1 = 0;
                for (int a = 0; a < 3; ++a) s1 += sg.dphi[i][a][k] * E[j][a][k] + E[i][a][k] * sg.dphi[j][a][k];
                dg[i][j] = s1;
            }
        }
        for (int i = 0; i < 2; ++i) {
            double r = 0;
            for (int j = 0; j < 2; ++j) {
                double dgi = 0;
                for (int p = 0; p < 2; ++p)
                    for (int q = 0; q < 2; ++q) dgi -= G[i][p] * dg[p][q] * G[q][j];
                r += dgi * XP[j] + G[i][j] * b[j];
            }
            dus[i][k] = r;
        }
    }
    Field dtf(n);
    for (std::size_t k = 0; k < n; ++k) dtf[k] = s.kappa_a_dot[k] - a2 * ev.dgamma[k];
    const Field& f = sg.kappa;
    Field DDf = directional(t, ev.ustar, directional(t, ev.ustar, f)), Ddtf = directional(t, ev.ustar, dtf),
          Dduf = directional(t, dus, f);
    ev.kappa_tt.resize(n);
    for (std::size_t k = 0; k < n; ++k)
        ev.kappa_tt[k] = ev.Dt2_kappa[k] - DDf[k] - 2 * Ddtf[k] - Dduf[k] + a2 * ev.dtt_gamma[k];

    Field half(n);
    for (std::size_t k = 0; k < n; ++k) half[k] = 0.5 * ev.dtt_gamma[k];
    auto jet = K_jet(chart, ev.gamma, ev.dgamma, half, pp.a);
    ev.kappa_tt_chain.resize(n);
    for (std::size_t k = 0; k < n; ++k) ev.kappa_tt_chain[k] = 2 * jet[2][k];
    if (pp.dealias) {
        t.dealias(ev.kappa_tt);
        t.dealias(ev.kappa_tt_chain);
    }
    if (opt.chain_route) std::swap(ev.kappa_tt, ev.kappa_tt_chain);

    if (opt.rates) {
        BulkRates R = bulk_rates(e, ev.omega, ev.j, ev.v, ev.h, ev.dgamma);
        if (pp.dealias)
            for (int i = 0; i < 2; ++i)
                for (int a = 0; a < 3; ++a) {
                    const int L = e.grid(side_of(i)).levels();
                    t.dealias_levels(R.omega_dot[i][a].data(), L);
                    t.dealias_levels(R.j_dot[i][a].data(), L);
                }
        ev.omega_dot = std::move(R.omega_dot);
        ev.j_dot = std::move(R.j_dot);
        ev.flux_dot = R.flux_dot;
    }
    return ev;
}

const Field& kappa_accel(const Evaluation& ev) { return ev.kappa_tt; }

double dt_limit(const Evaluation& ev, const PlasmaParams& pp)
{
    const Elliptic& e = *ev.e;
    const Torus& t = e.torus();
    const auto& sg = e.surface();
    const std::size_t n = t.size();
    double w2 = 0, hp2 = 0, hm2 = 0, u2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double w = 0, hp = 0, hm = 0, uu = 0;
        for (int a = 0; a < 3; ++a) {
            const double d = ev.V[0][a][k] - ev.V[1][a][k];
            w += d * d;
            hp += ev.H[0][a][k] * ev.H[0][a][k];
            hm += ev.H[1][a][k] * ev.H[1][a][k];
        }
        // chart speed measured with the metric
        uu = sg.g[0][k] * ev.ustar[0][k] * ev.ustar[0][k] + 2 * sg.g[1][k] * ev.ustar[0][k] * ev.ustar[1][k] +
             sg.g[2][k] * ev.ustar[1][k] * ev.ustar[1][k];
        w2 = std::max(w2, w);
        hp2 = std::max(hp2, hp);
        hm2 = std::max(hm2, hm);
        u2 = std::max(u2, uu);
    }
    const double lam = pp.lambda(), c = pp.c(), al2 = pp.alpha * pp.alpha;
    const double R = c * w2 + lam * hp2 + (1 - lam) * hm2;
    const double dp = e.grid(Side::plus).depth(), dm = e.grid(Side::minus).depth();
    double rate = 0;
    for (std::size_t s = 0; s < t.nspec(); ++s) {
        if (pp.dealias && !t.dealias_keep(s)) continue;
        const double k2 = t.kk2(s);
        if (k2 == 0) continue;
        const double k = std::sqrt(k2);
        const double Np = k * std::tanh(k * dp), Nm = k * std::tanh(k * dm);
        const double Nt = Np * Nm / (pp.rho_minus * Np + pp.rho_plus * Nm);
        rate = std::max(rate, std::sqrt(al2 * k2 * Nt + R * k2) + std::sqrt(u2) * k);
    }
    // bulk advection by v -+ h, horizontally spectral
    double b = 0;
    for (int i = 0; i < 2; ++i)
        for (std::size_t p = 0; p < ev.v[i][0].size(); ++p) {
            double s = 0;
            for (int a = 0; a < 2; ++a) s += std::abs(ev.v[i][a][p]) + std::abs(ev.h[i][a][p]);
            b = std::max(b, s);
        }
    const double kmax = M_PI * std::max(t.n1(), t.n2() > 1 ? t.n2() : 1);
    rate = std::max(rate, b * kmax);
    return rate > 0 ? pp.cfl / rate : std::numeric_limits<double>::infinity();
}

namespace {

// Periodic cubic Lagrange weights around fractional index x.
void cubic_weights(double x, int n, int idx[4], double w[4])
{
    const double f = std::floor(x);
    const double s = x - f;
    const int i0 = int(f);
    for (int m = 0; m < 4; ++m) idx[m] = ((i0 - 1 + m) % n + n) % n;
    w[0] = -s * (s - 1) * (s - 2) / 6;
    w[1] = (s + 1) * (s - 1) * (s - 2) / 2;
    w[2] = -(s + 1) * s * (s - 2) / 2;
    w[3] = (s + 1) * s * (s - 1) / 6;
}

// Lagrange weights on the four levels nearest to z (levels monotone).
void level_weights(const Field& z, double zq, int idx[4], double w[4])
{
    const int L = int(z.size());
    int lo = 0;
    const bool inc = z[L - 1] > z[0];
    // first level whose coordinate passes zq
    while (lo < L - 1 && (inc ? z[lo + 1] < zq : z[lo + 1] > zq)) ++lo;
    int start = std::clamp(lo - 1, 0, L - 4);
    for (int m = 0; m < 4; ++m) {
        idx[m] = start + m;
        double p = 1;
        for (int q = 0; q < 4; ++q)
            if (q != m) p *= (zq - z[start + q]) / (z[start + m] - z[start + q]);
        w[m] = p;
    }
}

struct Interp {
    const BulkGrid& g;
    double at(const Field& f, double xq, double yq, double zq) const
    {
        const int n1 = g.torus->n1(), n2 = g.torus->n2();
        int ix[4], iy[4] = {0, 0, 0, 0}, iz[4];
        double wx[4], wy[4] = {1, 0, 0, 0}, wz[4];
        cubic_weights(xq * n1, n1, ix, wx);
        const int ny = n2 > 1 ? 4 : 1;
        if (n2 > 1) cubic_weights(yq * n2, n2, iy, wy);
        level_weights(g.zlev, zq, iz, wz);
        double s = 0;
        for (int c = 0; c < 4; ++c)
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < ny; ++b)
                    s += wz[c] * wx[a] * wy[b] * f[std::size_t(iz[c]) * g.n + std::size_t(ix[a]) * n2 + iy[b]];
        return s;
    }
};

} // namespace

std::pair<std::array<V3, 2>, std::array<V3, 2>> transport_step(const Elliptic& e, const std::array<V3, 2>& omega,
                                                               const std::array<V3, 2>& jc,
                                                               const std::array<V3, 2>& vf,
                                                               const std::array<V3, 2>& hf, const Field& dgamma,
                                                               double dt)
{
    std::array<V3, 2> om_out, j_out;
    V3 gnu = scaled(dgamma, e.chart().nu);
    for (int i = 0; i < 2; ++i) {
        const BulkGrid& g = e.grid(side_of(i));
        const Torus& t = *g.torus;
        const std::size_t N = g.size();
        const int n1 = t.n1(), n2 = t.n2();
        V3 dX;
        for (int a = 0; a < 3; ++a) dX[a] = flat_extension(g, gnu[a]);
        const V3 &v = vf[i], &h = hf[i];
        auto Dv = jacobian_x(g, v), Dh = jacobian_x(g, h);
        V3 S = make_v3(N);
        for (std::size_t p = 0; p < N; ++p)
            for (int l = 0; l < 3; ++l) {
                const double a0 = Dv[3 * l][p], a1 = Dv[3 * l + 1][p], a2 = Dv[3 * l + 2][p];
                const double b0 = Dh[3 * l][p], b1 = Dh[3 * l + 1][p], b2 = Dh[3 * l + 2][p];
                S[0][p] += a1 * b2 - a2 * b1;
                S[1][p] += a2 * b0 - a0 * b2;
                S[2][p] += a0 * b1 - a1 * b0;
            }
        Interp I{g};
        const double zlo = std::min(g.z0, g.zw), zhi = std::max(g.z0, g.zw);
        const double cell = std::abs(g.zlev[1] - g.zlev[0]);
        V3 xi_new = make_v3(N), eta_new = make_v3(N);
        for (int branch = 0; branch < 2; ++branch) {
            // branch 0: xi = omega - j along v + h; branch 1: eta = omega + j along v - h
            const double sh = branch == 0 ? 1.0 : -1.0;
            V3 q = make_v3(N), by = make_v3(N);
            for (std::size_t p = 0; p < N; ++p) {
                double b[3];
                for (int a = 0; a < 3; ++a) {
                    q[a][p] = omega[i][a][p] - sh * jc[i][a][p];
                    b[a] = v[a][p] + sh * h[a][p] - dX[a][p];
                }
                for (int a = 0; a < 3; ++a)
                    by[a][p] = g.DXi[3 * a][p] * b[0] + g.DXi[3 * a + 1][p] * b[1] + g.DXi[3 * a + 2][p] * b[2];
            }
            std::array<Field, 9> Db;
            for (int m = 0; m < 9; ++m) {
                Db[m].resize(N);
                for (std::size_t p = 0; p < N; ++p) Db[m][p] = Dv[m][p] + sh * Dh[m][p];
            }
            V3& out = branch == 0 ? xi_new : eta_new;
            for (int l = 0; l <= g.M; ++l)
                for (int ii = 0; ii < n1; ++ii)
                    for (int jj = 0; jj < n2; ++jj) {
                        const std::size_t p = std::size_t(l) * g.n + std::size_t(ii) * n2 + jj;
                        const double y0 = t.x(ii), y1 = t.y(jj), y2 = g.zlev[l];
                        auto clampz = [&](double z) {
                            if (z < zlo - cell || z > zhi + cell) {
                                std::ostringstream os;
                                os << "characteristic foot at z = " << z << " leaves the slab";
                                throw CFLViolation(os.str());
                            }
                            return std::clamp(z, zlo, zhi);
                        };
                        const double m0 = y0 - 0.5 * dt * by[0][p], m1 = y1 - 0.5 * dt * by[1][p],
                                     m2 = clampz(y2 - 0.5 * dt * by[2][p]);
                        double bm[3];
                        for (int a = 0; a < 3; ++a) bm[a] = I.at(by[a], m0, m1, m2);
                        const double f0 = y0 - dt * bm[0], f1 = y1 - dt * bm[1], f2 = clampz(y2 - dt * bm[2]);
                        double qf[3], Dm[9], Sm[3];
                        for (int a = 0; a < 3; ++a) {
                            qf[a] = I.at(q[a], f0, f1, f2);
                            Sm[a] = I.at(S[a], m0, m1, m2);
                        }
                        for (int m = 0; m < 9; ++m) Dm[m] = I.at(Db[m], m0, m1, m2);
                        // Heun on d/dt q = (Db) q - / + 2 S along the characteristic
                        const double src = branch == 0 ? 2.0 : -2.0;
                        double k1[3], qp[3], k2[3];
                        for (int a = 0; a < 3; ++a)
                            k1[a] = Dm[3 * a] * qf[0] + Dm[3 * a + 1] * qf[1] + Dm[3 * a + 2] * qf[2] + src * Sm[a];
                        for (int a = 0; a < 3; ++a) qp[a] = qf[a] + dt * k1[a];
                        for (int a = 0; a < 3; ++a)
                            k2[a] = Dm[3 * a] * qp[0] + Dm[3 * a + 1] * qp[1] + Dm[3 * a + 2] * qp[2] + src * Sm[a];
                        for (int a = 0; a < 3; ++a) out[a][p] = qf[a] + 0.5 * dt * (k1[a] + k2[a]);
                    }
        }
        V3 om = make_v3(N), jj = make_v3(N);
        for (int a = 0; a < 3; ++a)
            for (std::size_t p = 0; p < N; ++p) {
                om[a][p] = 0.5 * (xi_new[a][p] + eta_new[a][p]);
                jj[a][p] = 0.5 * (eta_new[a][p] - xi_new[a][p]);
            }
        om_out[i] = leray_project(e, side_of(i), om);
        j_out[i] = leray_project(e, side_of(i), jj);
    }
    return {om_out, j_out};
}

WallFlux update_wall_fluxes(const Evaluation& ev, const WallFlux& f, double dt)
{
    WallFlux r = f;
    for (int c = 0; c < 2; ++c) {
        r.v_plus[c] += dt * ev.flux_dot.v_plus[c];
        r.v_minus[c] += dt * ev.flux_dot.v_minus[c];
        r.h_plus[c] += dt * ev.flux_dot.h_plus[c];
        r.h_minus[c] += dt * ev.flux_dot.h_minus[c];
    }
    return r;
}

namespace {

// Y + s dY for the first-order system.
SimState advance(const SimState& y, const Evaluation& d, double s)
{
    SimState r = y;
    for (std::size_t k = 0; k < r.kappa_a.size(); ++k) {
        r.kappa_a[k] += s * y.kappa_a_dot[k];
        r.kappa_a_dot[k] += s * d.kappa_tt[k];
    }
    for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a)
            for (std::size_t p = 0; p < r.omega_star[i][a].size(); ++p) {
                r.omega_star[i][a][p] += s * d.omega_dot[i][a][p];
                r.j_star[i][a][p] += s * d.j_dot[i][a][p];
            }
    r.flux = update_wall_fluxes(d, y.flux, s);
    r.t = y.t + s;
    r.gamma = d.gamma;
    for (std::size_t k = 0; k < r.gamma.size(); ++k) r.gamma[k] += s * d.dgamma[k];
    return r;
}

// Accumulates w * (dY of stage state y) into acc.
struct Deriv {
    Field k, kd;
    std::array<V3, 2> om, jj;
    WallFlux fl;
};

Deriv deriv_of(const SimState& y, const Evaluation& d)
{
    return {y.kappa_a_dot, d.kappa_tt, d.omega_dot, d.j_dot, d.flux_dot};
}

void add(Deriv& acc, const Deriv& x, double w)
{
    for (std::size_t q = 0; q < acc.k.size(); ++q) {
        acc.k[q] += w * x.k[q];
        acc.kd[q] += w * x.kd[q];
    }
    for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a)
            for (std::size_t p = 0; p < acc.om[i][a].size(); ++p) {
                acc.om[i][a][p] += w * x.om[i][a][p];
                acc.jj[i][a][p] += w * x.jj[i][a][p];
            }
    for (int c = 0; c < 2; ++c) {
        acc.fl.v_plus[c] += w * x.fl.v_plus[c];
        acc.fl.v_minus[c] += w * x.fl.v_minus[c];
        acc.fl.h_plus[c] += w * x.fl.h_plus[c];
        acc.fl.h_minus[c] += w * x.fl.h_minus[c];
    }
}

Deriv scaled_deriv(const Deriv& x, double w)
{
    Deriv r = x;
    for (auto& v : r.k) v *= w;
    for (auto& v : r.kd) v *= w;
    for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a) {
            for (auto& v : r.om[i][a]) v *= w;
            for (auto& v : r.jj[i][a]) v *= w;
        }
    for (int c = 0; c < 2; ++c) {
        r.fl.v_plus[c] *= w;
        r.fl.v_minus[c] *= w;
        r.fl.h_plus[c] *= w;
        r.fl.h_minus[c] *= w;
    }
    return r;
}

SimState apply(const SimState& y, const Deriv& d, double t_new)
{
    SimState r = y;
    for (std::size_t q = 0; q < r.kappa_a.size(); ++q) {
        r.kappa_a[q] += d.k[q];
        r.kappa_a_dot[q] += d.kd[q];
    }
    for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a)
            for (std::size_t p = 0; p < r.omega_star[i][a].size(); ++p) {
                r.omega_star[i][a][p] += d.om[i][a][p];
                r.j_star[i][a][p] += d.jj[i][a][p];
            }
    for (int c = 0; c < 2; ++c) {
        r.flux.v_plus[c] += d.fl.v_plus[c];
        r.flux.v_minus[c] += d.fl.v_minus[c];
        r.flux.h_plus[c] += d.fl.h_plus[c];
        r.flux.h_minus[c] += d.fl.h_minus[c];
    }
    r.t = t_new;
    return r;
}

} // namespace

SimState time_step(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp, double dt, StepInfo* info,
                   const EvalOptions& opt, const Evaluation* first)
{
    Evaluation e1 = first ? *first : evaluate(chart, s, pp, opt);
    const double lim = dt_limit(e1, pp);
    if (dt > lim * (1 + 1e-12)) {
        std::ostringstream os;
        os << "dt = " << dt << " exceeds the stability limit " << lim;
        throw CFLViolation(os.str());
    }
    // the step starts from the projected vorticity and current
    SimState y0 = s;
    y0.omega_star = e1.omega;
    y0.j_star = e1.j;
    y0.gamma = e1.gamma;

    Deriv k1 = deriv_of(y0, e1);
    SimState y2 = advance(y0, e1, 0.5 * dt);
    Evaluation e2 = evaluate(chart, y2, pp, opt);
    Deriv k2 = deriv_of(y2, e2);
    SimState y3 = advance(y0, e2, 0.5 * dt);
    y3.kappa_a = y0.kappa_a;
    for (std::size_t q = 0; q < y3.kappa_a.size(); ++q) y3.kappa_a[q] += 0.5 * dt * y2.kappa_a_dot[q];
    Evaluation e3 = evaluate(chart, y3, pp, opt);
    Deriv k3 = deriv_of(y3, e3);
    SimState y4 = advance(y0, e3, dt);
    y4.kappa_a = y0.kappa_a;
    for (std::size_t q = 0; q < y4.kappa_a.size(); ++q) y4.kappa_a[q] += dt * y3.kappa_a_dot[q];
    Evaluation e4 = evaluate(chart, y4, pp, opt);
    Deriv k4 = deriv_of(y4, e4);

    Deriv acc = scaled_deriv(k1, dt / 6);
    add(acc, k2, dt / 3);
    add(acc, k3, dt / 3);
    add(acc, k4, dt / 6);
    SimState out = apply(y0, acc, s.t + dt);
    out.gamma = e4.gamma;
    if (info) {
        info->dt_limit = lim;
        info->volume_correction =
            std::max({std::abs(e1.volume_correction), std::abs(e2.volume_correction), std::abs(e3.volume_correction),
                      std::abs(e4.volume_correction)});
    }
    return out;
}

namespace {

double state_distance(const SimState& a, const SimState& b, double dt)
{
    double d = 0;
    for (std::size_t q = 0; q < a.kappa_a.size(); ++q) {
        d = std::max(d, std::abs(a.kappa_a[q] - b.kappa_a[q]));
        d = std::max(d, dt * std::abs(a.kappa_a_dot[q] - b.kappa_a_dot[q]));
    }
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < a.omega_star[i][c].size(); ++p) {
                d = std::max(d, std::abs(a.omega_star[i][c][p] - b.omega_star[i][c][p]));
                d = std::max(d, std::abs(a.j_star[i][c][p] - b.j_star[i][c][p]));
            }
    return d;
}

double state_scale(const SimState& a)
{
    double s = 0;
    for (double x : a.kappa_a) s = std::max(s, std::abs(x));
    return s;
}

} // namespace

SimState picard_refine(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp, double dt, int n_iters,
                       StepInfo* info)
{
    EvalOptions opt;
    opt.variant = Remainder::R1;
    Evaluation e0 = evaluate(chart, s, pp, opt);
    SimState y0 = s;
    y0.omega_star = e0.omega;
    y0.j_star = e0.j;
    y0.gamma = e0.gamma;
    const Deriv f0 = deriv_of(y0, e0);

    SimState cur = apply(y0, scaled_deriv(f0, dt), s.t + dt);
    cur.gamma = e0.gamma;
    double prev = -1, worst_ratio = 0;
    int growing = 0, it = 1;
    for (; it < n_iters; ++it) {
        Evaluation ek = evaluate(chart, cur, pp, opt);
        Deriv acc = scaled_deriv(f0, 0.5 * dt);
        add(acc, deriv_of(cur, ek), 0.5 * dt);
        SimState next = apply(y0, acc, s.t + dt);
        next.gamma = ek.gamma;
        const double d = state_distance(next, cur, dt);
        if (prev > 0) {
            const double ratio = d / prev;
            worst_ratio = std::max(worst_ratio, ratio);
            growing = ratio > 1 ? growing + 1 : 0;
            if (growing >= 3) {
                std::ostringstream os;
                os << "Picard iterates grew for 3 consecutive iterations (last ratio " << ratio << ")";
                throw NoContraction(os.str());
            }
        }
        prev = d;
        cur = std::move(next);
        if (d <= pp.tol_picard * (1 + state_scale(cur))) {
            ++it;
            break;
        }
    }
    if (info) {
        info->contraction = worst_ratio;
        info->iterations = it;
    }
    return cur;
}

void project_state(const ReferenceChart& chart, SimState& s, const PlasmaParams& pp)
{
    InvertOptions io;
    io.tol = pp.tol_invert;
    const Torus& t = *chart.torus;
    Field guess = s.gamma.size() == t.size() ? s.gamma : flat_K_inverse(t, s.kappa_a, pp.a);
    s.gamma = invert_K(chart, s.kappa_a, pp.a, guess, io);
    EllipticOptions eo;
    eo.M = pp.M;
    eo.rho_plus = pp.rho_plus;
    eo.rho_minus = pp.rho_minus;
    Elliptic e(chart, s.gamma, eo);
    for (int i = 0; i < 2; ++i) {
        s.omega_star[i] = leray_project(e, side_of(i), s.omega_star[i]);
        s.j_star[i] = leray_project(e, side_of(i), s.j_star[i]);
    }
}

void WMonitor::push(const Evaluation& ev, double t)
{
    torus_ = &ev.e->torus();
    if (!hist_.empty() && t <= hist_.front().t) hist_.clear();
    hist_.push_front({t, ev.U, ev.ustar, ev.e->surface().normal, ev.frak_a});
    while (hist_.size() > 5) hist_.pop_back();
}

double WMonitor::residual() const
{
    if (!ready()) return 0;
    double r = 0;
    for (double x : residual_field()) r = std::max(r, std::abs(x));
    return r;
}

Field WMonitor::residual_field() const
{
    if (!ready()) throw InsufficientSamples("W residual needs five equally spaced steps");
    const double dt = hist_[0].t - hist_[1].t;
    for (int m = 1; m < 4; ++m)
        if (std::abs((hist_[m].t - hist_[m + 1].t) - dt) > 1e-9 * dt)
            throw InsufficientSamples("W residual needs five equally spaced steps");
    static const double c[5] = {25.0 / 12, -4.0, 3.0, -4.0 / 3, 0.25};
    const Entry& E = hist_[0];
    const std::size_t n = E.U[0].size();
    V3 dtU = make_v3(n);
    for (int m = 0; m < 5; ++m)
        for (int a = 0; a < 3; ++a)
            for (std::size_t k = 0; k < n; ++k) dtU[a][k] += c[m] * hist_[m].U[a][k] / dt;
    V3 DU = directional_v3(*torus_, E.ustar, E.U);
    Field r(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0;
        for (int a = 0; a < 3; ++a) s += E.normal[a][k] * (dtU[a][k] + DU[a][k] + E.frak[a][k]);
        r[k] = s;
    }
    return r;
}

namespace {

double fourier_norm2(const Torus& t, const Field& f, double s)
{
    CField F(t.nspec());
    t.forward(f.data(), F.data());
    const double nn = double(t.size());
    double r = 0;
    for (std::size_t q = 0; q < t.nspec(); ++q)
        r += t.herm_weight(q) * std::pow(1 + t.kk2(q), s) * std::norm(F[q] / nn);
    return r;
}

} // namespace

Energies energy_functionals(const Evaluation& ev, const SimState& s, const PlasmaParams& pp)
{
    Energies E;
    const Elliptic& e = *ev.e;
    const Torus& t = e.torus();
    const auto& sg = e.surface();
    const std::size_t n = t.size();
    const double rho[2] = {pp.rho_plus, pp.rho_minus};
    for (int i = 0; i < 2; ++i) {
        const BulkGrid& g = e.grid(side_of(i));
        Field kv(g.size()), kh(g.size()), oj(g.size());
        for (std::size_t p = 0; p < g.size(); ++p) {
            double a = 0, b = 0, c = 0;
            for (int q = 0; q < 3; ++q) {
                a += ev.v[i][q][p] * ev.v[i][q][p];
                b += ev.h[i][q][p] * ev.h[i][q][p];
                c += ev.omega[i][q][p] * ev.omega[i][q][p] + ev.j[i][q][p] * ev.j[i][q][p];
            }
            kv[p] = a;
            kh[p] = b;
            oj[p] = c;
        }
        E.kinetic += 0.5 * rho[i] * slab_integral(g, kv);
        E.magnetic += 0.5 * rho[i] * slab_integral(g, kh);
        E.E2 += slab_integral(g, oj);
    }
    E.area = area(t, sg);
    E.E0 = E.kinetic + E.magnetic + pp.alpha * pp.alpha * E.area;

    const double a2 = pp.a * pp.a;
    Field F(n);
    {
        Field dtf(n);
        for (std::size_t k = 0; k < n; ++k) dtf[k] = s.kappa_a_dot[k] - a2 * ev.dgamma[k];
        Field Du = directional(t, ev.ustar, sg.kappa);
        for (std::size_t k = 0; k < n; ++k) F[k] = dtf[k] + Du[k];
    }
    E.E1 = fourier_norm2(t, F, 0.5) + pp.alpha * pp.alpha * fourier_norm2(t, sg.kappa, 2.0) +
           fourier_norm2(t, sg.kappa, 1.5);
    for (const auto& f : {s.flux.v_plus, s.flux.v_minus, s.flux.h_plus, s.flux.h_minus}) E.E3 += f[0] * f[0] + f[1] * f[1];

    // E_l at l = 0
    auto quad = [&](const Field& f) {
        Field Nf = e.ntilde(f), pr(n);
        for (std::size_t k = 0; k < n; ++k) pr[k] = Nf[k] * f[k];
        return surface_integral(t, sg, pr);
    };
    V3 w = axpy_v3(-1.0, ev.V[1], ev.V[0]);
    C2 wc = chart_components(sg, w), hp = chart_components(sg, ev.H[0]), hm = chart_components(sg, ev.H[1]);
    Field Nk = e.ntilde(sg.kappa);
    V3 gN = tangential_gradient(t, sg, Nk);
    const double lam = pp.lambda();
    E.El = quad(F) + pp.alpha * pp.alpha * surface_integral(t, sg, nodewise_dot(gN, gN)) -
           pp.c() * quad(directional(t, wc, sg.kappa)) + lam * quad(directional(t, hp, sg.kappa)) +
           (1 - lam) * quad(directional(t, hm, sg.kappa));
    return E;
}

SimState make_state(const ReferenceChart& chart, const Field& gamma, const Field& dgamma, const PlasmaParams& pp,
                    const WallFlux& flux)
{
    SimState s;
    s.kappa_a = forward_K(chart, gamma, pp.a);
    s.kappa_a_dot = dK_apply(chart, gamma, dgamma, pp.a);
    const std::size_t N = std::size_t(pp.M + 1) * chart.size();
    for (int i = 0; i < 2; ++i) {
        s.omega_star[i] = make_v3(N);
        s.j_star[i] = make_v3(N);
    }
    s.flux = flux;
    s.gamma = gamma;
    return s;
}

} // namespace cvsheet
