#include "cvsheet/geometry.hpp"

#include "cvsheet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cvsheet {

namespace {

// Spectral derivative of a field of doubles or jets.
Field deriv(const Torus& t, const Field& f, int dir) { return t.d(f, dir); }

TField<Jet> deriv(const Torus& t, const TField<Jet>& f, int dir)
{
    const std::size_t n = f.size();
    Field a(n), b(n), c(n);
    for (std::size_t k = 0; k < n; ++k) {
        a[k] = f[k].c0;
        b[k] = f[k].c1;
        c[k] = f[k].c2;
    }
    a = t.d(a, dir);
    b = t.d(b, dir);
    c = t.d(c, dir);
    TField<Jet> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = Jet(a[k], b[k], c[k]);
    return out;
}

template <class T>
SurfaceGeometryT<T> build(const ReferenceChart& chart, const TField<T>& gamma)
{
    const Torus& t = *chart.torus;
    const std::size_t n = t.size();
    SurfaceGeometryT<T> sg;
    Field X = chart.node_x(), Y = chart.node_y();

    TV3<T> P;  // periodic part of Phi
    for (int c = 0; c < 3; ++c) {
        P[c].resize(n);
        for (std::size_t k = 0; k < n; ++k) P[c][k] = T(chart.Fp[c][k]) + gamma[k] * T(chart.nu[c][k]);
    }
    for (int c = 0; c < 3; ++c) {
        sg.phi[c] = P[c];
        const Field& base = c == 0 ? X : Y;
        if (c < 2)
            for (std::size_t k = 0; k < n; ++k) sg.phi[c][k] += T(base[k]);
    }
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 3; ++c) {
            sg.dphi[i][c] = deriv(t, P[c], i);
            if (c == i)
                for (auto& v : sg.dphi[i][c]) v += T(1.0);
        }
    for (int c = 0; c < 3; ++c) {
        TField<T> p1 = deriv(t, P[c], 0), p2 = deriv(t, P[c], 1);
        sg.ddphi[0][c] = deriv(t, p1, 0);
        sg.ddphi[1][c] = deriv(t, p1, 1);
        sg.ddphi[2][c] = deriv(t, p2, 1);
    }
    for (int q = 0; q < 3; ++q) {
        sg.g[q].resize(n);
        sg.ginv[q].resize(n);
        sg.ii[q].resize(n);
        sg.chr[0][q].resize(n);
        sg.chr[1][q].resize(n);
    }
    sg.sqrtg.resize(n);
    sg.kappa.resize(n);
    for (int c = 0; c < 3; ++c) sg.normal[c].resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        T a[2][3], dd[3][3];
        for (int i = 0; i < 2; ++i)
            for (int c = 0; c < 3; ++c) a[i][c] = sg.dphi[i][c][k];
        for (int q = 0; q < 3; ++q)
            for (int c = 0; c < 3; ++c) dd[q][c] = sg.ddphi[q][c][k];
        T g11 = a[0][0] * a[0][0] + a[0][1] * a[0][1] + a[0][2] * a[0][2];
        T g12 = a[0][0] * a[1][0] + a[0][1] * a[1][1] + a[0][2] * a[1][2];
        T g22 = a[1][0] * a[1][0] + a[1][1] * a[1][1] + a[1][2] * a[1][2];
        T det = g11 * g22 - g12 * g12;
        using std::sqrt;
        T sq = sqrt(det);
        T gi11 = g22 / det, gi12 = -g12 / det, gi22 = g11 / det;
        sg.g[0][k] = g11;
        sg.g[1][k] = g12;
        sg.g[2][k] = g22;
        sg.ginv[0][k] = gi11;
        sg.ginv[1][k] = gi12;
        sg.ginv[2][k] = gi22;
        sg.sqrtg[k] = sq;
        // n = Phi_1 x Phi_2 / sqrt(g): +z for the flat chart
        T nn[3] = {(a[0][1] * a[1][2] - a[0][2] * a[1][1]) / sq, (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / sq,
                   (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / sq};
        for (int c = 0; c < 3; ++c) sg.normal[c][k] = nn[c];
        for (int q = 0; q < 3; ++q) {
            T iiq = -(nn[0] * dd[q][0] + nn[1] * dd[q][1] + nn[2] * dd[q][2]);
            sg.ii[q][k] = iiq;
            // Gamma^m_ij = g^ml Phi_l . Phi_ij
            T p0 = a[0][0] * dd[q][0] + a[0][1] * dd[q][1] + a[0][2] * dd[q][2];
            T p1 = a[1][0] * dd[q][0] + a[1][1] * dd[q][1] + a[1][2] * dd[q][2];
            sg.chr[0][q][k] = gi11 * p0 + gi12 * p1;
            sg.chr[1][q][k] = gi12 * p0 + gi22 * p1;
        }
        T kap = gi11 * sg.ii[0][k] + T(2.0) * gi12 * sg.ii[1][k] + gi22 * sg.ii[2][k];
        sg.kappa[k] = kap;
    }
    return sg;
}

} // namespace

Field ReferenceChart::node_x() const
{
    Field f(size());
    for (int i = 0; i < torus->n1(); ++i)
        for (int j = 0; j < torus->n2(); ++j) f[std::size_t(i) * torus->n2() + j] = torus->x(i);
    return f;
}

Field ReferenceChart::node_y() const
{
    Field f(size());
    for (int i = 0; i < torus->n1(); ++i)
        for (int j = 0; j < torus->n2(); ++j) f[std::size_t(i) * torus->n2() + j] = torus->y(j);
    return f;
}

ReferenceChart ReferenceChart::flat(std::shared_ptr<const Torus> t, double z0)
{
    ReferenceChart c;
    const std::size_t n = t->size();
    c.torus = std::move(t);
    c.z0 = z0;
    c.Fp = make_v3(n);
    c.nu = make_v3(n);
    for (std::size_t k = 0; k < n; ++k) {
        c.Fp[2][k] = z0;
        c.nu[2][k] = 1.0;
    }
    return c;
}

ReferenceChart ReferenceChart::tilted(std::shared_ptr<const Torus> t, double z0, double angle)
{
    ReferenceChart c = flat(std::move(t), z0);
    for (std::size_t k = 0; k < c.size(); ++k) {
        c.nu[0][k] = std::sin(angle);
        c.nu[2][k] = std::cos(angle);
    }
    return c;
}

ReferenceChart ReferenceChart::bumped(std::shared_ptr<const Torus> t, double z0, double b)
{
    ReferenceChart c = flat(std::move(t), z0);
    Field X = c.node_x(), Y = c.node_y();
    for (std::size_t k = 0; k < c.size(); ++k)
        c.Fp[2][k] = z0 + b * std::sin(2 * M_PI * X[k]) * std::cos(2 * M_PI * Y[k]);
    SurfaceGeometry s = immerse(c, Field(c.size(), 0.0));
    c.nu = s.normal;
    return c;
}

void ReferenceChart::validate() const
{
    SurfaceGeometry s = build<double>(*this, Field(size(), 0.0));
    for (std::size_t k = 0; k < size(); ++k) {
        double len = std::sqrt(nu[0][k] * nu[0][k] + nu[1][k] * nu[1][k] + nu[2][k] * nu[2][k]);
        if (std::abs(len - 1.0) > 1e-12) throw ChartViolation("transversal field is not unit length");
        double dot = nu[0][k] * s.normal[0][k] + nu[1][k] * s.normal[1][k] + nu[2][k] * s.normal[2][k];
        if (dot < 0.9) throw ChartViolation("nu . n_* below 9/10");
        double z = Fp[2][k];
        if (1.0 - std::abs(z) < c0) throw ChartViolation("reference surface within c0 of a wall");
    }
}

void check_height(const ReferenceChart& chart, const Field& gamma)
{
    const Torus& t = *chart.torus;
    Field gx = t.dx(gamma), gy = t.dy(gamma);
    double mg = 0, md = 0;
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        if (!std::isfinite(gamma[k])) throw ChartViolation("non-finite height");
        mg = std::max(mg, std::abs(gamma[k]));
        md = std::max(md, std::hypot(gx[k], gy[k]));
    }
    if (mg > chart.closeness_delta || md > chart.closeness_delta) {
        std::ostringstream os;
        os << "max|gamma| = " << mg << ", max|grad gamma| = " << md << " exceed closeness_delta "
           << chart.closeness_delta;
        throw ChartViolation(os.str());
    }
}

SurfaceGeometry immerse(const ReferenceChart& chart, const Field& gamma)
{
    check_height(chart, gamma);
    SurfaceGeometry sg = build<double>(chart, gamma);
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        double d = sg.g[0][k] * sg.g[2][k] - sg.g[1][k] * sg.g[1][k];
        double tr = sg.g[0][k] + sg.g[2][k];
        double lmin = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * d)));
        if (!(lmin > 0)) throw DegenerateMetric("metric not positive definite");
    }
    return sg;
}

SurfaceGeometryT<Jet> immerse_jet(const ReferenceChart& chart, const Field& g0, const Field& g1, const Field& g2)
{
    TField<Jet> g(g0.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = Jet(g0[k], g1[k], g2[k]);
    return build<Jet>(chart, g);
}

Field laplace_beltrami(const Torus& t, const SurfaceGeometry& sg, const Field& f)
{
    const std::size_t n = f.size();
    Field f1 = t.dx(f), f2 = t.dy(f);
    Field a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
        a[k] = sg.sqrtg[k] * (sg.ginv[0][k] * f1[k] + sg.ginv[1][k] * f2[k]);
        b[k] = sg.sqrtg[k] * (sg.ginv[1][k] * f1[k] + sg.ginv[2][k] * f2[k]);
    }
    Field out(n);
    t.div_levels(a.data(), b.data(), out.data(), 1);
    for (std::size_t k = 0; k < n; ++k) out[k] /= sg.sqrtg[k];
    return out;
}

V3 laplace_beltrami(const Torus& t, const SurfaceGeometry& sg, const V3& f)
{
    return {laplace_beltrami(t, sg, f[0]), laplace_beltrami(t, sg, f[1]), laplace_beltrami(t, sg, f[2])};
}

std::array<Field, 2> chart_components(const SurfaceGeometry& sg, const V3& X)
{
    const std::size_t n = X[0].size();
    std::array<Field, 2> c{Field(n), Field(n)};
    for (std::size_t k = 0; k < n; ++k) {
        double p0 = 0, p1 = 0;
        for (int d = 0; d < 3; ++d) {
            p0 += X[d][k] * sg.dphi[0][d][k];
            p1 += X[d][k] * sg.dphi[1][d][k];
        }
        c[0][k] = sg.ginv[0][k] * p0 + sg.ginv[1][k] * p1;
        c[1][k] = sg.ginv[1][k] * p0 + sg.ginv[2][k] * p1;
    }
    return c;
}

V3 from_chart(const SurfaceGeometry& sg, const std::array<Field, 2>& c)
{
    const std::size_t n = c[0].size();
    V3 X = make_v3(n);
    for (std::size_t k = 0; k < n; ++k)
        for (int d = 0; d < 3; ++d) X[d][k] = c[0][k] * sg.dphi[0][d][k] + c[1][k] * sg.dphi[1][d][k];
    return X;
}

V3 tangential_gradient(const Torus& t, const SurfaceGeometry& sg, const Field& f)
{
    const std::size_t n = f.size();
    Field f1 = t.dx(f), f2 = t.dy(f);
    std::array<Field, 2> c{Field(n), Field(n)};
    for (std::size_t k = 0; k < n; ++k) {
        c[0][k] = sg.ginv[0][k] * f1[k] + sg.ginv[1][k] * f2[k];
        c[1][k] = sg.ginv[1][k] * f1[k] + sg.ginv[2][k] * f2[k];
    }
    return from_chart(sg, c);
}

Field surface_divergence(const Torus& t, const SurfaceGeometry& sg, const V3& X)
{
    // Div X = (1/sqrt g) d_i(sqrt g X^i) + kappa X.n
    const std::size_t n = X[0].size();
    auto c = chart_components(sg, X);
    Field a(n), b(n), out(n);
    for (std::size_t k = 0; k < n; ++k) {
        a[k] = sg.sqrtg[k] * c[0][k];
        b[k] = sg.sqrtg[k] * c[1][k];
    }
    t.div_levels(a.data(), b.data(), out.data(), 1);
    for (std::size_t k = 0; k < n; ++k) {
        double xn = X[0][k] * sg.normal[0][k] + X[1][k] * sg.normal[1][k] + X[2][k] * sg.normal[2][k];
        out[k] = out[k] / sg.sqrtg[k] + sg.kappa[k] * xn;
    }
    return out;
}

Field directional(const Torus& t, const std::array<Field, 2>& J, const Field& f)
{
    Field f1 = t.dx(f), f2 = t.dy(f);
    for (std::size_t k = 0; k < f.size(); ++k) f1[k] = J[0][k] * f1[k] + J[1][k] * f2[k];
    return f1;
}

std::array<Field, 3> hessian(const Torus& t, const SurfaceGeometry& sg, const Field& f)
{
    const std::size_t n = f.size();
    Field f1 = t.dx(f), f2 = t.dy(f);
    std::array<Field, 3> h{t.dx(f1), t.dy(f1), t.dy(f2)};
    for (int q = 0; q < 3; ++q)
        for (std::size_t k = 0; k < n; ++k) h[q][k] -= sg.chr[0][q][k] * f1[k] + sg.chr[1][q][k] * f2[k];
    return h;
}

double surface_integral(const Torus& t, const SurfaceGeometry& sg, const Field& f)
{
    double s = 0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * sg.sqrtg[k];
    return s * t.cell_area();
}

double area(const Torus& t, const SurfaceGeometry& sg)
{
    double s = 0;
    for (double v : sg.sqrtg) s += v;
    return s * t.cell_area();
}

double surface_mean(const Torus& t, const SurfaceGeometry& sg, const Field& f)
{
    return surface_integral(t, sg, f) / area(t, sg);
}

Field tensor_dot(const SurfaceGeometry& sg, const std::array<Field, 3>& A, const std::array<Field, 3>& B)
{
    const std::size_t n = A[0].size();
    Field out(n);
    for (std::size_t k = 0; k < n; ++k) {
        double g11 = sg.ginv[0][k], g12 = sg.ginv[1][k], g22 = sg.ginv[2][k];
        // raise both indices of B
        double b11 = B[0][k], b12 = B[1][k], b22 = B[2][k];
        double u11 = g11 * g11 * b11 + 2 * g11 * g12 * b12 + g12 * g12 * b22;
        double u12 = g11 * g12 * b11 + (g11 * g22 + g12 * g12) * b12 + g12 * g22 * b22;
        double u22 = g12 * g12 * b11 + 2 * g12 * g22 * b12 + g22 * g22 * b22;
        out[k] = A[0][k] * u11 + 2 * A[1][k] * u12 + A[2][k] * u22;
    }
    return out;
}

std::array<Field, 4> tensor_compose(const SurfaceGeometry& sg, const std::array<Field, 3>& A,
                                    const std::array<Field, 3>& B)
{
    const std::size_t n = A[0].size();
    std::array<Field, 4> out{Field(n), Field(n), Field(n), Field(n)};
    for (std::size_t k = 0; k < n; ++k) {
        double a[2][2] = {{A[0][k], A[1][k]}, {A[1][k], A[2][k]}};
        double b[2][2] = {{B[0][k], B[1][k]}, {B[1][k], B[2][k]}};
        double gi[2][2] = {{sg.ginv[0][k], sg.ginv[1][k]}, {sg.ginv[1][k], sg.ginv[2][k]}};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double s = 0;
                for (int l = 0; l < 2; ++l)
                    for (int m = 0; m < 2; ++m) s += a[i][l] * gi[l][m] * b[m][j];
                out[2 * i + j][k] = s;
            }
    }
    return out;
}

Field ii_form(const SurfaceGeometry& sg, const std::array<Field, 2>& a, const std::array<Field, 2>& b)
{
    const std::size_t n = a[0].size();
    Field out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = sg.ii[0][k] * a[0][k] * b[0][k] + sg.ii[1][k] * (a[0][k] * b[1][k] + a[1][k] * b[0][k]) +
                 sg.ii[2][k] * a[1][k] * b[1][k];
    return out;
}

double simons_residual(const Torus& t, const SurfaceGeometry& sg)
{
    const std::size_t n = sg.kappa.size();
    // T_kij = nabla_k II_ij, stored as T[k][q] with q in (11, 12, 22)
    const int I[3] = {0, 0, 1}, J[3] = {0, 1, 1};
    auto qidx = [](int i, int j) { return i + j; };  // (0,0)->0, (0,1)/(1,0)->1, (1,1)->2
    auto chr = [&](int m, int i, int j, std::size_t k) { return sg.chr[m][qidx(i, j)][k]; };
    auto II = [&](int i, int j, std::size_t k) { return sg.ii[qidx(i, j)][k]; };

    std::array<std::array<Field, 3>, 2> T;
    for (int kd = 0; kd < 2; ++kd)
        for (int q = 0; q < 3; ++q) {
            Field d = t.d(sg.ii[q], kd);
            for (std::size_t p = 0; p < n; ++p) {
                double s = d[p];
                for (int m = 0; m < 2; ++m)
                    s -= chr(m, kd, I[q], p) * II(m, J[q], p) + chr(m, kd, J[q], p) * II(I[q], m, p);
                d[p] = s;
            }
            T[kd][q] = std::move(d);
        }
    auto Tk = [&](int kd, int i, int j, std::size_t p) { return T[kd][qidx(i, j)][p]; };
    // Delta II_ij = g^kl (d_l T_kij - Gamma^m_lk T_mij - Gamma^m_li T_kmj - Gamma^m_lj T_kim)
    std::array<Field, 3> lap{Field(n, 0.0), Field(n, 0.0), Field(n, 0.0)};
    for (int kd = 0; kd < 2; ++kd)
        for (int q = 0; q < 3; ++q)
            for (int ld = 0; ld < 2; ++ld) {
                Field dT = t.d(T[kd][q], ld);
                for (std::size_t p = 0; p < n; ++p) {
                    double gkl = sg.ginv[qidx(kd, ld)][p];
                    double s = dT[p];
                    for (int m = 0; m < 2; ++m)
                        s -= chr(m, ld, kd, p) * Tk(m, I[q], J[q], p) + chr(m, ld, I[q], p) * Tk(kd, m, J[q], p) +
                             chr(m, ld, J[q], p) * Tk(kd, I[q], m, p);
                    lap[q][p] += gkl * s;
                }
            }
    auto hk = hessian(t, sg, sg.kappa);
    auto iiii = tensor_compose(sg, sg.ii, sg.ii);
    Field ii2 = tensor_dot(sg, sg.ii, sg.ii);
    std::array<Field, 3> R;
    for (int q = 0; q < 3; ++q) {
        R[q].resize(n);
        int comp = q == 0 ? 0 : (q == 1 ? 1 : 3);
        for (std::size_t p = 0; p < n; ++p)
            R[q][p] = lap[q][p] - hk[q][p] - sg.kappa[p] * iiii[comp][p] + ii2[p] * sg.ii[q][p];
    }
    Field r2 = tensor_dot(sg, R, R);
    double m = 0;
    for (double v : r2) m = std::max(m, std::sqrt(std::max(v, 0.0)));
    return m;
}

double codazzi_residual(const Torus& t, const SurfaceGeometry& sg)
{
    V3 ln = laplace_beltrami(t, sg, sg.normal);
    V3 gk = tangential_gradient(t, sg, sg.kappa);
    Field ii2 = tensor_dot(sg, sg.ii, sg.ii);
    double m = 0;
    for (std::size_t p = 0; p < sg.kappa.size(); ++p) {
        double s = 0;
        for (int c = 0; c < 3; ++c) {
            double r = ln[c][p] + ii2[p] * sg.normal[c][p] - gk[c][p];
            s += r * r;
        }
        m = std::max(m, std::sqrt(s));
    }
    return m;
}

double EvolutionResidual::max() const { return std::max({normal, metric, second_form, curvature, area}); }

EvolutionResidual geometry_evolution_residual(const ReferenceChart& chart, const std::vector<Field>& gammas,
                                              double dt, const V3& velocity)
{
    if (gammas.size() < 3) throw InsufficientSamples("need at least 3 time levels");
    const Torus& t = *chart.torus;
    const std::size_t mid = gammas.size() / 2;
    SurfaceGeometry a = immerse(chart, gammas[mid - 1]);
    SurfaceGeometry s = immerse(chart, gammas[mid]);
    SurfaceGeometry b = immerse(chart, gammas[mid + 1]);
    const std::size_t n = s.kappa.size();
    auto ddt = [&](double x1, double x0) { return (x1 - x0) / (2 * dt); };

    std::array<V3, 2> dv{V3{t.dx(velocity[0]), t.dx(velocity[1]), t.dx(velocity[2])},
                         V3{t.dy(velocity[0]), t.dy(velocity[1]), t.dy(velocity[2])}};
    std::array<V3, 3> ddv;
    for (int c = 0; c < 3; ++c) {
        ddv[0][c] = t.dx(dv[0][c]);
        ddv[1][c] = t.dy(dv[0][c]);
        ddv[2][c] = t.dy(dv[1][c]);
    }
    V3 lapv = laplace_beltrami(t, s, velocity);
    EvolutionResidual r;
    std::array<Field, 3> A;
    for (int q = 0; q < 3; ++q) A[q].resize(n);
    const int I[3] = {0, 0, 1}, J[3] = {0, 1, 1};
    for (std::size_t k = 0; k < n; ++k)
        for (int q = 0; q < 3; ++q) {
            double v = 0;
            for (int c = 0; c < 3; ++c)
                v += 0.5 * (dv[I[q]][c][k] * s.dphi[J[q]][c][k] + dv[J[q]][c][k] * s.dphi[I[q]][c][k]);
            A[q][k] = v;
        }
    Field iiA = tensor_dot(s, s.ii, A);
    for (std::size_t k = 0; k < n; ++k) {
        // d_t n = -g^ij (n . v_,j) Phi_,i
        double nv[2];
        for (int j = 0; j < 2; ++j)
            nv[j] = s.normal[0][k] * dv[j][0][k] + s.normal[1][k] * dv[j][1][k] + s.normal[2][k] * dv[j][2][k];
        double c0 = -(s.ginv[0][k] * nv[0] + s.ginv[1][k] * nv[1]);
        double c1 = -(s.ginv[1][k] * nv[0] + s.ginv[2][k] * nv[1]);
        for (int c = 0; c < 3; ++c) {
            double pred = c0 * s.dphi[0][c][k] + c1 * s.dphi[1][c][k];
            r.normal = std::max(r.normal, std::abs(ddt(b.normal[c][k], a.normal[c][k]) - pred));
        }
        for (int q = 0; q < 3; ++q) {
            r.metric = std::max(r.metric, std::abs(ddt(b.g[q][k], a.g[q][k]) - 2 * A[q][k]));
            double pred = 0;
            for (int c = 0; c < 3; ++c)
                pred -= s.normal[c][k] * (ddv[q][c][k] - s.chr[0][q][k] * dv[0][c][k] - s.chr[1][q][k] * dv[1][c][k]);
            r.second_form = std::max(r.second_form, std::abs(ddt(b.ii[q][k], a.ii[q][k]) - pred));
        }
        double nl = s.normal[0][k] * lapv[0][k] + s.normal[1][k] * lapv[1][k] + s.normal[2][k] * lapv[2][k];
        r.curvature = std::max(r.curvature, std::abs(ddt(b.kappa[k], a.kappa[k]) - (-nl - 2 * iiA[k])));
    }
    // d/dt |Gamma| = int Div_Gamma v dS
    double dA = ddt(area(t, b), area(t, a));
    r.area = std::abs(dA - surface_integral(t, s, surface_divergence(t, s, velocity)));
    return r;
}

} // namespace cvsheet
