#include "cvsheet/curvature_map.hpp"

#include "cvsheet/errors.hpp"
#include "cvsheet/krylov.hpp"

#include <cmath>
#include <sstream>

namespace cvsheet {

Field forward_K(const ReferenceChart& chart, const Field& gamma, double a)
{
    SurfaceGeometry sg = immerse(chart, gamma);
    Field k = sg.kappa;
    for (std::size_t i = 0; i < k.size(); ++i) k[i] += a * a * gamma[i];
    return k;
}

Field flat_K_inverse(const Torus& t, const Field& f, double a)
{
    CField F(t.nspec());
    t.forward(f.data(), F.data());
    for (std::size_t s = 0; s < F.size(); ++s) F[s] /= a * a + t.kd2(s);
    Field out(f.size());
    t.inverse(F.data(), out.data());
    return out;
}

std::array<Field, 3> K_jet(const ReferenceChart& chart, const Field& g0, const Field& g1, const Field& g2, double a)
{
    auto sg = immerse_jet(chart, g0, g1, g2);
    const std::size_t n = g0.size();
    std::array<Field, 3> out{Field(n), Field(n), Field(n)};
    for (std::size_t i = 0; i < n; ++i) {
        out[0][i] = sg.kappa[i].c0 + a * a * g0[i];
        out[1][i] = sg.kappa[i].c1 + a * a * g1[i];
        out[2][i] = sg.kappa[i].c2 + a * a * g2[i];
    }
    return out;
}

Field dK_apply(const ReferenceChart& chart, const Field& gamma, const Field& q, double a)
{
    return K_jet(chart, gamma, q, Field(q.size(), 0.0), a)[1];
}

Field dK_solve(const ReferenceChart& chart, const Field& gamma, const Field& rhs, double a, double rtol)
{
    const Torus& t = *chart.torus;
    LinOp A = [&](const Field& in, Field& out) { out = dK_apply(chart, gamma, in, a); };
    LinOp M = [&](const Field& in, Field& out) { out = flat_K_inverse(t, in, a); };
    Field x = flat_K_inverse(t, rhs, a);
    KrylovStats st = gmres(A, M, rhs, x, rtol, 30, 300);
    if (!st.converged) {
        std::ostringstream os;
        os << "linearized curvature solve stalled at relative residual " << st.residual;
        throw SolverDivergence(os.str());
    }
    return x;
}

Field invert_K(const ReferenceChart& chart, const Field& ka, double a, const Field& guess, const InvertOptions& opt,
               InvertReport* report)
{
    if (a < opt.a_min) throw NoConvergence("a below a_min");
    const Torus& t = *chart.torus;
    const double tol = opt.tol > 0 ? opt.tol : 1e-12 * norm_inf(ka) + 1e-14 * a * a;
    Field gamma = guess;
    InvertReport rep;
    double prev = -1;
    for (int it = 0; it <= opt.max_iter; ++it) {
        Field r = forward_K(chart, gamma, a);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = ka[i] - r[i];
        double res = norm_inf(r);
        if (!std::isfinite(res)) throw NoConvergence("non-finite residual");
        if (prev > 0) rep.contraction = std::max(rep.contraction, res / prev);
        prev = res;
        rep.iterations = it;
        rep.residual = res;
        if (res <= tol) {
            if (report) *report = rep;
            return gamma;
        }
        Field d = opt.newton ? dK_solve(chart, gamma, r, a, 1e-10) : flat_K_inverse(t, r, a);
        for (std::size_t i = 0; i < d.size(); ++i) gamma[i] += d[i];
    }
    if (report) *report = rep;
    std::ostringstream os;
    os << "curvature map inversion residual " << rep.residual << " after " << opt.max_iter << " iterations";
    throw NoConvergence(os.str());
}

} // namespace cvsheet
