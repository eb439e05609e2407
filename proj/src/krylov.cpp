#include "cvsheet/krylov.hpp"

#include <cmath>

namespace cvsheet {

double dot(const Field& a, const Field& b)
{
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Field& a) { return std::sqrt(dot(a, a)); }

double norm_inf(const Field& a)
{
    double m = 0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

KrylovStats gmres(const LinOp& A, const LinOp& M, const Field& b, Field& x, double rtol, int restart, int max_iter)
{
    const std::size_t n = b.size();
    KrylovStats st;
    const double bnorm = norm2(b);
    if (x.size() != n) x.assign(n, 0.0);
    if (bnorm == 0) {
        std::fill(x.begin(), x.end(), 0.0);
        st.converged = true;
        return st;
    }
    Field r(n), w(n), z(n);
    std::vector<Field> V(restart + 1, Field(n));
    std::vector<double> H(std::size_t(restart + 1) * restart), cs(restart), sn(restart), g(restart + 1);
    auto h = [&](int i, int j) -> double& { return H[std::size_t(i) * restart + j]; };

    while (st.iterations < max_iter) {
        A(x, w);
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - w[i];
        double beta = norm2(r);
        st.residual = beta / bnorm;
        if (st.residual <= rtol) {
            st.converged = true;
            return st;
        }
        for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        int k = 0;
        for (; k < restart && st.iterations < max_iter; ++k) {
            ++st.iterations;
            M(V[k], z);
            A(z, w);
            for (int i = 0; i <= k; ++i) {
                h(i, k) = dot(w, V[i]);
                for (std::size_t q = 0; q < n; ++q) w[q] -= h(i, k) * V[i][q];
            }
            double hn = norm2(w);
            h(k + 1, k) = hn;
            if (hn > 0)
                for (std::size_t q = 0; q < n; ++q) V[k + 1][q] = w[q] / hn;
            for (int i = 0; i < k; ++i) {
                double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
                h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
                h(i, k) = t;
            }
            double den = std::hypot(h(k, k), h(k + 1, k));
            cs[k] = den > 0 ? h(k, k) / den : 1.0;
            sn[k] = den > 0 ? h(k + 1, k) / den : 0.0;
            h(k, k) = den;
            h(k + 1, k) = 0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            st.residual = std::abs(g[k + 1]) / bnorm;
            if (st.residual <= rtol || hn == 0) {
                ++k;
                break;
            }
        }
        // back-substitute and update x += M V y
        std::vector<double> y(k);
        for (int i = k - 1; i >= 0; --i) {
            double s = g[i];
            for (int j = i + 1; j < k; ++j) s -= h(i, j) * y[j];
            y[i] = s / h(i, i);
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (int j = 0; j < k; ++j)
            for (std::size_t q = 0; q < n; ++q) w[q] += y[j] * V[j][q];
        M(w, z);
        for (std::size_t q = 0; q < n; ++q) x[q] += z[q];
        if (st.residual <= rtol) {
            // confirm with the true residual
            A(x, w);
            for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - w[i];
            st.residual = norm2(r) / bnorm;
            if (st.residual <= rtol * 10) {
                st.converged = true;
                return st;
            }
        }
    }
    return st;
}

} // namespace cvsheet
