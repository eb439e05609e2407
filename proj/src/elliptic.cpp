#include "cvsheet/elliptic.hpp"

#include "cvsheet/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <mutex>
#include <sstream>

namespace cvsheet {

namespace {

std::shared_ptr<const Cheb> cheb_for(int M)
{
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const Cheb>> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto& c = cache[M];
    if (!c) c = std::make_shared<const Cheb>(M);
    return c;
}

// sinh(k s)/sinh(k d) and k cosh(k s)/sinh(k d) without overflow.
void profile(double k, double s, double d, double& p, double& dp)
{
    if (k == 0) {
        p = s / d;
        dp = 1.0 / d;
        return;
    }
    double e = std::exp(k * (s - d)), den = -std::expm1(-2 * k * d), es = std::exp(-2 * k * s);
    p = e * (1 - es) / den;
    dp = k * e * (1 + es) / den;
}

void fwd(const Torus& t, const double* in, cplx* out, int L, bool par)
{
    if (par)
        t.forward(in, out, L);
    else
        for (int l = 0; l < L; ++l) t.forward(in + l * t.size(), out + l * t.nspec(), 1);
}

void inv(const Torus& t, const cplx* in, double* out, int L, bool par)
{
    if (par)
        t.inverse(in, out, L);
    else
        for (int l = 0; l < L; ++l) t.inverse(in + l * t.nspec(), out + l * t.size(), 1);
}

void dz_impl(const BulkGrid& g, const double* f, double* out, bool par)
{
    const int L = g.levels();
    const std::size_t n = g.n;
    const Cheb& c = *g.cheb;
#pragma omp parallel for if (par)
    for (int l = 0; l < L; ++l) {
        double* o = out + l * n;
        for (std::size_t k = 0; k < n; ++k) o[k] = 0;
        for (int m = 0; m < L; ++m) {
            const double w = g.sz * c.Dij(l, m);
            const double* fm = f + m * n;
            for (std::size_t k = 0; k < n; ++k) o[k] += w * fm[k];
        }
    }
}

// L u and, optionally, the flux component (K grad u)_3 at every node.
void L_kernel(const BulkGrid& g, const Field& u, Field& out, Field* flux3, bool par)
{
    const Torus& t = *g.torus;
    const int L = g.levels();
    const std::size_t ns = t.nspec(), N = g.size();
    CField U(ns * L), G(ns * L);
    fwd(t, u.data(), U.data(), L, par);
    Field ux(N), uy(N), uz(N);
    const cplx I(0, 1);
    for (int l = 0; l < L; ++l)
        for (std::size_t s = 0; s < ns; ++s) G[l * ns + s] = I * t.kx(s) * U[l * ns + s];
    inv(t, G.data(), ux.data(), L, par);
    for (int l = 0; l < L; ++l)
        for (std::size_t s = 0; s < ns; ++s) G[l * ns + s] = I * t.ky(s) * U[l * ns + s];
    inv(t, G.data(), uy.data(), L, par);
    dz_impl(g, u.data(), uz.data(), par);
    Field F1(N), F2(N), F3(N);
    const auto& K = g.K;
#pragma omp parallel for if (par)
    for (std::size_t i = 0; i < N; ++i) {
        F1[i] = K[0][i] * ux[i] + K[1][i] * uy[i] + K[2][i] * uz[i];
        F2[i] = K[1][i] * ux[i] + K[3][i] * uy[i] + K[4][i] * uz[i];
        F3[i] = K[2][i] * ux[i] + K[4][i] * uy[i] + K[5][i] * uz[i];
    }
    CField A(ns * L);
    fwd(t, F1.data(), A.data(), L, par);
    fwd(t, F2.data(), G.data(), L, par);
    // Nyquist slots have no first derivative; give them the flat second
    // derivative so the operator stays invertible there.
    for (int l = 0; l < L; ++l)
        for (std::size_t s = 0; s < ns; ++s) {
            std::size_t q = l * ns + s;
            A[q] = I * (t.kx(s) * A[q] + t.ky(s) * G[q]) - (t.kk2(s) - t.kd2(s)) * U[q];
        }
    out.resize(N);
    inv(t, A.data(), out.data(), L, par);
    Field dF(N);
    dz_impl(g, F3.data(), dF.data(), par);
    for (std::size_t i = 0; i < N; ++i) out[i] += dF[i];
    if (flux3) *flux3 = std::move(F3);
}

int mode_key(const Torus& t, std::size_t s) { return t.mx(s) * t.mx(s) + t.my(s) * t.my(s); }

using Mat = Eigen::MatrixXd;
using LU = Eigen::PartialPivLU<Mat>;

// Rows of the flat 1-D operator for one slab, written into A at offset o.
void flat_rows(Mat& A, int o, const Cheb& c, double sz, double k2, BC iface, BC wall, double flux_scale)
{
    const int M = c.M;
    Mat D(M + 1, M + 1);
    for (int i = 0; i <= M; ++i)
        for (int j = 0; j <= M; ++j) D(i, j) = c.Dij(i, j);
    Mat D2 = D * D;
    for (int l = 1; l < M; ++l) {
        for (int m = 0; m <= M; ++m) A(o + l, o + m) = -sz * sz * D2(l, m);
        A(o + l, o + l) += k2;
    }
    if (iface == BC::dirichlet)
        A(o, o) = 1;
    else
        for (int m = 0; m <= M; ++m) A(o, o + m) = flux_scale * sz * D(0, m);
    if (wall == BC::dirichlet)
        A(o + M, o + M) = 1;
    else
        for (int m = 0; m <= M; ++m) A(o + M, o + m) = sz * D(M, m);
}

// Applies a per-mode dense solve across all spectral slots. blocks: number
// of stacked slabs; in/out have blocks*(M+1)*n (+1 when bordered) entries.
void modal_solve(const Torus& t, int M, int blocks, bool bordered, const std::map<int, LU>& lus,
                 const LU* zero_bordered, const Field& in, Field& out)
{
    const int L = M + 1;
    const std::size_t n = t.size(), ns = t.nspec();
    const int B = blocks * L;
    CField R(ns * B);
    t.forward(in.data(), R.data(), B);
    const int dim0 = B + (bordered ? 1 : 0);
    out.resize(in.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::size_t s = 0; s < ns; ++s) {
        if (s == 0 && bordered) {
            Eigen::VectorXd b(dim0);
            for (int r = 0; r < B; ++r) b(r) = R[r * ns].real() / double(n);
            b(B) = in[std::size_t(B) * n];
            Eigen::VectorXd x = zero_bordered->solve(b);
            for (int r = 0; r < B; ++r) R[r * ns] = x(r) * double(n);
            out[std::size_t(B) * n] = x(B);
            continue;
        }
        const LU& lu = lus.at(mode_key(t, s));
        Eigen::MatrixXd b(B, 2);
        for (int r = 0; r < B; ++r) {
            b(r, 0) = R[r * ns + s].real();
            b(r, 1) = R[r * ns + s].imag();
        }
        Eigen::MatrixXd x = lu.solve(b);
        for (int r = 0; r < B; ++r) R[r * ns + s] = cplx(x(r, 0), x(r, 1));
    }
    t.inverse(R.data(), out.data(), B);
}

std::string divergence_message(const char* what, const KrylovStats& st)
{
    std::ostringstream os;
    os << what << ": GMRES stalled at relative residual " << st.residual << " after " << st.iterations
       << " iterations";
    return os.str();
}

} // namespace

// ---------------------------------------------------------------------------
// Harmonic coordinates

Field flat_extension(const BulkGrid& g, const Field& f, Field* dz)
{
    const Torus& t = *g.torus;
    const int L = g.levels();
    const std::size_t ns = t.nspec();
    CField F(ns), E(ns * L), Ez(ns * L);
    t.forward(f.data(), F.data());
    const double d = g.depth(), sgn = g.side == Side::plus ? 1.0 : -1.0;
    for (int l = 0; l < L; ++l) {
        double s = std::abs(g.zlev[l] - g.zw);
        for (std::size_t q = 0; q < ns; ++q) {
            double p, dp;
            profile(std::sqrt(t.kk2(q)), s, d, p, dp);
            E[l * ns + q] = p * F[q];
            Ez[l * ns + q] = sgn * dp * F[q];
        }
    }
    Field out(g.size());
    t.inverse(E.data(), out.data(), L);
    if (dz) {
        dz->resize(g.size());
        t.inverse(Ez.data(), dz->data(), L);
    }
    return out;
}

namespace {

BulkGrid make_grid(const ReferenceChart& chart, const SurfaceGeometry& sg, int M, Side side)
{
    BulkGrid g;
    g.side = side;
    g.torus = chart.torus;
    g.cheb = cheb_for(M);
    g.M = M;
    g.z0 = chart.z0;
    g.zw = side == Side::plus ? -1.0 : 1.0;
    g.n = chart.size();
    const double d = g.depth();
    g.sz = side == Side::plus ? 2.0 / d : -2.0 / d;
    g.zlev.resize(M + 1);
    for (int l = 0; l <= M; ++l) {
        double xi = g.cheb->xi[l];
        g.zlev[l] = side == Side::plus ? g.z0 - d * (1 - xi) / 2 : g.z0 + d * (1 - xi) / 2;
    }
    const std::size_t n = g.n, N = g.size();
    const Torus& t = *g.torus;
    Field X0 = chart.node_x(), Y0 = chart.node_y();
    std::array<Field, 3> disp;
    for (int c = 0; c < 3; ++c) {
        disp[c].resize(n);
        for (std::size_t k = 0; k < n; ++k)
            disp[c][k] = sg.phi[c][k] - (c == 0 ? X0[k] : c == 1 ? Y0[k] : g.z0);
    }
    g.X = make_v3(N);
    for (auto& a : g.DX) a.assign(N, 0.0);
    for (int c = 0; c < 3; ++c) {
        Field dz;
        Field D = flat_extension(g, disp[c], &dz);
        Field dx(N), dy(N);
        t.grad_levels(D.data(), dx.data(), dy.data(), g.levels());
        for (int l = 0; l <= M; ++l)
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t i = l * n + k;
                double base = c == 0 ? X0[k] : c == 1 ? Y0[k] : g.zlev[l];
                g.X[c][i] = base + D[i];
                g.DX[3 * c + 0][i] = dx[i] + (c == 0);
                g.DX[3 * c + 1][i] = dy[i] + (c == 1);
                g.DX[3 * c + 2][i] = dz[i] + (c == 2);
            }
    }
    g.J.resize(N);
    for (auto& a : g.DXi) a.resize(N);
    for (auto& a : g.K) a.resize(N);
    double jmin = 1e300;
    for (std::size_t i = 0; i < N; ++i) {
        Eigen::Matrix3d A;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) A(r, c) = g.DX[3 * r + c][i];
        double J = A.determinant();
        jmin = std::min(jmin, J);
        Eigen::Matrix3d Ai = A.inverse();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) g.DXi[3 * r + c][i] = Ai(r, c);
        Eigen::Matrix3d Km = J * Ai * Ai.transpose();
        g.J[i] = J;
        g.K[0][i] = Km(0, 0);
        g.K[1][i] = Km(0, 1);
        g.K[2][i] = Km(0, 2);
        g.K[3][i] = Km(1, 1);
        g.K[4][i] = Km(1, 2);
        g.K[5][i] = Km(2, 2);
    }
    if (!(jmin > 0)) {
        std::ostringstream os;
        os << "harmonic coordinates fold (min Jacobian " << jmin << ")";
        throw FoldedMap(os.str());
    }
    g.sqrtg = sg.sqrtg;
    return g;
}

} // namespace

BulkPair harmonic_coordinates(const ReferenceChart& chart, const SurfaceGeometry& sg, int M)
{
    return {make_grid(chart, sg, M, Side::plus), make_grid(chart, sg, M, Side::minus)};
}

BulkPair harmonic_coordinates(const ReferenceChart& chart, const Field& gamma, int M)
{
    return harmonic_coordinates(chart, immerse(chart, gamma), M);
}

// ---------------------------------------------------------------------------
// Bulk calculus

void dz_levels(const BulkGrid& g, const double* f, double* out, bool parallel) { dz_impl(g, f, out, parallel); }

V3 grad_y(const BulkGrid& g, const Field& u)
{
    V3 G = make_v3(g.size());
    g.torus->grad_levels(u.data(), G[0].data(), G[1].data(), g.levels());
    dz_impl(g, u.data(), G[2].data(), true);
    return G;
}

Field div_y(const BulkGrid& g, const V3& F)
{
    Field out(g.size()), dz(g.size());
    g.torus->div_levels(F[0].data(), F[1].data(), out.data(), g.levels());
    dz_impl(g, F[2].data(), dz.data(), true);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += dz[i];
    return out;
}

V3 grad_x(const BulkGrid& g, const Field& u)
{
    V3 G = grad_y(g, u), out = make_v3(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (int j = 0; j < 3; ++j)
            out[j][i] = g.DXi[0 + j][i] * G[0][i] + g.DXi[3 + j][i] * G[1][i] + g.DXi[6 + j][i] * G[2][i];
    return out;
}

std::array<Field, 9> jacobian_x(const BulkGrid& g, const V3& v)
{
    std::array<Field, 9> out;
    for (int c = 0; c < 3; ++c) {
        V3 G = grad_x(g, v[c]);
        for (int j = 0; j < 3; ++j) out[3 * c + j] = std::move(G[j]);
    }
    return out;
}

Field conormal(const BulkGrid& g, const Field& u, int l)
{
    V3 G = grad_y(g, u);
    Field out(g.n);
    for (std::size_t k = 0; k < g.n; ++k) {
        std::size_t i = l * g.n + k;
        out[k] = g.K[2][i] * G[0][i] + g.K[4][i] * G[1][i] + g.K[5][i] * G[2][i];
    }
    return out;
}

V3 piola(const BulkGrid& g, const V3& Y)
{
    V3 P = make_v3(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (int a = 0; a < 3; ++a)
            P[a][i] = g.J[i] * (g.DXi[3 * a][i] * Y[0][i] + g.DXi[3 * a + 1][i] * Y[1][i] + g.DXi[3 * a + 2][i] * Y[2][i]);
    return P;
}

V3 piola_inverse(const BulkGrid& g, const V3& P)
{
    V3 Y = make_v3(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (int c = 0; c < 3; ++c)
            Y[c][i] = (g.DX[3 * c][i] * P[0][i] + g.DX[3 * c + 1][i] * P[1][i] + g.DX[3 * c + 2][i] * P[2][i]) / g.J[i];
    return Y;
}

Field level(const BulkGrid& g, const Field& u, int l)
{
    return Field(u.begin() + l * g.n, u.begin() + (l + 1) * g.n);
}

void set_level(const BulkGrid& g, Field& u, int l, const Field& v)
{
    std::copy(v.begin(), v.end(), u.begin() + l * g.n);
}

void apply_L(const BulkGrid& g, const Field& u, Field& out) { L_kernel(g, u, out, nullptr, true); }
void apply_L_serial(const BulkGrid& g, const Field& u, Field& out) { L_kernel(g, u, out, nullptr, false); }

// ---------------------------------------------------------------------------
// Flat per-mode solver

struct FlatModeSolver::Impl {
    const Torus* t;
    int M;
    bool bordered;
    std::map<int, LU> lus;
    std::unique_ptr<LU> zero;
};

FlatModeSolver::FlatModeSolver(const BulkGrid& g, BC iface, BC wall, bool bordered)
{
    auto impl = std::make_shared<Impl>();
    impl->t = g.torus.get();
    impl->M = g.M;
    impl->bordered = bordered;
    const Torus& t = *g.torus;
    const int L = g.M + 1;
    for (std::size_t s = 0; s < t.nspec(); ++s) {
        int key = mode_key(t, s);
        if (impl->lus.count(key)) continue;
        Mat A = Mat::Zero(L, L);
        flat_rows(A, 0, *g.cheb, g.sz, t.kk2(s), iface, wall, 1.0);
        impl->lus.emplace(key, LU(A));
    }
    if (bordered) {
        Mat A = Mat::Zero(L + 1, L + 1);
        flat_rows(A, 0, *g.cheb, g.sz, 0.0, iface, wall, 1.0);
        for (int l = 1; l < g.M; ++l) A(l, L) = 1;
        A(L, 0) = 1;
        impl->zero = std::make_unique<LU>(A);
    }
    impl_ = impl;
}

void FlatModeSolver::apply(const Field& in, Field& out) const
{
    modal_solve(*impl_->t, impl_->M, 1, impl_->bordered, impl_->lus, impl_->zero.get(), in, out);
}

// ---------------------------------------------------------------------------
// Slab solver

SlabSolver::SlabSolver(const BulkGrid& g, BC iface, BC wall, double rtol)
    : g_(&g), iface_(iface), wall_(wall), bordered_(iface == BC::conormal && wall == BC::conormal), rtol_(rtol),
      pre_(g, iface, wall, iface == BC::conormal && wall == BC::conormal)
{
}

Field SlabSolver::solve(const Field& rhs, const Field& iface_data, const Field& wall_data, const Field* guess) const
{
    const BulkGrid& g = *g_;
    const std::size_t n = g.n, N = g.size();
    const int M = g.M;
    const std::size_t dim = N + (bordered_ ? 1 : 0);
    Field b(dim, 0.0);
    for (std::size_t i = n; i < std::size_t(M) * n; ++i) b[i] = rhs[i];
    for (std::size_t k = 0; k < n; ++k) {
        b[k] = iface_data.empty() ? 0.0 : iface_data[k];
        b[M * n + k] = wall_data.empty() ? 0.0 : wall_data[k];
    }
    LinOp A = [&](const Field& x, Field& y) {
        Field u(x.begin(), x.begin() + N), Lu, F3;
        L_kernel(g, u, Lu, &F3, true);
        y.assign(dim, 0.0);
        const double c = bordered_ ? x[N] : 0.0;
        for (std::size_t i = n; i < std::size_t(M) * n; ++i) y[i] = -Lu[i] + c;
        for (std::size_t k = 0; k < n; ++k) {
            y[k] = iface_ == BC::dirichlet ? u[k] : F3[k];
            y[M * n + k] = wall_ == BC::dirichlet ? u[M * n + k] : F3[M * n + k];
        }
        if (bordered_) {
            double s = 0;
            for (std::size_t k = 0; k < n; ++k) s += u[k];
            y[N] = s / double(n);
        }
    };
    LinOp P = [&](const Field& x, Field& y) { pre_.apply(x, y); };
    Field x;
    if (guess) {
        x = *guess;
        x.resize(dim, 0.0);
    } else {
        P(b, x);
    }
    KrylovStats st = gmres(A, P, b, x, rtol_, 40, 800);
    stats_.solves++;
    stats_.iterations += st.iterations;
    stats_.worst_residual = std::max(stats_.worst_residual, st.residual);
    if (!st.converged) throw SolverDivergence(divergence_message("slab Poisson solve", st));
    x.resize(N);
    return x;
}

// ---------------------------------------------------------------------------
// Transmission solver

struct TransmissionSolver::Pre {
    const Torus* t;
    int M;
    bool bordered;
    std::map<int, LU> lus;
    std::unique_ptr<LU> zero;
};

TransmissionSolver::TransmissionSolver(const BulkGrid& gp, const BulkGrid& gm, double rho_p, double rho_m,
                                       WallMode mode, double rtol)
    : gp_(&gp), gm_(&gm), rp_(rho_p), rm_(rho_m), mode_(mode), rtol_(rtol),
      bordered_(mode == WallMode::torus_slab)
{
    auto pre = std::make_shared<Pre>();
    const Torus& t = *gp.torus;
    const int M = gp.M, L = M + 1;
    pre->t = &t;
    pre->M = M;
    pre->bordered = bordered_;
    const BC wall_p = mode == WallMode::torus_slab ? BC::conormal : BC::dirichlet;
    auto build = [&](double k2, bool border) {
        Mat A = Mat::Zero(2 * L + border, 2 * L + border);
        flat_rows(A, 0, *gp.cheb, gp.sz, k2, BC::dirichlet, wall_p, 1.0);
        flat_rows(A, L, *gm.cheb, gm.sz, k2, BC::dirichlet, BC::conormal, 1.0);
        // continuity on plus level 0, flux balance on minus level 0
        A.row(0).setZero();
        A(0, 0) = 1;
        A(0, L) = -1;
        A.row(L).setZero();
        for (int m = 0; m <= M; ++m) {
            A(L, m) = gp.sz * gp.cheb->Dij(0, m) / rho_p;
            A(L, L + m) = -gm.sz * gm.cheb->Dij(0, m) / rho_m;
        }
        if (border) {
            for (int l = 1; l < M; ++l) {
                A(l, 2 * L) = 1;
                A(L + l, 2 * L) = 1;
            }
            A(2 * L, 0) = 1;
        }
        return A;
    };
    for (std::size_t s = 0; s < t.nspec(); ++s) {
        int key = mode_key(t, s);
        if (!pre->lus.count(key)) pre->lus.emplace(key, LU(build(t.kk2(s), false)));
    }
    if (bordered_) pre->zero = std::make_unique<LU>(build(0.0, true));
    pre_ = pre;
}

std::pair<Field, Field> TransmissionSolver::solve(const Field& q) const
{
    const BulkGrid &gp = *gp_, &gm = *gm_;
    const std::size_t n = gp.n, N = gp.size();
    const int M = gp.M;
    const std::size_t dim = 2 * N + (bordered_ ? 1 : 0);
    Field b(dim, 0.0);
    for (std::size_t k = 0; k < n; ++k) b[N + k] = q[k];
    LinOp A = [&](const Field& x, Field& y) {
        Field up(x.begin(), x.begin() + N), um(x.begin() + N, x.begin() + 2 * N), Lp, Lm, Fp, Fm;
        L_kernel(gp, up, Lp, &Fp, true);
        L_kernel(gm, um, Lm, &Fm, true);
        y.assign(dim, 0.0);
        const double c = bordered_ ? x[2 * N] : 0.0;
        for (std::size_t i = n; i < std::size_t(M) * n; ++i) {
            y[i] = -Lp[i] + c;
            y[N + i] = -Lm[i] + c;
        }
        for (std::size_t k = 0; k < n; ++k) {
            y[k] = up[k] - um[k];
            y[N + k] = Fp[k] / rp_ - Fm[k] / rm_;
            std::size_t w = M * n + k;
            y[w] = mode_ == WallMode::torus_slab ? Fp[w] : up[w];
            y[N + w] = Fm[w];
        }
        if (bordered_) {
            double s = 0;
            for (std::size_t k = 0; k < n; ++k) s += up[k];
            y[2 * N] = s / double(n);
        }
    };
    LinOp P = [&](const Field& x, Field& y) {
        modal_solve(*pre_->t, pre_->M, 2, pre_->bordered, pre_->lus, pre_->zero.get(), x, y);
    };
    Field x;
    P(b, x);
    KrylovStats st = gmres(A, P, b, x, rtol_, 40, 800);
    stats_.solves++;
    stats_.iterations += st.iterations;
    stats_.worst_residual = std::max(stats_.worst_residual, st.residual);
    if (!st.converged) throw SolverDivergence(divergence_message("transmission solve", st));
    return {Field(x.begin(), x.begin() + N), Field(x.begin() + N, x.begin() + 2 * N)};
}

// ---------------------------------------------------------------------------
// Interface operators

Elliptic::Elliptic(const ReferenceChart& chart, const Field& gamma, const EllipticOptions& opt)
    : chart_(&chart), opt_(opt), sg_(immerse(chart, gamma))
{
    build();
}

Elliptic::Elliptic(const ReferenceChart& chart, const SurfaceGeometry& sg, const EllipticOptions& opt)
    : chart_(&chart), opt_(opt), sg_(sg)
{
    build();
}

void Elliptic::build() { grids_ = harmonic_coordinates(*chart_, sg_, opt_.M); }

const SlabSolver& Elliptic::solver(Side s, BC iface, BC wall) const
{
    int key = (s == Side::plus ? 0 : 4) + (iface == BC::dirichlet ? 0 : 2) + (wall == BC::dirichlet ? 0 : 1);
    auto& p = solvers_[key];
    if (!p) p = std::make_unique<SlabSolver>(grid(s), iface, wall, opt_.rtol);
    return *p;
}

const TransmissionSolver& Elliptic::transmission() const
{
    if (!trans_)
        trans_ = std::make_unique<TransmissionSolver>(grids_.plus, grids_.minus, opt_.rho_plus, opt_.rho_minus,
                                                      opt_.mode, opt_.rtol);
    return *trans_;
}

namespace {
BC wall_bc(Side s, WallMode m) { return (s == Side::plus && m == WallMode::closed_interior) ? BC::dirichlet : BC::conormal; }
} // namespace

Field Elliptic::extend(Side s, const Field& f) const
{
    const BulkGrid& g = grid(s);
    Field zero(g.size(), 0.0);
    return solver(s, BC::dirichlet, wall_bc(s, opt_.mode)).solve(zero, f, {});
}

Field Elliptic::dn_of(Side s, const Field& ext) const
{
    const BulkGrid& g = grid(s);
    Field c = conormal(g, ext, 0);
    const double sgn = s == Side::plus ? 1.0 : -1.0;
    for (std::size_t k = 0; k < c.size(); ++k) c[k] *= sgn / sg_.sqrtg[k];
    return c;
}

Field Elliptic::dn(Side s, const Field& f) const { return dn_of(s, extend(s, f)); }

Field Elliptic::nbar(const Field& f) const
{
    Field a = dn(Side::plus, f), b = dn(Side::minus, f);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = a[k] / opt_.rho_plus + b[k] / opt_.rho_minus;
    return a;
}

double Elliptic::mean(const Field& f) const { return surface_mean(torus(), sg_, f); }

Field Elliptic::project(const Field& f) const
{
    double m = mean(f);
    Field out(f);
    for (auto& v : out) v -= m;
    return out;
}

Field Elliptic::nbar_inverse(const Field& f, Field* ext_p, Field* ext_m) const
{
    Field q = project(f);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] *= sg_.sqrtg[k];
    auto [up, um] = transmission().solve(q);
    Field psi = level(grid(Side::plus), up, 0);
    if (opt_.mode == WallMode::torus_slab) {
        double m = mean(psi);
        for (auto& v : psi) v -= m;
        for (auto& v : up) v -= m;
        for (auto& v : um) v -= m;
    }
    if (ext_p) *ext_p = std::move(up);
    if (ext_m) *ext_m = std::move(um);
    return psi;
}

Field Elliptic::ntilde(const Field& f) const
{
    Field r = dn(Side::minus, f);
    for (auto& v : r) v /= opt_.rho_minus;
    Field ep;
    nbar_inverse(r, &ep, nullptr);
    Field out = dn_of(Side::plus, ep);
    for (auto& v : out) v /= opt_.rho_plus;
    return out;
}

Field Elliptic::dn_inverse(Side s, const Field& f) const
{
    const BulkGrid& g = grid(s);
    Field q = project(f);
    const double sgn = s == Side::plus ? 1.0 : -1.0;
    for (std::size_t k = 0; k < q.size(); ++k) q[k] *= sgn * sg_.sqrtg[k];
    BC wall = wall_bc(s, opt_.mode);
    Field u = solver(s, BC::conormal, wall).solve(Field(g.size(), 0.0), q, {});
    Field psi = level(g, u, 0);
    if (wall == BC::conormal) psi = project(psi);
    return psi;
}

Field Elliptic::dirichlet_poisson(Side s, const Field& f) const
{
    const BulkGrid& g = grid(s);
    Field rhs(g.size());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = g.J[i] * f[i];
    return solver(s, BC::dirichlet, wall_bc(s, opt_.mode)).solve(rhs, {}, {});
}

SolveStats Elliptic::stats() const
{
    SolveStats s;
    auto add = [&](const SolveStats& o) {
        s.solves += o.solves;
        s.iterations += o.iterations;
        s.worst_residual = std::max(s.worst_residual, o.worst_residual);
    };
    for (auto& [k, p] : solvers_) add(p->stats());
    if (trans_) add(trans_->stats());
    return s;
}

} // namespace cvsheet
