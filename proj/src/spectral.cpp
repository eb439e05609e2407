#include "cvsheet/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>

namespace cvsheet {

V3 make_v3(std::size_t n, double v) { return {Field(n, v), Field(n, v), Field(n, v)}; }

namespace {
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace

struct Torus::Plans {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
};

Torus::Torus(int n1, int n2) : n1_(n1), n2_(n2), plans_(std::make_unique<Plans>())
{
    const std::size_t ns = nspec();
    kx_.resize(ns);
    ky_.resize(ns);
    kk2_.resize(ns);
    hw_.resize(ns);
    mx_.resize(ns);
    my_.resize(ns);
    keep_.resize(ns);
    const int h2 = n2 / 2 + 1;
    for (int i = 0; i < n1; ++i) {
        int m1 = i <= n1 / 2 ? i : i - n1;
        bool nyq1 = (n1 % 2 == 0) && (i == n1 / 2);
        for (int j = 0; j < h2; ++j) {
            std::size_t s = std::size_t(i) * h2 + j;
            bool nyq2 = (n2 % 2 == 0) && (j == n2 / 2) && n2 > 1;
            int m2 = j;
            mx_[s] = m1;
            my_[s] = m2;
            double k1 = 2 * M_PI * m1, k2 = 2 * M_PI * m2;
            kx_[s] = nyq1 ? 0.0 : k1;
            ky_[s] = nyq2 ? 0.0 : k2;
            kk2_[s] = k1 * k1 + k2 * k2;
            // slots with 0 < j < n2/2 stand for themselves and their conjugates
            hw_[s] = (j == 0 || (n2 % 2 == 0 && j == n2 / 2)) ? 1.0 : 2.0;
            keep_[s] = (3 * std::abs(m1) <= n1 && 3 * m2 <= n2) ? 1 : 0;
            if (n2 == 1) keep_[s] = 3 * std::abs(m1) <= n1;
        }
    }
    std::lock_guard<std::mutex> lk(planner_mutex());
    std::vector<double> r(size());
    std::vector<cplx> c(ns);
    plans_->fwd = fftw_plan_dft_r2c_2d(n1, n2, r.data(), reinterpret_cast<fftw_complex*>(c.data()),
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_->inv = fftw_plan_dft_c2r_2d(n1, n2, reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
}

Torus::~Torus()
{
    std::lock_guard<std::mutex> lk(planner_mutex());
    fftw_destroy_plan(plans_->fwd);
    fftw_destroy_plan(plans_->inv);
}

void Torus::forward(const double* in, cplx* out, int levels) const
{
    const std::size_t n = size(), ns = nspec();
#pragma omp parallel for if (levels > 1)
    for (int l = 0; l < levels; ++l) {
        // out-of-place r2c preserves its input
        fftw_execute_dft_r2c(plans_->fwd, const_cast<double*>(in + l * n),
                             reinterpret_cast<fftw_complex*>(out + l * ns));
    }
}

void Torus::inverse(const cplx* in, double* out, int levels) const
{
    const std::size_t n = size(), ns = nspec();
    const double scale = 1.0 / double(n);
#pragma omp parallel for if (levels > 1)
    for (int l = 0; l < levels; ++l) {
        std::vector<cplx> tmp(in + l * ns, in + (l + 1) * ns);
        fftw_execute_dft_c2r(plans_->inv, reinterpret_cast<fftw_complex*>(tmp.data()), out + l * n);
        double* o = out + l * n;
        for (std::size_t k = 0; k < n; ++k) o[k] *= scale;
    }
}

Field Torus::dx(const Field& f) const
{
    Field out(size());
    grad_levels(f.data(), out.data(), nullptr, 1);
    return out;
}

Field Torus::dy(const Field& f) const
{
    Field out(size());
    grad_levels(f.data(), nullptr, out.data(), 1);
    return out;
}

void Torus::grad_levels(const double* f, double* fx, double* fy, int levels) const
{
    const std::size_t ns = nspec();
    CField F(ns * levels), G(ns * levels);
    forward(f, F.data(), levels);
    const cplx I(0, 1);
    if (fx) {
        for (int l = 0; l < levels; ++l)
            for (std::size_t s = 0; s < ns; ++s) G[l * ns + s] = I * kx_[s] * F[l * ns + s];
        inverse(G.data(), fx, levels);
    }
    if (fy) {
        for (int l = 0; l < levels; ++l)
            for (std::size_t s = 0; s < ns; ++s) G[l * ns + s] = I * ky_[s] * F[l * ns + s];
        inverse(G.data(), fy, levels);
    }
}

void Torus::div_levels(const double* a, const double* b, double* out, int levels) const
{
    const std::size_t ns = nspec();
    CField A(ns * levels), B(ns * levels);
    forward(a, A.data(), levels);
    forward(b, B.data(), levels);
    const cplx I(0, 1);
    for (int l = 0; l < levels; ++l)
        for (std::size_t s = 0; s < ns; ++s)
            A[l * ns + s] = I * (kx_[s] * A[l * ns + s] + ky_[s] * B[l * ns + s]);
    inverse(A.data(), out, levels);
}

void Torus::dealias(Field& f) const { dealias_levels(f.data(), 1); }

void Torus::dealias_levels(double* f, int levels) const
{
    const std::size_t ns = nspec();
    CField F(ns * levels);
    forward(f, F.data(), levels);
    for (int l = 0; l < levels; ++l)
        for (std::size_t s = 0; s < ns; ++s)
            if (!keep_[s]) F[l * ns + s] = 0.0;
    inverse(F.data(), f, levels);
}

double Torus::mean(const Field& f) const
{
    double s = 0;
    for (double v : f) s += v;
    return s / double(f.size());
}

Cheb::Cheb(int M_) : M(M_), xi(M_ + 1), D(std::size_t(M_ + 1) * (M_ + 1)), w(M_ + 1)
{
    const int N = M;
    for (int j = 0; j <= N; ++j) xi[j] = std::cos(M_PI * j / N);
    auto c = [&](int j) { return ((j == 0 || j == N) ? 2.0 : 1.0) * ((j % 2) ? -1.0 : 1.0); };
    for (int i = 0; i <= N; ++i) {
        double rowsum = 0;
        for (int j = 0; j <= N; ++j) {
            if (i == j) continue;
            double v = c(i) / c(j) / (xi[i] - xi[j]);
            D[std::size_t(i) * (N + 1) + j] = v;
            rowsum += v;
        }
        D[std::size_t(i) * (N + 1) + i] = -rowsum;
    }
    // Clenshaw-Curtis weights (Trefethen, Spectral Methods in MATLAB, clencurt)
    std::vector<double> v(N - 1, 1.0);
    if (N % 2 == 0) {
        w[0] = w[N] = 1.0 / (double(N) * N - 1);
        for (int k = 1; k < N / 2; ++k)
            for (int i = 1; i < N; ++i) v[i - 1] -= 2 * std::cos(2 * k * M_PI * i / N) / (4.0 * k * k - 1);
        for (int i = 1; i < N; ++i) v[i - 1] -= std::cos(N * M_PI * i / N) / (double(N) * N - 1);
    } else {
        w[0] = w[N] = 1.0 / (double(N) * N);
        for (int k = 1; k <= (N - 1) / 2; ++k)
            for (int i = 1; i < N; ++i) v[i - 1] -= 2 * std::cos(2 * k * M_PI * i / N) / (4.0 * k * k - 1);
    }
    for (int i = 1; i < N; ++i) w[i] = 2 * v[i - 1] / N;
}

} // namespace cvsheet
