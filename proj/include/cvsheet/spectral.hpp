#pragma once

#include <array>
#include <complex>
#include <memory>
#include <vector>

namespace cvsheet {

using Field = std::vector<double>;
using V3 = std::array<Field, 3>;
using cplx = std::complex<double>;
using CField = std::vector<cplx>;

V3 make_v3(std::size_t n, double v = 0.0);

// Periodic n1 x n2 grid on the unit torus [0,1)^2 with FFTW-backed spectral
// derivatives. Node (i,j) sits at (i/n1, j/n2); storage is i*n2 + j.
// Bulk arrays hold `levels` consecutive 2-D planes.
class Torus {
public:
    Torus(int n1, int n2);
    ~Torus();
    Torus(const Torus&) = delete;
    Torus& operator=(const Torus&) = delete;

    int n1() const { return n1_; }
    int n2() const { return n2_; }
    std::size_t size() const { return std::size_t(n1_) * n2_; }
    std::size_t nspec() const { return std::size_t(n1_) * (n2_ / 2 + 1); }
    double x(int i) const { return double(i) / n1_; }
    double y(int j) const { return double(j) / n2_; }
    double cell_area() const { return 1.0 / (double(n1_) * n2_); }

    // Wavenumbers of spectral slot s (2*pi*m). Nyquist entries are zero for
    // first derivatives; kk2 keeps the true |k|^2 for second-order symbols.
    double kx(std::size_t s) const { return kx_[s]; }
    double ky(std::size_t s) const { return ky_[s]; }
    double kk2(std::size_t s) const { return kk2_[s]; }
    // Symbol of the composed first derivatives (Nyquist rows drop out).
    double kd2(std::size_t s) const { return kx_[s] * kx_[s] + ky_[s] * ky_[s]; }
    int mx(std::size_t s) const { return mx_[s]; }
    int my(std::size_t s) const { return my_[s]; }
    // Weight of slot s in Parseval sums over the half spectrum.
    double herm_weight(std::size_t s) const { return hw_[s]; }

    void forward(const double* in, cplx* out, int levels = 1) const;
    // Normalized: inverse(forward(f)) == f.
    void inverse(const cplx* in, double* out, int levels = 1) const;

    Field dx(const Field& f) const;
    Field dy(const Field& f) const;
    // Derivative along chart direction d (0 -> x, 1 -> y).
    Field d(const Field& f, int dir) const { return dir == 0 ? dx(f) : dy(f); }
    void grad_levels(const double* f, double* fx, double* fy, int levels) const;
    // fx_out = d/dx(a) + d/dy(b), for `levels` planes.
    void div_levels(const double* a, const double* b, double* out, int levels) const;

    // Keep |m1| <= n1/3, |m2| <= n2/3 (2/3 rule).
    void dealias(Field& f) const;
    void dealias_levels(double* f, int levels) const;
    bool dealias_keep(std::size_t s) const { return keep_[s]; }

    double mean(const Field& f) const;

private:
    int n1_, n2_;
    std::vector<double> kx_, ky_, kk2_, hw_;
    std::vector<int> mx_, my_;
    std::vector<char> keep_;
    struct Plans;
    std::unique_ptr<Plans> plans_;
};

// Chebyshev-Gauss-Lobatto nodes xi_j = cos(pi j/M) on [-1,1] with the
// collocation derivative matrix and Clenshaw-Curtis weights.
struct Cheb {
    int M = 0;
    std::vector<double> xi;
    std::vector<double> D;  // (M+1)^2 row-major
    std::vector<double> w;  // quadrature weights, sum 2
    explicit Cheb(int M);
    double Dij(int i, int j) const { return D[std::size_t(i) * (M + 1) + j]; }
};

} // namespace cvsheet
