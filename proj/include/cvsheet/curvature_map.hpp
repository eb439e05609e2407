#pragma once

#include "cvsheet/geometry.hpp"

namespace cvsheet {

// Modified curvature K[gamma] = kappa o Phi + a^2 gamma on the reference grid.
Field forward_K(const ReferenceChart& chart, const Field& gamma, double a);

struct InvertOptions {
    double tol = -1;       // max-norm residual; negative means 1e-12 |ka| + 1e-14 a^2
    int max_iter = 200;
    bool newton = false;   // Newton-Krylov instead of the preconditioned fixed point
    double a_min = 1.0;
};

struct InvertReport {
    int iterations = 0;
    double residual = 0;
    double contraction = 0;  // largest observed ratio of successive residuals
};

// gamma with forward_K(gamma) = ka. The fixed point is
// gamma += (a^2 - Lap)^{-1} (ka - K[gamma]) with the flat chart Laplacian.
Field invert_K(const ReferenceChart& chart, const Field& ka, double a, const Field& guess,
               const InvertOptions& opt = {}, InvertReport* report = nullptr);

// First variation dK[gamma] q.
Field dK_apply(const ReferenceChart& chart, const Field& gamma, const Field& q, double a);
// q with dK[gamma] q = rhs (GMRES).
Field dK_solve(const ReferenceChart& chart, const Field& gamma, const Field& rhs, double a, double rtol = 1e-13);
// Taylor coefficients of K(g0 + s g1 + s^2 g2) in s.
std::array<Field, 3> K_jet(const ReferenceChart& chart, const Field& g0, const Field& g1, const Field& g2, double a);

// Applies (a^2 - Lap)^{-1} in Fourier space.
Field flat_K_inverse(const Torus& t, const Field& f, double a);

} // namespace cvsheet
