#pragma once

#include "cvsheet/spectral.hpp"

#include <functional>

namespace cvsheet {

using LinOp = std::function<void(const Field& in, Field& out)>;

struct KrylovStats {
    int iterations = 0;
    double residual = 0;  // final relative residual
    bool converged = false;
};

// Restarted GMRES with right preconditioning. x holds the initial guess on
// entry. Inner products are summed serially so results are reproducible.
KrylovStats gmres(const LinOp& A, const LinOp& M, const Field& b, Field& x, double rtol, int restart = 40,
                  int max_iter = 600);

double dot(const Field& a, const Field& b);
double norm2(const Field& a);
double norm_inf(const Field& a);

} // namespace cvsheet
