#pragma once

#include "cvsheet/dynamics.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace cvsheet {

using Vec3 = std::array<double, 3>;

// Stability form Q(a) = lambda (a.h+)^2 + (1 - lambda)(a.h-)^2 - c (a.w)^2
// for a unit tangent a, lambda = rho+/(rho+ + rho-), c = rho+ rho-/(rho+ + rho-)^2.
double stability_form(const Vec3& a, const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m);

struct UpsilonResult {
    double value = 0;
    std::size_t node = 0;
    Vec3 direction{0, 0, 0};
};

// inf over nodes and unit tangent directions of the stability form: 720
// directions per node and one Newton step on the best one. hp, hm, w are
// ambient fields at the chart nodes; their normal parts are dropped.
UpsilonResult upsilon(const SurfaceGeometry& sg, const V3& hp, const V3& hm, const V3& w, double rho_p,
                      double rho_m);
UpsilonResult upsilon_serial(const SurfaceGeometry& sg, const V3& hp, const V3& hm, const V3& w, double rho_p,
                             double rho_m);
// Single planar point (tangent plane = xy).
UpsilonResult upsilon(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m);

// Smallest eigenvalue of the tangential tensor
// lambda h+ (x) h+ + (1 - lambda) h- (x) h- - c w (x) w, nodewise.
Field tensor_form_min_eig(const SurfaceGeometry& sg, const V3& hp, const V3& hm, const V3& w, double rho_p,
                          double rho_m);
double tensor_form_min_eig(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m);

// (rho+ + rho-)|h+ x h-|^2 > rho+|h+ x w|^2 + rho-|h- x w|^2, margin = lhs - rhs.
struct SyroCheck {
    std::vector<std::uint8_t> ok;
    Field margin;
    bool all() const;
    double min_margin() const;
};
SyroCheck check_syro_strict(const V3& hp, const V3& hm, const V3& w, double rho_p, double rho_m);
double syro_strict_margin(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m);

// first:  rho+|h+|^2 + rho-|h-|^2 > rho+ rho- / (rho+ + rho-) |w|^2
// second: (rho+ + rho-)|h+ x h-|^2 >= rho+|h+ x w|^2 + rho-|h- x w|^2
struct ClassicalCheck {
    std::vector<std::uint8_t> first, second;
    bool all_first() const;
    bool all_second() const;
};
ClassicalCheck check_syr_classical(const V3& hp, const V3& hm, const V3& w, double rho_p, double rho_m);
std::pair<bool, bool> syr_classical(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m);

// |h+ x h-| > max(|h+ x w|, |h- x w|) at every node.
bool check_strong_stability(const V3& hp, const V3& hm, const V3& w);
bool strong_stability(const Vec3& hp, const Vec3& hm, const Vec3& w);

struct StrictConditionReport {
    int samples = 0;
    int strict = 0;              // draws satisfying the strict condition
    int violations = 0;          // strict but Upsilon <= 0 or tensor eig < Upsilon - 1e-9
    int classical_violations = 0;  // strict but one of the classical conditions fails
    double homogeneity_error = 0;  // max |Upsilon(s h, s w) - s^2 Upsilon(h, w)| / s^2
};
// Random planar draws of (h+, h-, w, rho+-).
StrictConditionReport strict_condition_test(int n_samples, std::uint64_t seed = 1);

struct DispersionParams {
    double rho_plus = 1, rho_minus = 1;
    double d_plus = 1, d_minus = 1;  // slab depths
    double alpha = 0;
    Vec3 hp{0, 0, 0}, hm{0, 0, 0}, w{0, 0, 0};
};

struct Dispersion {
    double omega2 = 0;
    bool stable = true;
};

// Flat-state frequency squared in the frame moving with the weighted velocity:
// alpha^2 |k|^2 Ntilde(k) - c (w.k)^2 + lambda (h+.k)^2 + (1 - lambda)(h-.k)^2.
// Throws ZeroWavevector for k = 0.
Dispersion dispersion_rate(const std::array<double, 2>& k, const DispersionParams& p);

// Largest unstable |k| along direction (cos theta, sin theta), found by
// bisection; 0 if every k is stable, +inf if alpha = 0 and the direction is
// unstable.
double unstable_cutoff(double theta, const DispersionParams& p, double tol = 1e-12);

struct GrowthMeasurement {
    double omega2 = 0;
    double residual = 0;  // relative misfit of b'' = -omega^2 b
    int samples = 0;
};

// Runs the dynamics from s for steps of size dt and fits the Fourier
// amplitude b(t) of kappa_a at chart mode (m1, m2), demodulated by the mean
// interface velocity, to b'' = -omega^2 b. Throws NonlinearContamination if the
// relative fit residual exceeds 10%.
GrowthMeasurement measure_growth_rate(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp,
                                      std::array<int, 2> mode, double dt, int steps);
// Several modes from one run (linear modes do not interact).
std::vector<GrowthMeasurement> measure_growth_rates(const ReferenceChart& chart, const SimState& s,
                                                    const PlasmaParams& pp,
                                                    const std::vector<std::array<int, 2>>& modes, double dt,
                                                    int steps);

// Surface fields of an evaluation: interface traces of h+-, w = v+ - v-.
struct InterfaceFields {
    V3 hp, hm, w;
};
InterfaceFields interface_fields(const Evaluation& ev);

} // namespace cvsheet
