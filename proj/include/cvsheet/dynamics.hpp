#pragma once

#include "cvsheet/fields.hpp"

#include <deque>
#include <memory>
#include <string>
#include <vector>

namespace cvsheet {

struct PlasmaParams {
    double rho_plus = 1, rho_minus = 1;
    double alpha = 0;
    double a = 10;  // curvature-map constant
    int M = 16;     // Chebyshev levels per slab
    double dt = 1e-3, t_end = 0.1;
    double cfl = 0.5;
    double tol_picard = 1e-10;
    double tol_invert = -1;  // invert_K tolerance, negative means default
    bool dealias = true;

    double lambda() const { return rho_plus / (rho_plus + rho_minus); }
    double c() const { return rho_plus * rho_minus / ((rho_plus + rho_minus) * (rho_plus + rho_minus)); }
    void validate() const;
};

struct SimState {
    Field kappa_a, kappa_a_dot;
    std::array<V3, 2> omega_star, j_star;  // bulk, on the reference slabs
    WallFlux flux;
    double t = 0;
    Field gamma;  // last inverted height, warm start only
};

enum class Remainder { R0, R1 };

// Everything derived from one state: geometry, recovered fields, pressures
// and the time derivatives of every state component.
struct Evaluation {
    Field gamma, dgamma;  // gamma and d_t gamma
    std::shared_ptr<Elliptic> e;
    std::array<V3, 2> omega, j;  // Leray-projected
    std::array<V3, 2> v, h;
    PressureParts P;
    std::array<V3, 2> V, H;  // interface traces
    V3 U;                    // weighted velocity
    V3 frak_a;               // Dbar_t u = -frak_a
    Field r0, R0;
    Field Dt2_kappa;           // Dbar_t^2 kappa from the curvature equation
    Field dtt_gamma;
    std::array<Field, 2> ustar;  // chart components of U - d_t gamma nu
    Field kappa_tt;            // route used by the integrator
    Field kappa_tt_chain;      // kinematic oracle: second variation of K
    std::array<V3, 2> omega_dot, j_dot;
    WallFlux flux_dot;
    double volume_correction = 0;  // dS-mean of theta removed before recovery
};

struct EvalOptions {
    Remainder variant = Remainder::R0;
    bool chain_route = false;  // integrate with the kinematic route instead
    bool rates = true;         // bulk and wall-flux rates
    bool project = true;       // Leray-project omega_*, j_* before recovery
};

// u = lambda v+ + (1 - lambda) v- from interface traces; throws
// TraceMismatch if the normal traces differ.
V3 weighted_velocity(const Elliptic& e, const V3& v_plus, const V3& v_minus, double lambda, double tol = 1e-8);

// A f = -Lap_Gamma Ntilde f.
Field operator_A_apply(const Elliptic& e, const Field& f);
// R(J) f = D_J (D_J f) for chart components J.
Field operator_R_apply(const Torus& t, const std::array<Field, 2>& J, const Field& f);

// Terms of the curvature remainder, in order, for term-wise accounting.
struct RemainderTerms {
    Field normal_accel;   // -frak . Lap n  (frak = a or b)
    Field lap_u;          // 2 n.D_{(Lap u)^T} u
    Field hess;           // 4 <A, n.D^2 u>
    Field grad_sq;        // -kappa |[(grad u)* n]^T|^2
    Field ii_du;          // -2 <II, Du.Du>
    Field ii_a;           // 4 <II.A + A.II, A>
    Field shear;          // c {R(w) kappa - Lap II(w, w)}
    Field mag_plus, mag_minus;
    Field lap_r0;         // -Lap r0
    Field total() const;
};

// frak_a from pressures: (grad p+ + grad p-)/(rho+ + rho-) + c D_w w - ...
V3 acceleration_a(const Elliptic& e, const PressureParts& P, const std::array<V3, 2>& V, const std::array<V3, 2>& H,
                  const std::array<V3, 2>& v, const PlasmaParams& pp);
// The same vector with pressures rebuilt from q+- (the R1 bookkeeping).
V3 acceleration_b(const Elliptic& e, const PressureParts& P, const std::array<V3, 2>& V, const std::array<V3, 2>& H,
                  const std::array<V3, 2>& v, const PlasmaParams& pp);
// r0 = -(N+ - N-) p / (rho+ + rho-) - d_n [lambda (p_vv - p_hh)+ + (1 - lambda)(p_vv - p_hh)-].
Field r0_term(const Elliptic& e, const PressureParts& P, const PlasmaParams& pp);

RemainderTerms assemble_remainder(const Elliptic& e, const V3& U, const std::array<V3, 2>& V,
                                  const std::array<V3, 2>& H, const V3& frak, const Field& r0,
                                  const PlasmaParams& pp);

// Builds the full evaluation of a state. Throws NoConvergence, FoldedMap,
// CompatibilityViolation or TraceMismatch from the stages.
Evaluation evaluate(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp,
                    const EvalOptions& opt = {});

// d_tt kappa_a from a finished evaluation (both routes are stored in it).
const Field& kappa_accel(const Evaluation& ev);

// Largest stable dt for the current state.
double dt_limit(const Evaluation& ev, const PlasmaParams& pp);

struct BulkRates {
    std::array<V3, 2> omega_dot, j_dot;
    WallFlux flux_dot;
};
// Eulerian rates of omega_* and j_* on the reference slabs (including the
// motion d_t X of the harmonic coordinates) and the wall-flux rates.
BulkRates bulk_rates(const Elliptic& e, const std::array<V3, 2>& omega, const std::array<V3, 2>& j,
                     const std::array<V3, 2>& v, const std::array<V3, 2>& h, const Field& dgamma);

// Semi-Lagrangian characteristic step for xi = omega - j along v + h and
// eta = omega + j along v - h on the frozen geometry of e; the result is
// Leray-projected. Returns (omega, j).
std::pair<std::array<V3, 2>, std::array<V3, 2>> transport_step(const Elliptic& e, const std::array<V3, 2>& omega,
                                                               const std::array<V3, 2>& j,
                                                               const std::array<V3, 2>& v,
                                                               const std::array<V3, 2>& h, const Field& dgamma,
                                                               double dt);

// Explicit Euler update of the wall fluxes (the integrator uses the rates
// through its stage weights).
WallFlux update_wall_fluxes(const Evaluation& ev, const WallFlux& f, double dt);

struct StepInfo {
    double dt_limit = 0;
    double volume_correction = 0;
    double contraction = 0;
    int iterations = 0;
};

// Classical RK4 on (kappa_a, d_t kappa_a, omega_*, j_*, fluxes). Vorticity
// and current are re-projected at the end of the step. If first is given it
// must be the evaluation of s and is reused for the first stage.
SimState time_step(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp, double dt,
                   StepInfo* info = nullptr, const EvalOptions& opt = {}, const Evaluation* first = nullptr);

// Trapezoidal fixed-point iteration Y <- Y_n + dt/2 (F(Y_n) + F(Y)), with F
// assembled through the R1 remainder. n_iters = 1 is the explicit Euler step.
SimState picard_refine(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp, double dt,
                       int n_iters, StepInfo* info = nullptr);

// Leray projection of the bulk state on the geometry of gamma.
void project_state(const ReferenceChart& chart, SimState& s, const PlasmaParams& pp);

// Interface traces of previous steps; estimates Dbar_t u by one-sided
// differences and returns max |W . n+| with W = Dbar_t u + frak_a.
class WMonitor {
public:
    void push(const Evaluation& ev, double t);
    bool ready() const { return hist_.size() >= 5; }
    double residual() const;
    // W . n+ at the nodes of the newest entry.
    Field residual_field() const;
    void clear() { hist_.clear(); }

private:
    struct Entry {
        double t;
        V3 U;
        std::array<Field, 2> ustar;
        V3 normal, frak;
    };
    std::deque<Entry> hist_;
    const Torus* torus_ = nullptr;
};

struct Energies {
    double E0 = 0, E1 = 0, E2 = 0, E3 = 0, El = 0;
    double kinetic = 0, magnetic = 0, area = 0;
};
Energies energy_functionals(const Evaluation& ev, const SimState& s, const PlasmaParams& pp);

// Initial state for a height field: kappa_a = K[gamma], d_t kappa_a from
// d_t gamma, bulk vorticity/current zero.
SimState make_state(const ReferenceChart& chart, const Field& gamma, const Field& dgamma, const PlasmaParams& pp,
                    const WallFlux& flux);

} // namespace cvsheet
