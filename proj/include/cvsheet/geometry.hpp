#pragma once

#include "cvsheet/jet.hpp"
#include "cvsheet/spectral.hpp"

#include <array>
#include <memory>
#include <vector>

namespace cvsheet {

// Reference surface Gamma_* and transversal field nu on the periodic chart.
// F = (x, y, 0) + Fp with Fp periodic; the flat default is Fp = (0, 0, z0).
struct ReferenceChart {
    std::shared_ptr<const Torus> torus;
    V3 Fp;
    V3 nu;
    double z0 = 0.0;  // height of the flat computational interface plane
    double closeness_delta = 0.5;
    double c0 = 0.05;

    std::size_t size() const { return torus->size(); }
    Field node_x() const;
    Field node_y() const;

    static ReferenceChart flat(std::shared_ptr<const Torus> t, double z0);
    // Flat plane, nu tilted by `angle` radians towards +x.
    static ReferenceChart tilted(std::shared_ptr<const Torus> t, double z0, double angle);
    // Curved surface z = z0 + b sin(2 pi x) cos(2 pi y) with nu its unit normal.
    static ReferenceChart bumped(std::shared_ptr<const Torus> t, double z0, double b);
    // Throws ChartViolation if nu is not unit, nu.n_* < 9/10 or F_* is within c0 of a wall.
    void validate() const;
};

template <class T>
using TField = std::vector<T>;
template <class T>
using TV3 = std::array<TField<T>, 3>;

// All tensors of the immersed surface Phi = F + gamma nu at the chart nodes.
// Index pairs (11, 12, 22) are stored as [0], [1], [2].
template <class T>
struct SurfaceGeometryT {
    TV3<T> phi;                    // absolute position
    std::array<TV3<T>, 2> dphi;    // Phi_,i
    std::array<TV3<T>, 3> ddphi;   // Phi_,ij
    std::array<TField<T>, 3> g, ginv;
    TField<T> sqrtg;
    std::array<std::array<TField<T>, 3>, 2> chr;  // chr[k][ij] = Gamma^k_ij
    TV3<T> normal;
    std::array<TField<T>, 3> ii;
    TField<T> kappa;
};
using SurfaceGeometry = SurfaceGeometryT<double>;

struct HeightField {
    Field gamma;
};

SurfaceGeometry immerse(const ReferenceChart& chart, const Field& gamma);
// Jet version: gamma = g0 + s g1 + s^2 g2; no chart checks beyond the value part.
SurfaceGeometryT<Jet> immerse_jet(const ReferenceChart& chart, const Field& g0, const Field& g1,
                                  const Field& g2);

// Chart-validity gate: |gamma| and |grad gamma| below closeness_delta.
void check_height(const ReferenceChart& chart, const Field& gamma);

// Surface calculus on a fixed geometry.
Field laplace_beltrami(const Torus& t, const SurfaceGeometry& sg, const Field& f);
V3 laplace_beltrami(const Torus& t, const SurfaceGeometry& sg, const V3& f);
V3 tangential_gradient(const Torus& t, const SurfaceGeometry& sg, const Field& f);
// Chart components X^i = g^ij X.Phi_j of the tangential part of an ambient field.
std::array<Field, 2> chart_components(const SurfaceGeometry& sg, const V3& X);
V3 from_chart(const SurfaceGeometry& sg, const std::array<Field, 2>& c);
Field surface_divergence(const Torus& t, const SurfaceGeometry& sg, const V3& X);
// D_J f = J^i f_,i for chart components J.
Field directional(const Torus& t, const std::array<Field, 2>& J, const Field& f);
// Covariant Hessian (11, 12, 22) of a scalar.
std::array<Field, 3> hessian(const Torus& t, const SurfaceGeometry& sg, const Field& f);
// Weighted surface integral sum f sqrt(g) dA.
double surface_integral(const Torus& t, const SurfaceGeometry& sg, const Field& f);
double area(const Torus& t, const SurfaceGeometry& sg);
double surface_mean(const Torus& t, const SurfaceGeometry& sg, const Field& f);
// <A,B> = A_ij B_kl g^ik g^jl for symmetric (11,12,22) tensors, nodewise.
Field tensor_dot(const SurfaceGeometry& sg, const std::array<Field, 3>& A, const std::array<Field, 3>& B);
// (A.B)_ij = A_il g^lk B_kj (not symmetric in general; returns 2x2 full).
std::array<Field, 4> tensor_compose(const SurfaceGeometry& sg, const std::array<Field, 3>& A,
                                    const std::array<Field, 3>& B);
// II(a, b) for chart components.
Field ii_form(const SurfaceGeometry& sg, const std::array<Field, 2>& a, const std::array<Field, 2>& b);

double simons_residual(const Torus& t, const SurfaceGeometry& sg);
double codazzi_residual(const Torus& t, const SurfaceGeometry& sg);

struct EvolutionResidual {
    double normal = 0, metric = 0, second_form = 0, curvature = 0, area = 0;
    double max() const;
};
// gammas: >= 3 equally spaced time levels; velocity: d/dt Phi at the middle level.
EvolutionResidual geometry_evolution_residual(const ReferenceChart& chart, const std::vector<Field>& gammas,
                                              double dt, const V3& velocity);

} // namespace cvsheet
