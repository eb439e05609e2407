#pragma once

#include "cvsheet/geometry.hpp"
#include "cvsheet/krylov.hpp"

#include <map>
#include <memory>

namespace cvsheet {

// Omega+ is the lower slab T^2 x (-1, Gamma) and Omega- the upper one, so
// n+ points up into Omega-.
enum class Side { plus, minus };
// torus_slab: Neumann walls on both sides. closed_interior: the plus side
// is a pure Dirichlet problem (zero data on its wall).
enum class WallMode { torus_slab, closed_interior };
enum class BC { dirichlet, conormal };

// Mapped slab grid. The computational slab is flat: T^2 x [z0, wall] with
// Chebyshev-Lobatto levels, level 0 on the interface and level M on the wall.
// Bulk arrays are level-major: index = level * n + node.
struct BulkGrid {
    Side side = Side::plus;
    std::shared_ptr<const Torus> torus;
    std::shared_ptr<const Cheb> cheb;
    int M = 0;
    double z0 = 0, zw = -1;
    double sz = 1;  // d xi / d z
    std::size_t n = 0;
    Field zlev;
    V3 X;                      // mapped positions
    std::array<Field, 9> DX;   // DX[3 i + a] = dX^i / dy^a
    std::array<Field, 9> DXi;  // inverse, DXi[3 a + j] = dy^a / dx^j
    Field J;
    std::array<Field, 6> K;    // J DX^-1 DX^-T as (11, 12, 13, 22, 23, 33)
    Field sqrtg;               // interface area element, level 0

    int levels() const { return M + 1; }
    std::size_t size() const { return std::size_t(M + 1) * n; }
    double depth() const { return std::abs(z0 - zw); }
};

struct BulkPair {
    BulkGrid plus, minus;
    const BulkGrid& operator[](Side s) const { return s == Side::plus ? plus : minus; }
};

// Harmonic coordinates: the boundary displacement Phi - (x, y, z0) extended
// harmonically (zero at the wall) over each flat slab, mode by mode.
BulkPair harmonic_coordinates(const ReferenceChart& chart, const SurfaceGeometry& sg, int M);
BulkPair harmonic_coordinates(const ReferenceChart& chart, const Field& gamma, int M);

// Flat-slab harmonic extension of interface data f (zero at the wall);
// optionally returns d/dz of it.
Field flat_extension(const BulkGrid& g, const Field& f, Field* dz = nullptr);

// Bulk calculus on the computational slab.
void dz_levels(const BulkGrid& g, const double* f, double* out, bool parallel = true);
V3 grad_y(const BulkGrid& g, const Field& u);
Field div_y(const BulkGrid& g, const V3& F);
// Physical gradient DX^-T grad_y u.
V3 grad_x(const BulkGrid& g, const Field& u);
// Physical Jacobian dv^i/dx^j of a physical vector field, [3 i + j].
std::array<Field, 9> jacobian_x(const BulkGrid& g, const V3& v);
// (K grad u)_3 on one level.
Field conormal(const BulkGrid& g, const Field& u, int level);
// Piola pull-back J DX^-1 Y and its inverse.
V3 piola(const BulkGrid& g, const V3& Y);
V3 piola_inverse(const BulkGrid& g, const V3& P);
Field level(const BulkGrid& g, const Field& u, int l);
void set_level(const BulkGrid& g, Field& u, int l, const Field& v);

// L u = d_a (K^ab d_b u) = J (Lap u) o X. The serial variant runs the same
// kernel without OpenMP and is kept as the reference for tests.
void apply_L(const BulkGrid& g, const Field& u, Field& out);
void apply_L_serial(const BulkGrid& g, const Field& u, Field& out);

struct SolveStats {
    int solves = 0;
    int iterations = 0;
    double worst_residual = 0;
};

// Per-Fourier-mode dense solves of the flat slab operator; exact for a flat
// interface and used as the GMRES preconditioner otherwise.
class FlatModeSolver {
public:
    FlatModeSolver(const BulkGrid& g, BC iface, BC wall, bool bordered);
    // Rows: interior -u'' + |k|^2 u = r, boundary rows as the BCs. With
    // bordering, in has one extra entry (the mean constraint) and so does out.
    void apply(const Field& in, Field& out) const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

// Scalar problem on one side: -L u = rhs on interior levels, BC rows on the
// interface (level 0) and the wall (level M). Neumann-Neumann problems are
// bordered with a constant multiplier; their solution has zero level-0 mean.
class SlabSolver {
public:
    SlabSolver(const BulkGrid& g, BC iface, BC wall, double rtol = 1e-11);
    // rhs: interior values in a bulk array (boundary levels ignored).
    Field solve(const Field& rhs, const Field& iface_data, const Field& wall_data, const Field* guess = nullptr) const;
    const SolveStats& stats() const { return stats_; }

private:
    const BulkGrid* g_;
    BC iface_, wall_;
    bool bordered_;
    double rtol_;
    FlatModeSolver pre_;
    mutable SolveStats stats_;
};

// Transmission problem for harmonic phi+-:
//   phi+ = phi- and (1/rho+)(K+ grad phi+)_3 - (1/rho-)(K- grad phi-)_3 = q
// on the interface, walls as the wall mode dictates.
class TransmissionSolver {
public:
    TransmissionSolver(const BulkGrid& gp, const BulkGrid& gm, double rho_p, double rho_m, WallMode mode,
                       double rtol = 1e-11);
    std::pair<Field, Field> solve(const Field& q) const;
    const SolveStats& stats() const { return stats_; }

private:
    const BulkGrid *gp_, *gm_;
    double rp_, rm_;
    WallMode mode_;
    double rtol_;
    bool bordered_;
    struct Pre;
    std::shared_ptr<const Pre> pre_;
    mutable SolveStats stats_;
};

struct EllipticOptions {
    int M = 20;
    WallMode mode = WallMode::torus_slab;
    double rho_plus = 1, rho_minus = 1;
    double rtol = 1e-11;
};

// Interface operator calculus for one interface position: harmonic
// extensions, Dirichlet-Neumann operators and their composites.
class Elliptic {
public:
    Elliptic(const ReferenceChart& chart, const Field& gamma, const EllipticOptions& opt);
    Elliptic(const ReferenceChart& chart, const SurfaceGeometry& sg, const EllipticOptions& opt);

    const ReferenceChart& chart() const { return *chart_; }
    const Torus& torus() const { return *chart_->torus; }
    const SurfaceGeometry& surface() const { return sg_; }
    const BulkGrid& grid(Side s) const { return grids_[s]; }
    const EllipticOptions& options() const { return opt_; }

    Field extend(Side s, const Field& f) const;
    Field dn(Side s, const Field& f) const;
    // N+- from an already extended bulk field.
    Field dn_of(Side s, const Field& ext) const;
    Field nbar(const Field& f) const;
    Field ntilde(const Field& f) const;
    // Mean-free psi with Nbar psi = P f; optional extensions H+- psi.
    Field nbar_inverse(const Field& f, Field* ext_p = nullptr, Field* ext_m = nullptr) const;
    Field dn_inverse(Side s, const Field& f) const;

    double mean(const Field& f) const;   // dS-weighted mean
    Field project(const Field& f) const; // f - mean

    // -Lap u = f in Omega (physical), u = 0 on Gamma, d_n u = 0 on the wall.
    Field dirichlet_poisson(Side s, const Field& f) const;
    const SlabSolver& solver(Side s, BC iface, BC wall) const;
    const TransmissionSolver& transmission() const;
    SolveStats stats() const;

private:
    void build();
    const ReferenceChart* chart_;
    EllipticOptions opt_;
    SurfaceGeometry sg_;
    BulkPair grids_;
    mutable std::map<int, std::unique_ptr<SlabSolver>> solvers_;
    mutable std::unique_ptr<TransmissionSolver> trans_;
};

} // namespace cvsheet
