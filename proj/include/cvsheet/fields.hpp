#pragma once

#include "cvsheet/elliptic.hpp"

#include <array>

namespace cvsheet {

using Vec2 = std::array<double, 2>;

// Area-integrated tangential velocity and magnetic field on the walls.
struct WallFlux {
    Vec2 v_plus{0, 0}, v_minus{0, 0}, h_plus{0, 0}, h_minus{0, 0};
};

inline int idx(Side s) { return s == Side::plus ? 0 : 1; }
inline Side side_of(int i) { return i == 0 ? Side::plus : Side::minus; }

// Bulk calculus in physical coordinates on the mapped grid.
V3 curl_x(const BulkGrid& g, const V3& u);
Field div_x(const BulkGrid& g, const V3& u);
V3 trace(const BulkGrid& g, const V3& u, int level = 0);
// Integral over the physical slab (Clenshaw-Curtis in the vertical).
double slab_integral(const BulkGrid& g, const Field& f);
// Integral over the flat wall level.
double wall_integral(const BulkGrid& g, const Field& f);
// Normal trace u.n+ on the interface.
Field normal_trace(const Elliptic& e, const V3& u_iface);

// u with curl u = curl, div u = div, u.n+ = normal_bc on the interface,
// u.e3 = 0 on the wall and wall integral of (u1, u2) equal to flux.
V3 solve_div_curl(const Elliptic& e, Side s, const V3& curl, const Field& div, const Field& normal_bc, Vec2 flux);

// Y - grad phi with Lap phi = div Y, phi = 0 on the interface and d_n phi = 0
// on the wall.
V3 leray_project(const Elliptic& e, Side s, const V3& Y);

// theta = n+ . nu dgamma/dt at the interface nodes.
Field kinematic_theta(const Elliptic& e, const Field& dgamma_dt);

std::array<V3, 2> recover_velocity(const Elliptic& e, const Field& dgamma_dt, const std::array<V3, 2>& omega_star,
                                   const WallFlux& flux);
std::array<V3, 2> recover_magnetic(const Elliptic& e, const std::array<V3, 2>& j_star, const WallFlux& flux);

// p/rho = p_vv - p_hh + alpha^2 p_kappa + p_b on each side.
struct PressureParts {
    std::array<Field, 2> p_vv, p_hh, p_kappa, p_b, total;  // bulk, [plus, minus]
    Field frak_p, g_plus, g_minus;
    Field B_kappa;  // Nbar^-1 (N- kappa / rho-)
};

PressureParts pressure_decomposition(const Elliptic& e, const std::array<V3, 2>& v, const std::array<V3, 2>& h,
                                     double alpha);

} // namespace cvsheet
