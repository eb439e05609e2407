#pragma once

#include "cvsheet/dynamics.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cvsheet {

// amplitude * cos(2 pi (m1 x + m2 y) + phase)
struct ModeSpec {
    int m1 = 1, m2 = 0;
    double amplitude = 0, phase = 0;
};

// A fully resolved scenario file. Sections: [domain] [plasma] [interface]
// [fields] [numerics] [output]; unknown keys are errors.
struct Scenario {
    std::string name = "scenario";

    // [domain]
    int n1 = 64, n2 = 1;
    double z0 = 0;
    std::string chart = "flat";  // flat | tilted | bumped
    double chart_param = 0;      // tilt angle or bump height
    double closeness_delta = 0.5;
    double c0 = 0.05;

    // [plasma] (+ the numerical part of PlasmaParams from [numerics])
    PlasmaParams pp;
    WallFlux flux;
    double s0 = 0;  // required stability margin: Upsilon >= 2 s0 at t = 0

    // [interface]
    std::vector<ModeSpec> gamma_modes, rate_modes;
    double noise = 0;  // seeded random perturbation of gamma, max amplitude

    // [fields]: amplitudes A of omega_y = A d cos(2 pi x), d the distance to the wall
    std::array<double, 2> vorticity{0, 0}, current{0, 0};

    // [numerics]
    std::string integrator = "rk4";  // rk4 | picard
    int picard_iters = 8;
    Remainder variant = Remainder::R0;
    bool chain_route = false;
    std::uint64_t seed = 1;
    double w_tol = 1e-2;       // invariant: W residual
    double energy_tol = 1e-2;  // invariant: relative drift of E0
    double hn_tol = 1e-6;      // invariant: max |h.n| on the interface

    // [output]
    std::string dir = "out";
    int interval = 10;  // steps between diagnostics rows
    bool snapshots = true;
};

// Throws ConfigError with file:line:column on malformed input or unknown keys.
Scenario parse_scenario(const std::string& text, const std::string& source = "<string>");
Scenario load_scenario(const std::string& path);
// Canonical TOML of every resolved value.
std::string dump_scenario(const Scenario& s);

ReferenceChart make_chart(const Scenario& s);
Field initial_gamma(const Scenario& s, const ReferenceChart& chart);
SimState initial_state(const Scenario& s, const ReferenceChart& chart);

} // namespace cvsheet
