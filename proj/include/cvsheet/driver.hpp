#pragma once

#include "cvsheet/config.hpp"
#include "cvsheet/stability.hpp"

#include <functional>
#include <string>
#include <vector>

namespace cvsheet {

struct DiagRow {
    double t = 0;
    Energies E;
    double upsilon = 0;
    double w_residual = 0;  // NaN until the monitor has enough history
    double min_wall_dist = 0;
    double max_hn = 0;
    double dt = 0;
};

struct RunOptions {
    bool write = true;          // diagnostics.csv, snapshots, stability_report.txt
    std::string out_dir;        // empty: the scenario's [output] dir
    bool check_invariants = true;
    bool every_step = false;    // diagnostics after every step instead of every interval
};

struct ModeReport {
    ModeSpec mode;
    double omega2 = 0;  // flat dispersion prediction
    bool stable = true;
    double amplification = 1;  // |kappa_a mode| at the end over the start
};

struct RunResult {
    SimState initial, final;
    Field final_gamma;
    std::vector<DiagRow> rows;
    std::vector<ModeReport> modes;
    bool growth_detected = false;
    int steps = 0;
    double max_w = 0;  // over all steps with a ready monitor
};

// Runs a scenario to t_end. Throws InvariantBreach (named) if an invariant
// leaves its tolerance and the solver errors of the stages otherwise.
RunResult run_scenario(const Scenario& sc, const RunOptions& opt = {});

// Diagnostics of one evaluated state.
DiagRow diagnose(const Evaluation& ev, const SimState& s, const PlasmaParams& pp);

std::string diagnostics_header();
std::string diagnostics_line(const DiagRow& r);

// Upsilon of the initial data of a scenario.
UpsilonResult initial_upsilon(const Scenario& sc);

struct SweepResult {
    std::vector<double> alphas;
    std::vector<double> cauchy;  // ||gamma_alpha - gamma_0||_inf at t_end
    std::vector<RunResult> runs;
};
// Identical initial data for every alpha; refuses (InvariantBreach) data
// with Upsilon < 2 s0. The reference run is alpha = 0, added if missing.
SweepResult sweep_alpha(const Scenario& sc, const std::vector<double>& alphas, const RunOptions& opt = {});

struct StabilityGrid {
    double c_min = 0, c_max = 1.5;
    int c_count = 31;  // sup norm of the velocity jump, direction from the config
    std::vector<double> alphas{0.25, 0.5, 1.0};
    double k_max = 40;
    int k_count = 40;
};
// Writes stability_map.csv: shear rows (c, Upsilon, stable), dispersion rows
// (alpha, |k|, omega^2, stable) along the least stable direction, and
// cutoff rows (alpha, largest unstable |k|). Returns the file path.
std::string analyze_stability(const Scenario& sc, const StabilityGrid& grid, const std::string& out_dir);

DispersionParams dispersion_params(const Scenario& sc);

} // namespace cvsheet
