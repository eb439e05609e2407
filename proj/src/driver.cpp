#include "cvsheet/driver.hpp"

#include "cvsheet/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#ifndef CVSHEET_VERSION
#define CVSHEET_VERSION "dev"
#endif

namespace fs = std::filesystem;

namespace cvsheet {

namespace {

cplx mode_amp(const ReferenceChart& c, const Field& f, int m1, int m2)
{
    const Field X = c.node_x(), Y = c.node_y();
    cplx s = 0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * std::exp(cplx(0, -2 * M_PI * (m1 * X[k] + m2 * Y[k])));
    return s / double(f.size());
}

std::string num(double x)
{
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string header_comment(const Scenario& sc)
{
    std::ostringstream os;
    os << "# cvsheet " << CVSHEET_VERSION << "\n";
    std::istringstream in(dump_scenario(sc));
    for (std::string line; std::getline(in, line);) os << "# " << line << "\n";
    return os.str();
}

void write_snapshot(const fs::path& dir, int index, const ReferenceChart& chart, const SimState& s,
                    const Field& gamma)
{
    const Torus& t = *chart.torus;
    CField G(t.nspec());
    t.forward(gamma.data(), G.data());
    nlohmann::json spec = nlohmann::json::array();
    for (std::size_t q = 0; q < G.size(); ++q) spec.push_back({t.mx(q), t.my(q), std::abs(G[q])});
    nlohmann::json j;
    j["t"] = s.t;
    j["gamma"] = gamma;
    j["kappa_a"] = s.kappa_a;
    j["flux"] = {{"v_plus", s.flux.v_plus}, {"v_minus", s.flux.v_minus}, {"h_plus", s.flux.h_plus},
                 {"h_minus", s.flux.h_minus}};
    j["spectrum"] = spec;
    char name[32];
    std::snprintf(name, sizeof name, "%04d.json", index);
    std::ofstream(dir / name) << j.dump() << "\n";
}

} // namespace

DispersionParams dispersion_params(const Scenario& sc)
{
    DispersionParams d;
    d.rho_plus = sc.pp.rho_plus;
    d.rho_minus = sc.pp.rho_minus;
    d.d_plus = 1 + sc.z0;
    d.d_minus = 1 - sc.z0;
    d.alpha = sc.pp.alpha;
    d.hp = {sc.flux.h_plus[0], sc.flux.h_plus[1], 0};
    d.hm = {sc.flux.h_minus[0], sc.flux.h_minus[1], 0};
    d.w = {sc.flux.v_plus[0] - sc.flux.v_minus[0], sc.flux.v_plus[1] - sc.flux.v_minus[1], 0};
    return d;
}

DiagRow diagnose(const Evaluation& ev, const SimState& s, const PlasmaParams& pp)
{
    DiagRow r;
    r.t = s.t;
    r.E = energy_functionals(ev, s, pp);
    const auto& sg = ev.e->surface();
    InterfaceFields f = interface_fields(ev);
    r.upsilon = upsilon(sg, f.hp, f.hm, f.w, pp.rho_plus, pp.rho_minus).value;
    r.w_residual = std::numeric_limits<double>::quiet_NaN();
    r.min_wall_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sg.phi[2].size(); ++k) {
        const double z = sg.phi[2][k];
        r.min_wall_dist = std::min({r.min_wall_dist, 1 - z, z + 1});
        for (int i = 0; i < 2; ++i) {
            double hn = 0;
            for (int q = 0; q < 3; ++q) hn += ev.H[i][q][k] * sg.normal[q][k];
            r.max_hn = std::max(r.max_hn, std::abs(hn));
        }
    }
    return r;
}

std::string diagnostics_header() { return "t,E0,E1,E2,E3,El,upsilon,W_residual,min_wall_dist,max_hn,dt"; }

std::string diagnostics_line(const DiagRow& r)
{
    std::ostringstream os;
    os << num(r.t) << "," << num(r.E.E0) << "," << num(r.E.E1) << "," << num(r.E.E2) << "," << num(r.E.E3) << ","
       << num(r.E.El) << "," << num(r.upsilon) << "," << num(r.w_residual) << "," << num(r.min_wall_dist) << ","
       << num(r.max_hn) << "," << num(r.dt);
    return os.str();
}

UpsilonResult initial_upsilon(const Scenario& sc)
{
    const ReferenceChart chart = make_chart(sc);
    const SimState s = initial_state(sc, chart);
    EvalOptions eo;
    eo.rates = false;
    const Evaluation ev = evaluate(chart, s, sc.pp, eo);
    InterfaceFields f = interface_fields(ev);
    return upsilon(ev.e->surface(), f.hp, f.hm, f.w, sc.pp.rho_plus, sc.pp.rho_minus);
}

RunResult run_scenario(const Scenario& sc, const RunOptions& opt)
{
    const ReferenceChart chart = make_chart(sc);
    const PlasmaParams& pp = sc.pp;
    EvalOptions eo;
    eo.variant = sc.variant;
    eo.chain_route = sc.chain_route;

    RunResult res;
    SimState s = initial_state(sc, chart);
    res.initial = s;
    Evaluation ev = evaluate(chart, s, pp, eo);

    fs::path dir = opt.out_dir.empty() ? fs::path(sc.dir) : fs::path(opt.out_dir);
    std::ofstream csv;
    int snap = 0;
    if (opt.write) {
        fs::create_directories(dir);
        if (sc.snapshots) fs::create_directories(dir / "snapshots");
        csv.open(dir / "diagnostics.csv");
        csv << header_comment(sc) << diagnostics_header() << "\n";
    }
    auto record = [&](double dt, double w) {
        DiagRow r = diagnose(ev, s, pp);
        r.dt = dt;
        r.w_residual = w;
        res.rows.push_back(r);
        if (opt.write) {
            csv << diagnostics_line(r) << "\n";
            if (sc.snapshots) write_snapshot(dir / "snapshots", snap++, chart, s, ev.gamma);
        }
        if (!opt.check_invariants) return;
        const double E00 = res.rows.front().E.E0;
        const double drift = std::abs(r.E.E0 - E00) / std::max(std::abs(E00), 1e-300);
        std::ostringstream os;
        if (drift > sc.energy_tol) os << "energy: relative drift of E0 " << drift << " > " << sc.energy_tol;
        else if (r.max_hn > sc.hn_tol) os << "h.n: max |h.n| " << r.max_hn << " > " << sc.hn_tol;
        else if (r.min_wall_dist < sc.c0) os << "wall distance: " << r.min_wall_dist << " < " << sc.c0;
        if (!os.str().empty()) throw InvariantBreach(os.str());
    };

    WMonitor W;
    W.push(ev, s.t);
    record(0, std::numeric_limits<double>::quiet_NaN());

    const double T = pp.t_end;
    double dt = std::min(pp.dt, dt_limit(ev, pp));
    int remaining = std::max(1, int(std::ceil((T - s.t) / dt - 1e-9)));
    dt = (T - s.t) / remaining;
    while (remaining > 0) {
        const double lim = dt_limit(ev, pp);
        if (dt > lim) {
            // shrink and restart the BDF history
            remaining = int(std::ceil((T - s.t) / lim - 1e-9));
            dt = (T - s.t) / remaining;
            W.clear();
            W.push(ev, s.t);
        }
        if (sc.integrator == "picard")
            s = picard_refine(chart, s, pp, dt, sc.picard_iters);
        else
            s = time_step(chart, s, pp, dt, nullptr, eo, &ev);
        ev = evaluate(chart, s, pp, eo);
        --remaining;
        ++res.steps;
        W.push(ev, s.t);
        double w = std::numeric_limits<double>::quiet_NaN();
        if (W.ready()) {
            w = W.residual();
            res.max_w = std::max(res.max_w, w);
            if (opt.check_invariants && w > sc.w_tol) {
                std::ostringstream os;
                os << "W-residual: " << w << " > " << sc.w_tol << " at t = " << s.t;
                throw InvariantBreach(os.str());
            }
        }
        if (opt.every_step || res.steps % sc.interval == 0 || remaining == 0) record(dt, w);
    }
    res.final = s;
    res.final_gamma = ev.gamma;

    const DispersionParams dp = dispersion_params(sc);
    for (const auto& m : sc.gamma_modes) {
        if (m.m1 == 0 && m.m2 == 0) continue;
        ModeReport r;
        r.mode = m;
        const Dispersion d = dispersion_rate({2 * M_PI * m.m1, 2 * M_PI * m.m2}, dp);
        r.omega2 = d.omega2;
        r.stable = d.stable;
        const double a0 = std::abs(mode_amp(chart, res.initial.kappa_a, m.m1, m.m2));
        const double a1 = std::abs(mode_amp(chart, s.kappa_a, m.m1, m.m2));
        r.amplification = a0 > 0 ? a1 / a0 : 0;
        if (r.amplification > 1.5) res.growth_detected = true;
        res.modes.push_back(r);
    }
    if (opt.write) {
        std::ofstream rep(dir / "stability_report.txt");
        rep << header_comment(sc);
        rep << "mode_m1,mode_m2,omega2,predicted,amplification\n";
        for (const auto& r : res.modes)
            rep << r.mode.m1 << "," << r.mode.m2 << "," << num(r.omega2) << "," << (r.stable ? "stable" : "unstable")
                << "," << num(r.amplification) << "\n";
        rep << "# growth " << (res.growth_detected ? "detected" : "not detected") << "\n";
    }
    return res;
}

SweepResult sweep_alpha(const Scenario& sc, const std::vector<double>& alphas_in, const RunOptions& opt)
{
    const UpsilonResult u = initial_upsilon(sc);
    if (!(u.value > 0) || u.value < 2 * sc.s0) {
        std::ostringstream os;
        os << "stability margin: Upsilon = " << u.value << " of the initial data is below 2 s0 = " << 2 * sc.s0;
        throw InvariantBreach(os.str());
    }
    SweepResult out;
    out.alphas = alphas_in;
    if (std::find(out.alphas.begin(), out.alphas.end(), 0.0) == out.alphas.end()) out.alphas.push_back(0.0);
    const fs::path base = opt.out_dir.empty() ? fs::path(sc.dir) : fs::path(opt.out_dir);
    for (double a : out.alphas) {
        Scenario s = sc;
        s.pp.alpha = a;
        s.pp.validate();
        RunOptions o = opt;
        char name[40];
        std::snprintf(name, sizeof name, "alpha_%g", a);
        o.out_dir = (base / name).string();
        out.runs.push_back(run_scenario(s, o));
    }
    const std::size_t ref =
        std::size_t(std::find(out.alphas.begin(), out.alphas.end(), 0.0) - out.alphas.begin());
    const Field& g0 = out.runs[ref].final_gamma;
    for (const auto& r : out.runs) {
        double d = 0;
        for (std::size_t k = 0; k < g0.size(); ++k) d = std::max(d, std::abs(r.final_gamma[k] - g0[k]));
        out.cauchy.push_back(d);
    }
    if (opt.write) {
        fs::create_directories(base);
        std::ofstream f(base / "sweep.csv");
        f << header_comment(sc) << "alpha,cauchy_inf,E0,E1,E2,E3\n";
        for (std::size_t i = 0; i < out.alphas.size(); ++i) {
            const Energies& E = out.runs[i].rows.back().E;
            f << num(out.alphas[i]) << "," << num(out.cauchy[i]) << "," << num(E.E0) << "," << num(E.E1) << ","
              << num(E.E2) << "," << num(E.E3) << "\n";
        }
    }
    return out;
}

std::string analyze_stability(const Scenario& sc, const StabilityGrid& grid, const std::string& out_dir)
{
    const fs::path dir = out_dir.empty() ? fs::path(sc.dir) : fs::path(out_dir);
    fs::create_directories(dir);
    const fs::path path = dir / "stability_map.csv";
    std::ofstream f(path);
    if (grid.c_count == 0 && grid.alphas.empty()) return path.string();  // nothing asked, nothing written
    f << header_comment(sc) << "kind,c,alpha,k,omega2,upsilon,stable\n";
    const DispersionParams base = dispersion_params(sc);
    for (int i = 0; i < grid.c_count; ++i) {
        const double c = grid.c_count == 1 ? grid.c_min
                                           : grid.c_min + (grid.c_max - grid.c_min) * i / (grid.c_count - 1);
        // c is the sup norm of the jump; its direction is the configured one
        const double wn = std::max(std::abs(base.w[0]), std::abs(base.w[1]));
        Vec3 w = wn > 0 ? base.w : Vec3{1, 1, 0};
        for (auto& x : w) x *= c / (wn > 0 ? wn : 1);
        const double u = upsilon(base.hp, base.hm, w, base.rho_plus, base.rho_minus).value;
        f << "shear," << num(c) << ",,,," << num(u) << "," << (u > 0 ? 1 : 0) << "\n";
    }
    // least stable direction of the configured fields
    const Vec3 dir3 = upsilon(base.hp, base.hm, base.w, base.rho_plus, base.rho_minus).direction;
    const double theta = std::atan2(dir3[1], dir3[0]);
    for (double a : grid.alphas) {
        DispersionParams p = base;
        p.alpha = a;
        for (int i = 1; i <= grid.k_count; ++i) {
            const double k = grid.k_max * i / grid.k_count;
            const Dispersion d = dispersion_rate({k * std::cos(theta), k * std::sin(theta)}, p);
            f << "dispersion,," << num(a) << "," << num(k) << "," << num(d.omega2) << ",," << (d.stable ? 1 : 0)
              << "\n";
        }
        f << "cutoff,," << num(a) << "," << num(unstable_cutoff(theta, p)) << ",,,\n";
    }
    return path.string();
}

} // namespace cvsheet
