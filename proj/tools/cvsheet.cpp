#include "cvsheet/curvature_map.hpp"
#include "cvsheet/driver.hpp"
#include "cvsheet/errors.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace cvsheet;

namespace {

enum Exit { kOk = 0, kConfig = 1, kSolver = 2, kInvariant = 3 };

// CVSHEET_LOG: quiet | info (default) | debug
int log_level()
{
    const char* e = std::getenv("CVSHEET_LOG");
    if (!e) return 1;
    const std::string s(e);
    if (s == "quiet" || s == "off" || s == "error") return 0;
    if (s == "debug") return 2;
    return 1;
}

void info(const std::string& m)
{
    if (log_level() >= 1) std::cerr << "[cvsheet] " << m << "\n";
}

void debug(const std::string& m)
{
    if (log_level() >= 2) std::cerr << "[cvsheet] " << m << "\n";
}

void set_threads()
{
    if (const char* e = std::getenv("CVSHEET_THREADS")) {
        const int n = std::atoi(e);
        if (n > 0) omp_set_num_threads(n);
    }
}

int guarded(const std::function<void()>& f)
{
    try {
        f();
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kConfig;
    } catch (const InvariantBreach& e) {
        std::cerr << "invariant breach: " << e.what() << "\n";
        return kInvariant;
    } catch (const Error& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kSolver;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kSolver;
    }
}

std::string summary(const RunResult& r)
{
    std::ostringstream os;
    const DiagRow& a = r.rows.front();
    const DiagRow& b = r.rows.back();
    os << r.steps << " steps to t = " << b.t << ", E0 drift " << (b.E.E0 - a.E.E0) / a.E.E0 << ", max W "
       << r.max_w << ", growth " << (r.growth_detected ? "detected" : "not detected");
    return os.str();
}

// Quick oracles that need no reference data.
int selftest()
{
    int failed = 0;
    auto line = [&](const std::string& name, bool ok, double value) {
        std::printf("%s %-40s %.3e\n", ok ? "PASS" : "FAIL", name.c_str(), value);
        if (!ok) ++failed;
    };
    auto t = std::make_shared<Torus>(16, 1);
    auto chart = ReferenceChart::flat(t, 0.0);
    const Field X = chart.node_x();

    Field g(chart.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.05 * std::sin(2 * M_PI * X[k]);
    const SurfaceGeometry sg = immerse(chart, g);
    {
        // area of z = 0.05 sin(2 pi x) against a fine midpoint rule
        double ref = 0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double x = (i + 0.5) / n;
            ref += std::sqrt(1 + std::pow(0.1 * M_PI * std::cos(2 * M_PI * x), 2)) / n;
        }
        const double err = std::abs(area(*t, sg) - ref);
        line("geometry: area of a graph", err < 1e-10, err);
    }
    {
        const Field ka = forward_K(chart, g, 10);
        const Field back = invert_K(chart, ka, 10, Field(g.size(), 0.0));
        double err = 0;
        for (std::size_t k = 0; k < g.size(); ++k) err = std::max(err, std::abs(back[k] - g[k]));
        line("curvature map round trip", err < 1e-9, err);
    }
    {
        PlasmaParams pp;
        pp.M = 8;
        pp.alpha = 0.5;
        WallFlux wf;
        wf.h_plus = {1, 0};
        wf.h_minus = {0, 1};
        const Field z(chart.size(), 0.0);
        const SimState s = make_state(chart, z, z, pp, wf);
        const Evaluation ev = evaluate(chart, s, pp);
        double acc = 0;
        for (double v : ev.kappa_tt) acc = std::max(acc, std::abs(v));
        line("equilibrium is steady", acc < 1e-9, acc);
    }
    {
        const double u = upsilon({1, 0, 0}, {0, 1, 0}, {0.5, 0.5, 0}, 1, 1).value;
        line("Upsilon closed form", std::abs(u - 0.375) < 1e-12, std::abs(u - 0.375));
    }
    {
        DispersionParams p;
        p.w = {1, 0, 0};
        const double w2 = dispersion_rate({2, 0}, p).omega2;
        line("Kelvin-Helmholtz symbol", std::abs(w2 + 1) < 1e-14, std::abs(w2 + 1));
    }
    {
        const StrictConditionReport r = strict_condition_test(2000, 11);
        line("strict condition implies positivity", r.violations == 0 && r.strict > 0, double(r.violations));
    }
    return failed ? kSolver : kOk;
}

std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> v;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) {
        if (tok.empty()) continue;
        std::size_t pos = 0;
        double x = 0;
        try {
            x = std::stod(tok, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != tok.size()) throw ConfigError("--alphas: cannot parse '" + tok + "'");
        v.push_back(x);
    }
    return v;
}

} // namespace

int main(int argc, char** argv)
{
    set_threads();
    CLI::App app{"cvsheet: current-vortex sheet simulator"};
    app.require_subcommand(1);
    std::string config, out;
    bool every = false;

    auto* run = app.add_subcommand("run", "run a scenario to t_end");
    run->add_option("config", config, "scenario TOML")->required();
    run->add_option("-o,--out", out, "output directory (default: [output] dir)");
    run->add_flag("--every-step", every, "diagnostics after every step");

    std::string alphas = "0.2,0.1,0.05,0";
    auto* sweep = app.add_subcommand("sweep-alpha", "same data at decreasing surface tension");
    sweep->add_option("config", config, "scenario TOML")->required();
    sweep->add_option("--alphas", alphas, "comma separated list")->capture_default_str();
    sweep->add_option("-o,--out", out, "output directory");

    StabilityGrid grid;
    std::string grid_alphas = "0.25,0.5,1";
    auto* stab = app.add_subcommand("analyze-stability", "stability map of the configured wall data");
    stab->add_option("config", config, "scenario TOML")->required();
    stab->add_option("--c-min", grid.c_min)->capture_default_str();
    stab->add_option("--c-max", grid.c_max)->capture_default_str();
    stab->add_option("--c-count", grid.c_count, "shear multipliers, 0 for none")->capture_default_str();
    stab->add_option("--alphas", grid_alphas, "surface tensions of the dispersion rows")->capture_default_str();
    stab->add_option("--k-max", grid.k_max)->capture_default_str();
    stab->add_option("--k-count", grid.k_count)->capture_default_str();
    stab->add_option("-o,--out", out, "output directory");

    auto* self = app.add_subcommand("selftest", "built-in oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }

    if (*self) return selftest();

    return guarded([&] {
        Scenario sc = load_scenario(config);
        debug("resolved config:\n" + dump_scenario(sc));
        if (*run) {
            RunOptions o;
            o.out_dir = out;
            o.every_step = every;
            const RunResult r = run_scenario(sc, o);
            info(summary(r));
        } else if (*sweep) {
            RunOptions o;
            o.out_dir = out;
            const SweepResult r = sweep_alpha(sc, parse_list(alphas), o);
            for (std::size_t i = 0; i < r.alphas.size(); ++i) {
                std::ostringstream os;
                os << "alpha " << r.alphas[i] << ": |gamma - gamma_0|_inf = " << r.cauchy[i];
                info(os.str());
            }
        } else if (*stab) {
            if (grid.c_count < 0 || grid.k_count < 0) throw ConfigError("grid counts must be non-negative");
            grid.alphas = parse_list(grid_alphas);
            info("wrote " + analyze_stability(sc, grid, out));
        }
    });
}
