#include "cvsheet/config.hpp"

#include "cvsheet/curvature_map.hpp"
#include "cvsheet/errors.hpp"

#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace cvsheet {

namespace {

std::string where(const std::string& src, const toml::source_region& r)
{
    std::ostringstream os;
    os << src << ":" << r.begin.line << ":" << r.begin.column;
    return os.str();
}

// Reads one section and remembers which keys were consumed.
class Section {
public:
    Section(const toml::table& root, const std::string& name, const std::string& src) : name_(name), src_(src)
    {
        if (const toml::node* n = root.get(name)) {
            t_ = n->as_table();
            if (!t_) throw ConfigError(where(src, n->source()) + ": [" + name + "] must be a table");
        }
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        seen_.insert(key);
        const toml::node* n = t_ ? t_->get(key) : nullptr;
        if (!n) return;
        if constexpr (std::is_same_v<T, bool>) {
            auto v = n->value<bool>();
            if (!v) fail(*n, key, "a boolean");
            out = *v;
        } else if constexpr (std::is_same_v<T, std::string>) {
            auto v = n->value<std::string>();
            if (!v) fail(*n, key, "a string");
            out = *v;
        } else if constexpr (std::is_integral_v<T>) {
            auto v = n->value<std::int64_t>();
            if (!v || !n->is_integer()) fail(*n, key, "an integer");
            out = T(*v);
        } else {
            auto v = n->value<double>();
            if (!v) fail(*n, key, "a number");
            out = *v;
        }
    }

    void vec2(const std::string& key, Vec2& out)
    {
        seen_.insert(key);
        const toml::node* n = t_ ? t_->get(key) : nullptr;
        if (!n) return;
        const toml::array* a = n->as_array();
        if (!a || a->size() != 2) fail(*n, key, "an array of 2 numbers");
        for (int i = 0; i < 2; ++i) {
            auto v = (*a)[i].value<double>();
            if (!v) fail(*n, key, "an array of 2 numbers");
            out[i] = *v;
        }
    }

    void modes(const std::string& key, std::vector<ModeSpec>& out)
    {
        seen_.insert(key);
        const toml::node* n = t_ ? t_->get(key) : nullptr;
        if (!n) return;
        const toml::array* a = n->as_array();
        if (!a) fail(*n, key, "an array of [m1, m2, amplitude, phase]");
        out.clear();
        for (const auto& e : *a) {
            const toml::array* q = e.as_array();
            if (!q || q->size() < 3 || q->size() > 4 || !(*q)[0].is_integer() || !(*q)[1].is_integer())
                fail(e, key, "[m1, m2, amplitude, phase] with integer m1, m2");
            ModeSpec m;
            m.m1 = int(*(*q)[0].value<std::int64_t>());
            m.m2 = int(*(*q)[1].value<std::int64_t>());
            auto amp = (*q)[2].value<double>();
            if (!amp) fail(e, key, "a numeric amplitude");
            m.amplitude = *amp;
            if (q->size() == 4) {
                auto ph = (*q)[3].value<double>();
                if (!ph) fail(e, key, "a numeric phase");
                m.phase = *ph;
            }
            out.push_back(m);
        }
    }

    void pair(const std::string& key, std::array<double, 2>& out)
    {
        Vec2 v{out[0], out[1]};
        vec2(key, v);
        out = {v[0], v[1]};
    }

    // Every key of the section must have been asked for.
    void finish() const
    {
        if (!t_) return;
        for (auto&& [k, v] : *t_) {
            const std::string key(k.str());
            if (!seen_.count(key))
                throw ConfigError(where(src_, v.source()) + ": unknown key '" + key + "' in [" + name_ + "]");
        }
    }

private:
    [[noreturn]] void fail(const toml::node& n, const std::string& key, const std::string& what) const
    {
        throw ConfigError(where(src_, n.source()) + ": [" + name_ + "] " + key + " must be " + what);
    }

    const toml::table* t_ = nullptr;
    std::string name_, src_;
    std::set<std::string> seen_;
};

const std::set<std::string> kSections = {"domain", "plasma", "interface", "fields", "numerics", "output"};

} // namespace

Scenario parse_scenario(const std::string& text, const std::string& source)
{
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << where(source, e.source()) << ": " << e.description();
        throw ConfigError(os.str());
    }
    Scenario s;
    for (auto&& [k, v] : root) {
        const std::string key(k.str());
        if (key == "name") {
            auto n = v.value<std::string>();
            if (!n) throw ConfigError(where(source, v.source()) + ": name must be a string");
            s.name = *n;
        } else if (!kSections.count(key)) {
            throw ConfigError(where(source, v.source()) + ": unknown section or key '" + key + "'");
        }
    }

    Section d(root, "domain", source);
    d.get("n1", s.n1);
    d.get("n2", s.n2);
    d.get("levels", s.pp.M);
    d.get("z0", s.z0);
    d.get("chart", s.chart);
    d.get("chart_param", s.chart_param);
    d.get("closeness_delta", s.closeness_delta);
    d.get("c0", s.c0);
    d.finish();

    Section p(root, "plasma", source);
    p.get("rho_plus", s.pp.rho_plus);
    p.get("rho_minus", s.pp.rho_minus);
    p.get("alpha", s.pp.alpha);
    p.vec2("v_plus", s.flux.v_plus);
    p.vec2("v_minus", s.flux.v_minus);
    p.vec2("h_plus", s.flux.h_plus);
    p.vec2("h_minus", s.flux.h_minus);
    p.get("s0", s.s0);
    p.finish();

    Section in(root, "interface", source);
    in.modes("gamma", s.gamma_modes);
    in.modes("rate", s.rate_modes);
    in.get("noise", s.noise);
    in.finish();

    Section f(root, "fields", source);
    f.pair("vorticity", s.vorticity);
    f.pair("current", s.current);
    f.finish();

    Section n(root, "numerics", source);
    n.get("dt", s.pp.dt);
    n.get("t_end", s.pp.t_end);
    n.get("cfl", s.pp.cfl);
    n.get("a", s.pp.a);
    n.get("tol_picard", s.pp.tol_picard);
    n.get("tol_invert", s.pp.tol_invert);
    n.get("dealias", s.pp.dealias);
    n.get("integrator", s.integrator);
    n.get("picard_iters", s.picard_iters);
    std::string rem = s.variant == Remainder::R0 ? "R0" : "R1";
    n.get("remainder", rem);
    std::string route = s.chain_route ? "chain" : "curvature";
    n.get("route", route);
    std::int64_t seed = std::int64_t(s.seed);
    n.get("seed", seed);
    n.get("w_tol", s.w_tol);
    n.get("energy_tol", s.energy_tol);
    n.get("hn_tol", s.hn_tol);
    n.finish();

    Section o(root, "output", source);
    o.get("dir", s.dir);
    o.get("interval", s.interval);
    o.get("snapshots", s.snapshots);
    o.finish();

    std::ostringstream err;
    if (s.n1 < 4 || s.n2 < 1) err << "domain: n1 >= 4 and n2 >= 1 required; ";
    if (s.chart != "flat" && s.chart != "tilted" && s.chart != "bumped")
        err << "domain: chart must be flat, tilted or bumped; ";
    if (std::abs(s.z0) >= 1) err << "domain: |z0| < 1 required; ";
    if (s.integrator != "rk4" && s.integrator != "picard") err << "numerics: integrator must be rk4 or picard; ";
    if (s.picard_iters < 1) err << "numerics: picard_iters >= 1 required; ";
    if (rem != "R0" && rem != "R1") err << "numerics: remainder must be R0 or R1; ";
    if (route != "curvature" && route != "chain") err << "numerics: route must be curvature or chain; ";
    if (s.interval < 1) err << "output: interval >= 1 required; ";
    if (s.s0 < 0) err << "plasma: s0 >= 0 required; ";
    if (!err.str().empty()) throw ConfigError(source + ": " + err.str());
    s.variant = rem == "R0" ? Remainder::R0 : Remainder::R1;
    s.chain_route = route == "chain";
    s.seed = std::uint64_t(seed);
    try {
        s.pp.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return s;
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

std::string dump_scenario(const Scenario& s)
{
    auto arr2 = [](const auto& v) {
        std::ostringstream os;
        os << std::setprecision(17) << "[" << v[0] << ", " << v[1] << "]";
        return os.str();
    };
    auto modes = [](const std::vector<ModeSpec>& m) {
        std::ostringstream os;
        os << std::setprecision(17) << "[";
        for (std::size_t i = 0; i < m.size(); ++i)
            os << (i ? ", " : "") << "[" << m[i].m1 << ", " << m[i].m2 << ", " << m[i].amplitude << ", "
               << m[i].phase << "]";
        os << "]";
        return os.str();
    };
    std::ostringstream os;
    os << std::setprecision(17) << std::boolalpha;
    os << "name = \"" << s.name << "\"\n";
    os << "[domain]\nn1 = " << s.n1 << "\nn2 = " << s.n2 << "\nlevels = " << s.pp.M << "\nz0 = " << s.z0
       << "\nchart = \"" << s.chart << "\"\nchart_param = " << s.chart_param
       << "\ncloseness_delta = " << s.closeness_delta << "\nc0 = " << s.c0 << "\n";
    os << "[plasma]\nrho_plus = " << s.pp.rho_plus << "\nrho_minus = " << s.pp.rho_minus
       << "\nalpha = " << s.pp.alpha << "\nv_plus = " << arr2(s.flux.v_plus) << "\nv_minus = " << arr2(s.flux.v_minus)
       << "\nh_plus = " << arr2(s.flux.h_plus) << "\nh_minus = " << arr2(s.flux.h_minus) << "\ns0 = " << s.s0
       << "\n";
    os << "[interface]\ngamma = " << modes(s.gamma_modes) << "\nrate = " << modes(s.rate_modes)
       << "\nnoise = " << s.noise << "\n";
    os << "[fields]\nvorticity = " << arr2(s.vorticity) << "\ncurrent = " << arr2(s.current) << "\n";
    os << "[numerics]\ndt = " << s.pp.dt << "\nt_end = " << s.pp.t_end << "\ncfl = " << s.pp.cfl
       << "\na = " << s.pp.a << "\ntol_picard = " << s.pp.tol_picard << "\ntol_invert = " << s.pp.tol_invert
       << "\ndealias = " << s.pp.dealias << "\nintegrator = \"" << s.integrator
       << "\"\npicard_iters = " << s.picard_iters << "\nremainder = \""
       << (s.variant == Remainder::R0 ? "R0" : "R1") << "\"\nroute = \""
       << (s.chain_route ? "chain" : "curvature") << "\"\nseed = " << s.seed << "\nw_tol = " << s.w_tol
       << "\nenergy_tol = " << s.energy_tol << "\nhn_tol = " << s.hn_tol << "\n";
    os << "[output]\ndir = \"" << s.dir << "\"\ninterval = " << s.interval << "\nsnapshots = " << s.snapshots
       << "\n";
    return os.str();
}

ReferenceChart make_chart(const Scenario& s)
{
    auto t = std::make_shared<Torus>(s.n1, s.n2);
    ReferenceChart c;
    if (s.chart == "tilted")
        c = ReferenceChart::tilted(t, s.z0, s.chart_param);
    else if (s.chart == "bumped")
        c = ReferenceChart::bumped(t, s.z0, s.chart_param);
    else
        c = ReferenceChart::flat(t, s.z0);
    c.closeness_delta = s.closeness_delta;
    c.c0 = s.c0;
    c.validate();
    return c;
}

namespace {

Field modes_field(const ReferenceChart& c, const std::vector<ModeSpec>& ms)
{
    const Field X = c.node_x(), Y = c.node_y();
    Field f(c.size(), 0.0);
    for (const auto& m : ms)
        for (std::size_t k = 0; k < f.size(); ++k)
            f[k] += m.amplitude * std::cos(2 * M_PI * (m.m1 * X[k] + m.m2 * Y[k]) + m.phase);
    return f;
}

} // namespace

Field initial_gamma(const Scenario& s, const ReferenceChart& chart)
{
    Field g = modes_field(chart, s.gamma_modes);
    if (s.noise > 0) {
        // smooth seeded noise: random phases on the lowest modes
        std::mt19937_64 rng(s.seed);
        std::uniform_real_distribution<double> ph(0, 2 * M_PI), amp(0, 1);
        std::vector<ModeSpec> ms;
        for (int m1 = 1; m1 <= 4; ++m1)
            for (int m2 = 0; m2 <= (s.n2 > 1 ? 4 : 0); ++m2) ms.push_back({m1, m2, s.noise * amp(rng) / 4, ph(rng)});
        Field n = modes_field(chart, ms);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n[k];
    }
    return g;
}

SimState initial_state(const Scenario& s, const ReferenceChart& chart)
{
    const Field g = initial_gamma(s, chart), dg = modes_field(chart, s.rate_modes);
    check_height(chart, g);
    SimState st = make_state(chart, g, dg, s.pp, s.flux);
    if (s.vorticity[0] != 0 || s.vorticity[1] != 0 || s.current[0] != 0 || s.current[1] != 0) {
        EllipticOptions eo;
        eo.M = s.pp.M;
        eo.rho_plus = s.pp.rho_plus;
        eo.rho_minus = s.pp.rho_minus;
        Elliptic e(chart, g, eo);
        for (int i = 0; i < 2; ++i) {
            const BulkGrid& G = e.grid(side_of(i));
            for (std::size_t p = 0; p < G.size(); ++p) {
                const double x = G.X[0][p], z = G.X[2][p], d = i == 0 ? z + 1 : 1 - z;
                st.omega_star[i][1][p] = s.vorticity[i] * d * std::cos(2 * M_PI * x);
                st.j_star[i][1][p] = s.current[i] * d * std::cos(2 * M_PI * x);
            }
        }
    }
    return st;
}

} // namespace cvsheet
