#include "cvsheet/stability.hpp"

#include "cvsheet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace cvsheet {

namespace {

constexpr int kDirections = 720;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm2(const Vec3& a) { return dot(a, a); }

Vec3 at(const V3& f, std::size_t k) { return {f[0][k], f[1][k], f[2][k]}; }

struct Weights {
    double lam, c;
};

Weights weights(double rho_p, double rho_m)
{
    const double s = rho_p + rho_m;
    return {rho_p / s, rho_p * rho_m / (s * s)};
}

// Q(theta) = A cos^2 + 2 B cos sin + C sin^2 in an orthonormal tangent frame.
struct Quad {
    double A, B, C;
    double operator()(double th) const
    {
        const double c = std::cos(th), s = std::sin(th);
        return A * c * c + 2 * B * c * s + C * s * s;
    }
    double d1(double th) const { return (C - A) * std::sin(2 * th) + 2 * B * std::cos(2 * th); }
    double d2(double th) const { return 2 * (C - A) * std::cos(2 * th) - 4 * B * std::sin(2 * th); }
    double min_eig() const { return 0.5 * (A + C) - std::hypot(0.5 * (A - C), B); }
};

Quad make_quad(const Vec3& e1, const Vec3& e2, const Vec3& hp, const Vec3& hm, const Vec3& w, Weights W)
{
    const double p1 = dot(hp, e1), p2 = dot(hp, e2), m1 = dot(hm, e1), m2 = dot(hm, e2);
    const double w1 = dot(w, e1), w2 = dot(w, e2);
    const double l = W.lam, r = 1 - W.lam;
    return {l * p1 * p1 + r * m1 * m1 - W.c * w1 * w1, l * p1 * p2 + r * m1 * m2 - W.c * w1 * w2,
            l * p2 * p2 + r * m2 * m2 - W.c * w2 * w2};
}

// Grid scan over [0, pi) (Q is pi-periodic) and one Newton step.
std::pair<double, double> scan(const Quad& q)
{
    double best = std::numeric_limits<double>::infinity(), th_best = 0;
    for (int i = 0; i < kDirections; ++i) {
        const double th = M_PI * i / kDirections, v = q(th);
        if (v < best) {
            best = v;
            th_best = th;
        }
    }
    const double h = q.d2(th_best);
    if (h > 0) {
        const double th = th_best - q.d1(th_best) / h, v = q(th);
        if (v < best) {
            best = v;
            th_best = th;
        }
    }
    return {best, th_best};
}

void tangent_frame(const SurfaceGeometry& sg, std::size_t k, Vec3& e1, Vec3& e2)
{
    Vec3 a = at(sg.dphi[0], k), b = at(sg.dphi[1], k);
    const double na = std::sqrt(norm2(a));
    for (auto& x : a) x /= na;
    const double p = dot(a, b);
    for (int i = 0; i < 3; ++i) b[i] -= p * a[i];
    const double nb = std::sqrt(norm2(b));
    for (auto& x : b) x /= nb;
    e1 = a;
    e2 = b;
}

UpsilonResult node_upsilon(const SurfaceGeometry& sg, std::size_t k, const V3& hp, const V3& hm, const V3& w,
                           Weights W)
{
    Vec3 e1, e2;
    tangent_frame(sg, k, e1, e2);
    const Quad q = make_quad(e1, e2, at(hp, k), at(hm, k), at(w, k), W);
    auto [v, th] = scan(q);
    UpsilonResult r;
    r.value = v;
    r.node = k;
    for (int i = 0; i < 3; ++i) r.direction[i] = std::cos(th) * e1[i] + std::sin(th) * e2[i];
    return r;
}

} // namespace

double stability_form(const Vec3& a, const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m)
{
    const Weights W = weights(rho_p, rho_m);
    const double p = dot(a, hp), m = dot(a, hm), v = dot(a, w);
    return W.lam * p * p + (1 - W.lam) * m * m - W.c * v * v;
}

UpsilonResult upsilon(const SurfaceGeometry& sg, const V3& hp, const V3& hm, const V3& w, double rho_p,
                      double rho_m)
{
    const Weights W = weights(rho_p, rho_m);
    const long n = long(sg.kappa.size());
    std::vector<UpsilonResult> per(n);
#pragma omp parallel for
    for (long k = 0; k < n; ++k) per[k] = node_upsilon(sg, std::size_t(k), hp, hm, w, W);
    UpsilonResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (const auto& r : per)
        if (r.value < best.value) best = r;
    return best;
}

UpsilonResult upsilon_serial(const SurfaceGeometry& sg, const V3& hp, const V3& hm, const V3& w, double rho_p,
                             double rho_m)
{
    const Weights W = weights(rho_p, rho_m);
    UpsilonResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sg.kappa.size(); ++k) {
        UpsilonResult r = node_upsilon(sg, k, hp, hm, w, W);
        if (r.value < best.value) best = r;
    }
    return best;
}

UpsilonResult upsilon(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m)
{
    const Quad q = make_quad({1, 0, 0}, {0, 1, 0}, hp, hm, w, weights(rho_p, rho_m));
    auto [v, th] = scan(q);
    UpsilonResult r;
    r.value = v;
    r.direction = {std::cos(th), std::sin(th), 0};
    return r;
}

Field tensor_form_min_eig(const SurfaceGeometry& sg, const V3& hp, const V3& hm, const V3& w, double rho_p,
                          double rho_m)
{
    const Weights W = weights(rho_p, rho_m);
    Field out(sg.kappa.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        Vec3 e1, e2;
        tangent_frame(sg, k, e1, e2);
        out[k] = make_quad(e1, e2, at(hp, k), at(hm, k), at(w, k), W).min_eig();
    }
    return out;
}

double tensor_form_min_eig(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m)
{
    return make_quad({1, 0, 0}, {0, 1, 0}, hp, hm, w, weights(rho_p, rho_m)).min_eig();
}

double syro_strict_margin(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m)
{
    return (rho_p + rho_m) * norm2(cross(hp, hm)) - rho_p * norm2(cross(hp, w)) - rho_m * norm2(cross(hm, w));
}

bool SyroCheck::all() const
{
    return std::all_of(ok.begin(), ok.end(), [](std::uint8_t b) { return b != 0; });
}

double SyroCheck::min_margin() const
{
    return margin.empty() ? 0.0 : *std::min_element(margin.begin(), margin.end());
}

SyroCheck check_syro_strict(const V3& hp, const V3& hm, const V3& w, double rho_p, double rho_m)
{
    SyroCheck r;
    const std::size_t n = hp[0].size();
    r.ok.resize(n);
    r.margin.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        r.margin[k] = syro_strict_margin(at(hp, k), at(hm, k), at(w, k), rho_p, rho_m);
        r.ok[k] = r.margin[k] > 0;
    }
    return r;
}

std::pair<bool, bool> syr_classical(const Vec3& hp, const Vec3& hm, const Vec3& w, double rho_p, double rho_m)
{
    const bool first = rho_p * norm2(hp) + rho_m * norm2(hm) > rho_p * rho_m / (rho_p + rho_m) * norm2(w);
    const bool second = syro_strict_margin(hp, hm, w, rho_p, rho_m) >= 0;
    return {first, second};
}

bool ClassicalCheck::all_first() const
{
    return std::all_of(first.begin(), first.end(), [](std::uint8_t b) { return b != 0; });
}

bool ClassicalCheck::all_second() const
{
    return std::all_of(second.begin(), second.end(), [](std::uint8_t b) { return b != 0; });
}

ClassicalCheck check_syr_classical(const V3& hp, const V3& hm, const V3& w, double rho_p, double rho_m)
{
    ClassicalCheck r;
    const std::size_t n = hp[0].size();
    r.first.resize(n);
    r.second.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto [a, b] = syr_classical(at(hp, k), at(hm, k), at(w, k), rho_p, rho_m);
        r.first[k] = a;
        r.second[k] = b;
    }
    return r;
}

bool strong_stability(const Vec3& hp, const Vec3& hm, const Vec3& w)
{
    const double lhs = norm2(cross(hp, hm));
    return lhs > norm2(cross(hp, w)) && lhs > norm2(cross(hm, w));
}

bool check_strong_stability(const V3& hp, const V3& hm, const V3& w)
{
    for (std::size_t k = 0; k < hp[0].size(); ++k)
        if (!strong_stability(at(hp, k), at(hm, k), at(w, k))) return false;
    return true;
}

StrictConditionReport strict_condition_test(int n_samples, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1), lr(std::log(0.1), std::log(10.0));
    StrictConditionReport rep;
    rep.samples = n_samples;
    for (int i = 0; i < n_samples; ++i) {
        const Vec3 hp{u(rng), u(rng), 0}, hm{u(rng), u(rng), 0}, w{1.5 * u(rng), 1.5 * u(rng), 0};
        const double rp = std::exp(lr(rng)), rm = std::exp(lr(rng)), s = std::exp(lr(rng));
        const double ups = upsilon(hp, hm, w, rp, rm).value;
        Vec3 shp = hp, shm = hm, sw = w;
        for (int q = 0; q < 3; ++q) {
            shp[q] *= s;
            shm[q] *= s;
            sw[q] *= s;
        }
        const double scaled = upsilon(shp, shm, sw, rp, rm).value;
        rep.homogeneity_error = std::max(rep.homogeneity_error, std::abs(scaled / (s * s) - ups));
        if (syro_strict_margin(hp, hm, w, rp, rm) <= 0) continue;
        ++rep.strict;
        const double eig = tensor_form_min_eig(hp, hm, w, rp, rm);
        if (!(ups > 0) || eig < ups - 1e-9) ++rep.violations;
        auto [c1, c2] = syr_classical(hp, hm, w, rp, rm);
        if (!c1 || !c2) ++rep.classical_violations;
    }
    return rep;
}

Dispersion dispersion_rate(const std::array<double, 2>& k, const DispersionParams& p)
{
    const double kk = std::hypot(k[0], k[1]);
    if (kk == 0) throw ZeroWavevector("dispersion_rate needs k != 0");
    const Weights W = weights(p.rho_plus, p.rho_minus);
    const double Np = kk * std::tanh(kk * p.d_plus), Nm = kk * std::tanh(kk * p.d_minus);
    const double Nt = Np * Nm / (p.rho_minus * Np + p.rho_plus * Nm);
    const Vec3 kv{k[0], k[1], 0};
    const double wk = dot(p.w, kv), hpk = dot(p.hp, kv), hmk = dot(p.hm, kv);
    Dispersion d;
    d.omega2 = p.alpha * p.alpha * kk * kk * Nt - W.c * wk * wk + W.lam * hpk * hpk + (1 - W.lam) * hmk * hmk;
    d.stable = d.omega2 >= 0;
    return d;
}

double unstable_cutoff(double theta, const DispersionParams& p, double tol)
{
    const Vec3 a{std::cos(theta), std::sin(theta), 0};
    const double q = stability_form(a, p.hp, p.hm, p.w, p.rho_plus, p.rho_minus);
    if (q >= 0) return 0;
    if (p.alpha == 0) return std::numeric_limits<double>::infinity();
    // omega^2 / k^2 = alpha^2 Ntilde(k) + q, with Ntilde increasing from 0
    auto f = [&](double k) { return dispersion_rate({k * a[0], k * a[1]}, p).omega2 / (k * k); };
    double lo = 1e-12, hi = 1;
    while (f(hi) < 0) {
        lo = hi;
        hi *= 2;
    }
    while (hi - lo > tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

namespace {

cplx mode_amplitude(const ReferenceChart& chart, const Field& f, std::array<int, 2> m)
{
    const Field X = chart.node_x(), Y = chart.node_y();
    cplx s = 0;
    for (std::size_t k = 0; k < f.size(); ++k)
        s += f[k] * std::exp(cplx(0, -2 * M_PI * (m[0] * X[k] + m[1] * Y[k])));
    return s / double(f.size());
}

} // namespace

std::vector<GrowthMeasurement> measure_growth_rates(const ReferenceChart& chart, const SimState& s0,
                                                    const PlasmaParams& pp,
                                                    const std::vector<std::array<int, 2>>& modes, double dt,
                                                    int steps)
{
    if (steps < 3) throw InsufficientSamples("growth fit needs at least 3 steps");
    std::vector<std::vector<cplx>> b(modes.size());
    SimState s = s0;
    const double lam = pp.lambda();
    Vec2 u{lam * s0.flux.v_plus[0] + (1 - lam) * s0.flux.v_minus[0],
           lam * s0.flux.v_plus[1] + (1 - lam) * s0.flux.v_minus[1]};
    for (int i = 0; i <= steps; ++i) {
        for (std::size_t q = 0; q < modes.size(); ++q) {
            const double ku = 2 * M_PI * (modes[q][0] * u[0] + modes[q][1] * u[1]);
            b[q].push_back(mode_amplitude(chart, s.kappa_a, modes[q]) * std::exp(cplx(0, ku * s.t)));
        }
        if (i < steps) s = time_step(chart, s, pp, dt);
    }
    std::vector<GrowthMeasurement> out;
    for (const auto& bq : b) {
        double num = 0, den = 0;
        std::vector<cplx> acc(bq.size());
        for (std::size_t i = 1; i + 1 < bq.size(); ++i) {
            acc[i] = (bq[i + 1] - 2.0 * bq[i] + bq[i - 1]) / (dt * dt);
            num += std::real(std::conj(bq[i]) * acc[i]);
            den += std::norm(bq[i]);
        }
        GrowthMeasurement g;
        g.samples = int(bq.size());
        g.omega2 = den > 0 ? -num / den : 0;
        double mis = 0, ref = 0;
        for (std::size_t i = 1; i + 1 < bq.size(); ++i) {
            mis += std::norm(acc[i] + g.omega2 * bq[i]);
            ref += std::norm(acc[i]);
        }
        g.residual = ref > 0 ? std::sqrt(mis / ref) : 0;
        if (g.residual > 0.1) {
            std::ostringstream os;
            os << "growth fit residual " << g.residual << " exceeds 10%";
            throw NonlinearContamination(os.str());
        }
        out.push_back(g);
    }
    return out;
}

GrowthMeasurement measure_growth_rate(const ReferenceChart& chart, const SimState& s, const PlasmaParams& pp,
                                      std::array<int, 2> mode, double dt, int steps)
{
    return measure_growth_rates(chart, s, pp, {mode}, dt, steps).front();
}

InterfaceFields interface_fields(const Evaluation& ev)
{
    InterfaceFields f{ev.H[0], ev.H[1], ev.V[0]};
    for (int q = 0; q < 3; ++q)
        for (std::size_t k = 0; k < f.w[q].size(); ++k) f.w[q][k] -= ev.V[1][q][k];
    return f;
}

} // namespace cvsheet
