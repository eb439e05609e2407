#pragma once

#include <cmath>

namespace cvsheet {

// Truncated Taylor series c0 + c1 s + c2 s^2 in one parameter. Pushing a jet
// through the geometry gives the first and second variations exactly.
struct Jet {
    double c0 = 0, c1 = 0, c2 = 0;
    Jet() = default;
    Jet(double v) : c0(v) {}
    Jet(double a, double b, double c) : c0(a), c1(b), c2(c) {}

    Jet& operator+=(const Jet& o) { c0 += o.c0; c1 += o.c1; c2 += o.c2; return *this; }
    Jet& operator-=(const Jet& o) { c0 -= o.c0; c1 -= o.c1; c2 -= o.c2; return *this; }
    Jet& operator*=(const Jet& o) { *this = mul(*this, o); return *this; }
    Jet operator-() const { return {-c0, -c1, -c2}; }

    static Jet mul(const Jet& a, const Jet& b)
    {
        return {a.c0 * b.c0, a.c0 * b.c1 + a.c1 * b.c0, a.c0 * b.c2 + a.c1 * b.c1 + a.c2 * b.c0};
    }
};

inline Jet operator+(Jet a, const Jet& b) { return a += b; }
inline Jet operator-(Jet a, const Jet& b) { return a -= b; }
inline Jet operator*(const Jet& a, const Jet& b) { return Jet::mul(a, b); }
inline Jet operator/(const Jet& a, const Jet& b)
{
    double q0 = a.c0 / b.c0;
    double q1 = (a.c1 - q0 * b.c1) / b.c0;
    double q2 = (a.c2 - q0 * b.c2 - q1 * b.c1) / b.c0;
    return {q0, q1, q2};
}
inline Jet sqrt(const Jet& a)
{
    double r0 = std::sqrt(a.c0);
    double r1 = a.c1 / (2 * r0);
    double r2 = (a.c2 - r1 * r1) / (2 * r0);
    return {r0, r1, r2};
}
inline double value(const Jet& a) { return a.c0; }
inline double value(double a) { return a; }

} // namespace cvsheet
