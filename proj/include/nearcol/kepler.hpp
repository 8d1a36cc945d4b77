#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "nearcol/core.hpp"
#include "nearcol/errors.hpp"

namespace nearcol {

/// Two-body (mu = 0) closed-form oracle for parabolic motion in the
/// non-rotating frame and conic classification in rotating-frame data.

enum class ConicClass { Elliptic, Parabolic, Hyperbolic, OutOfTable };

enum class ManifoldBranch { Stable, Unstable };

inline constexpr double sqrt2 = 1.4142135623730950488;

/// Radial-collapse coefficient of the zero-angular-momentum parabolic orbit,
/// r(t) = lambda |t|^(2/3).
inline const double lambda_parabolic = std::cbrt(4.5);

/// Classifies the conic of a rotating-frame (h, Theta) pair among orbits
/// crossing Jupiter's circle; boundary equalities resolved within 1e-12,
/// exact boundary mapping to Parabolic.
inline ConicClass classify_conic(double h, double Theta) {
    constexpr double tol = 1e-12;
    const double disc = 2.0 * h + 3.0;
    if (std::abs(Theta + h) <= tol && h >= -sqrt2 - tol && h <= sqrt2 + tol)
        return ConicClass::Parabolic;
    if (h > -sqrt2 && Theta > -h)
        return ConicClass::Hyperbolic;
    if (disc > 0.0) {
        const double root = std::sqrt(disc);
        const double lo = 1.0 - root, hi = 1.0 + root;
        if (h > -1.5 && h < -sqrt2 && Theta >= lo - tol && Theta <= hi + tol)
            return ConicClass::Elliptic;
        if (h >= -sqrt2 && h < sqrt2 && Theta >= lo - tol && Theta < -h)
            return ConicClass::Elliptic;
    }
    return ConicClass::OutOfTable;
}

/// Time along the parabolic orbit as a function of the w parameter.
inline double t_of_w(double w, double Theta0) {
    return 0.5 * (w * w * w / 3.0 + Theta0 * Theta0 * w);
}

namespace detail {

inline void check_parabolic_momentum(double Theta0, const char* who) {
    if (!(std::abs(Theta0) <= sqrt2 * (1.0 + 1e-14)))
        throw InvalidParameter(std::string(who) + ": Theta0 must lie in [-sqrt(2), sqrt(2)]");
}

} // namespace detail

/// Unique real solution of t = (w^3/3 + Theta0^2 w)/2, monotone in t.
inline double w_of_t(double t, double Theta0) {
    detail::check_parabolic_momentum(Theta0, "w_of_t");
    if (t == 0.0) return 0.0;
    if (t < 0.0) return -w_of_t(-t, Theta0);
    const double Th2 = Theta0 * Theta0;
    double w;
    if (std::abs(Theta0) < 1e-4) {
        w = std::cbrt(6.0 * t);
    } else {
        const double A = 3.0 * t + std::sqrt(9.0 * t * t + Th2 * Th2 * Th2);
        const double u = std::cbrt(A);
        w = u - Th2 / u;
    }
    for (int it = 0; it < 3; ++it) {
        const double f = t_of_w(w, Theta0) - t;
        const double fp = 0.5 * (w * w + Th2);
        if (fp == 0.0) break;
        const double step = f / fp;
        w -= step;
        if (std::abs(step) <= 1e-16 * (1.0 + std::abs(w))) break;
    }
    return w;
}

/// State of the parabolic orbit in non-rotating polar coordinates.
struct ParabolicState {
    double r;
    double theta;
    double R;
    double Theta;
};

/// Parabolic orbit through collision at t = 0 with angle offset theta0.
inline ParabolicState parabolic_state(double t, double theta0, double Theta0) {
    detail::check_parabolic_momentum(Theta0, "parabolic_state");
    if (Theta0 == 0.0) {
        if (t == 0.0)
            throw SingularAtZero("parabolic_state: radial branch undefined at t = 0");
        const double at = std::abs(t);
        const double r = lambda_parabolic * std::cbrt(at * at);
        const double R = (t > 0 ? 1.0 : -1.0) * std::sqrt(2.0 / lambda_parabolic) / std::cbrt(at);
        return ParabolicState{r, theta0, R, 0.0};
    }
    const double w = w_of_t(t, Theta0);
    const double s = w * w + Theta0 * Theta0;
    return ParabolicState{0.5 * s, theta0 + 2.0 * std::atan(w / Theta0), 2.0 * w / s, Theta0};
}

/// Collision time and launch angle such that the orbit meets Jupiter's circle
/// (r = 1 at angle t_c) at time t_c.
struct CollisionParameters {
    double t_c;
    double theta_c;
};

inline CollisionParameters collision_parameters(double Theta0) {
    detail::check_parabolic_momentum(Theta0, "collision_parameters");
    const double Th2 = Theta0 * Theta0;
    const double w_c = std::sqrt(std::max(0.0, 2.0 - Th2));
    const double t_c = w_c * (1.0 + Th2) / 3.0;
    const double theta_c = (Theta0 == 0.0) ? t_c : t_c - 2.0 * std::atan(w_c / Theta0);
    return CollisionParameters{t_c, theta_c};
}

/// Graph of the mu = 0 infinity manifolds over radius: R = +-sqrt(2r - Theta0^2)/r,
/// positive sign for the stable branch.
inline std::pair<double, double> kepler_infinity_graph(double r_hat, double Theta0,
                                                       ManifoldBranch branch) {
    const double margin = 2.0 * r_hat - Theta0 * Theta0;
    if (!(margin > 0.0))
        throw BelowPericenter("kepler_infinity_graph: r must exceed Theta0^2/2");
    const double R = std::sqrt(margin) / r_hat;
    return {branch == ManifoldBranch::Stable ? R : -R, Theta0};
}

} // namespace nearcol
