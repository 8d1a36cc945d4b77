#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "nearcol/core.hpp"
#include "nearcol/errors.hpp"

namespace nearcol {

/// Reduces an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * pi);
    if (a <= -pi) a += 2.0 * pi;
    if (a > pi) a -= 2.0 * pi;
    return a;
}

/// Unwraps a sequence of angles in place so consecutive jumps stay below pi.
inline void unwrap_angles(std::vector<double>& a) {
    for (std::size_t i = 1; i < a.size(); ++i) {
        double d = a[i] - a[i - 1];
        while (d > pi) { a[i] -= 2.0 * pi; d = a[i] - a[i - 1]; }
        while (d < -pi) { a[i] += 2.0 * pi; d = a[i] - a[i - 1]; }
    }
}

/// Brent root finder on a bracketing interval [a, b] with f(a)f(b) <= 0.
inline double find_root_bracketed(const std::function<double(double)>& f, double a, double b,
                                  double tol = 1e-14, int max_iter = 200) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw NoSignChange("find_root_bracketed: no sign change on bracket");
    double c = a, fc = fa, d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * tol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double p, q, r;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                q = fa / fc; r = fb / fc;
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
                q = (q - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d; d = p / q;
            } else {
                d = xm; e = d;
            }
        } else {
            d = xm; e = d;
        }
        a = b; fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) { c = a; fc = fa; d = b - a; e = d; }
    }
    throw NoConvergence("find_root_bracketed: iteration budget exhausted");
}

/// Secant iteration from x0, x1; falls back on bisection when a bracket appears.
inline double find_root_secant(const std::function<double(double)>& f, double x0, double x1,
                               double tol = 1e-14, int max_iter = 80) {
    double f0 = f(x0), f1 = f(x1);
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(f1) == 0.0 || std::abs(x1 - x0) < tol) return x1;
        if (f0 * f1 < 0.0)
            return find_root_bracketed(f, std::min(x0, x1), std::max(x0, x1), tol);
        const double denom = f1 - f0;
        if (denom == 0.0) throw DegenerateZero("find_root_secant: flat secant");
        const double x2 = x1 - f1 * (x1 - x0) / denom;
        x0 = x1; f0 = f1;
        x1 = x2; f1 = f(x1);
    }
    throw NoConvergence("find_root_secant: iteration budget exhausted");
}

/// Monotone cubic interpolant (Fritsch-Carlson) on strictly increasing nodes.
class PchipInterpolant {
public:
    PchipInterpolant() = default;

    PchipInterpolant(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n)
            throw InvalidParameter("PchipInterpolant: need >= 2 nodes and matching sizes");
        for (std::size_t i = 1; i < n; ++i)
            if (!(x_[i] > x_[i - 1]))
                throw InvalidParameter("PchipInterpolant: nodes must strictly increase");
        d_.assign(n, 0.0);
        std::vector<double> h(n - 1), delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            delta[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        if (n == 2) {
            d_[0] = d_[1] = delta[0];
            return;
        }
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0.0) {
                d_[i] = 0.0;
            } else {
                const double w1 = 2.0 * h[i] + h[i - 1];
                const double w2 = h[i] + 2.0 * h[i - 1];
                d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d_[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
        d_[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    double min_x() const { return x_.front(); }
    double max_x() const { return x_.back(); }
    const std::vector<double>& nodes() const { return x_; }
    const std::vector<double>& values() const { return y_; }

    double operator()(double x) const {
        const auto [i, s, h] = locate(x);
        const double t = s / h;
        const double t2 = t * t, t3 = t2 * t;
        return y_[i] * (2 * t3 - 3 * t2 + 1) + h * d_[i] * (t3 - 2 * t2 + t) +
               y_[i + 1] * (-2 * t3 + 3 * t2) + h * d_[i + 1] * (t3 - t2);
    }

    double derivative(double x) const {
        const auto [i, s, h] = locate(x);
        const double t = s / h;
        const double t2 = t * t;
        return (y_[i] * (6 * t2 - 6 * t) + h * d_[i] * (3 * t2 - 4 * t + 1) +
                y_[i + 1] * (-6 * t2 + 6 * t) + h * d_[i + 1] * (3 * t2 - 2 * t)) / h;
    }

private:
    static double edge_slope(double h0, double h1, double del0, double del1) {
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (d * del0 <= 0.0)
            d = 0.0;
        else if (del0 * del1 < 0.0 && std::abs(d) > 3.0 * std::abs(del0))
            d = 3.0 * del0;
        return d;
    }

    struct Cell { std::size_t i; double s; double h; };

    Cell locate(double x) const {
        if (x < x_.front() - 1e-12 * (1 + std::abs(x_.front())) ||
            x > x_.back() + 1e-12 * (1 + std::abs(x_.back())))
            throw OutOfDomain("PchipInterpolant: query outside node range");
        x = std::clamp(x, x_.front(), x_.back());
        const auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = static_cast<std::size_t>(std::distance(x_.begin(), it));
        i = std::clamp<std::size_t>(i, 1, x_.size() - 1) - 1;
        return Cell{i, x - x_[i], x_[i + 1] - x_[i]};
    }

    std::vector<double> x_, y_, d_;
};

namespace detail {

// 15-point Kronrod nodes/weights with embedded 7-point Gauss (positive half).
inline constexpr double gk_nodes[8] = {
    0.0, 0.2077849550078985, 0.4058451513773972, 0.5860872354676911,
    0.7415311855993944, 0.8648644233597691, 0.9491079123427585, 0.9914553711208126};
inline constexpr double gk_wk[8] = {
    0.2094821410847278, 0.2044329400752989, 0.1903505780647854, 0.1690047266392679,
    0.1406532597155259, 0.1047900103222502, 0.0630920926299785, 0.0229353220105292};
inline constexpr double gk_wg[4] = {
    0.4179591836734694, 0.3818300505051189, 0.2797053914892767, 0.1294849661688697};

inline std::pair<double, double> gk15(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
    double resk = 0.0, resg = 0.0;
    const double f0 = f(c);
    resk += gk_wk[0] * f0;
    resg += gk_wg[0] * f0;
    for (int j = 1; j < 8; ++j) {
        const double fp = f(c + hw * gk_nodes[j]);
        const double fm = f(c - hw * gk_nodes[j]);
        resk += gk_wk[j] * (fp + fm);
        if (j % 2 == 0) resg += gk_wg[j / 2] * (fp + fm);
    }
    return {resk * hw, std::abs(resk - resg) * hw};
}

} // namespace detail

/// Adaptive Gauss-Kronrod 15(7) quadrature on [a, b] (a > b allowed).
inline double integrate_gk(const std::function<double(double)>& f, double a, double b,
                           double tol = 1e-12, int max_depth = 48) {
    if (a == b) return 0.0;
    double sign = 1.0;
    if (a > b) { std::swap(a, b); sign = -1.0; }
    struct Seg { double a, b; int depth; };
    std::vector<Seg> stack{{a, b, 0}};
    double total = 0.0;
    const double seg_tol = tol / (b - a);
    while (!stack.empty()) {
        const Seg s = stack.back();
        stack.pop_back();
        const auto [val, err] = detail::gk15(f, s.a, s.b);
        if (err <= seg_tol * (s.b - s.a) || s.depth >= max_depth) {
            if (s.depth >= max_depth && err > 1e3 * seg_tol * (s.b - s.a))
                throw QuadratureFailure("integrate_gk: refinement limit without convergence");
            total += val;
        } else {
            const double m = 0.5 * (s.a + s.b);
            stack.push_back({s.a, m, s.depth + 1});
            stack.push_back({m, s.b, s.depth + 1});
        }
    }
    return sign * total;
}

/// Least-squares slope and intercept of y against x.
inline std::pair<double, double> fit_line(const std::vector<double>& x,
                                          const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw InvalidParameter("fit_line: need >= 2 matching points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i]; sy += y[i];
        sxx += x[i] * x[i]; sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw DegenerateZero("fit_line: singular normal equations");
    const double slope = (n * sxy - sx * sy) / denom;
    return {slope, (sy - slope * sx) / n};
}

} // namespace nearcol
