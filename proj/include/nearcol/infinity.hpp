#pragma once

// Manifolds of parabolic infinity: the Fourier-grid generating-function
// solver for their graph correction over the unperturbed parabola, and the
// section curves traced by the full flow near Jupiter and on outer rings.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/curves.hpp"
#include "nearcol/dynamics.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/kepler.hpp"
#include "nearcol/numutil.hpp"

namespace nearcol {

inline constexpr double sqrt3 = 1.732050807568877293527446341505872367;

// Angular-momentum windows quoted by the two statements that use the section
// curves. They disagree; both are exposed and neither is adjudicated here.
// Experiments run at Theta0 = 1, inside the curve window only.
inline constexpr double theta0_curve_window_lo = (1.0 - sqrt3) / 2.0;
inline constexpr double theta0_curve_window_hi = (1.0 + sqrt3) / 2.0;
inline constexpr double theta0_transversality_window_lo = (1.0 - sqrt3) / 3.0;
inline constexpr double theta0_transversality_window_hi = (1.0 + sqrt3) / 3.0;

/// Primaries' potential minus the Kepler term 1/r, in center-of-mass polar
/// coordinates. Vanishes identically at mu = 0 and decays like r^{-3}.
inline double perturbing_potential_cm(double r, double theta, double mu) {
    if (mu == 0.0) return 0.0;
    if (!(r > 0.0)) throw InvalidParameter("perturbing_potential_cm: needs r > 0");
    const double m = 1.0 - mu;
    const double c = std::cos(theta);
    const double ds = std::sqrt(r * r + 2.0 * r * mu * c + mu * mu);
    const double dj = std::sqrt(r * r - 2.0 * r * m * c + m * m);
    if (ds == 0.0 || dj == 0.0)
        throw CollisionSingularity("perturbing_potential_cm: point at a primary");
    // Factored difference form: the naive sum of the three terms cancels to
    // O(mu / r^3) and its absolute rounding noise would swamp the high
    // angular modes at large radii.
    return mu * m / r *
           ((2.0 * r * c - m) / (dj * (r + dj)) - (2.0 * r * c + mu) / (ds * (r + ds)));
}

/// Leading-order laws of the infinity-manifold curves on the section
/// r_jup = mu^nu, unstable branch: R = infinity_R_leading + o(1) and
/// Theta = mu^nu * infinity_Theta_leading + O(mu^{2 nu}).
inline double infinity_R_leading(double theta, double Theta0) {
    return -std::cos(theta) * std::sqrt(2.0 - Theta0 * Theta0) +
           std::sin(theta) * (Theta0 - 1.0);
}

inline double infinity_Theta_leading(double theta, double Theta0) {
    return std::sin(theta) * std::sqrt(2.0 - Theta0 * Theta0) +
           std::cos(theta) * (Theta0 - 1.0);
}

/// Upper end of the grid domain: the time at which the unperturbed parabola
/// of angular momentum Theta0 reaches radius 1 - mu + kappa mu^nu.
inline double hj_domain_edge(double mu, double nu, double Theta0, double kappa) {
    const double rho = 1.0 - mu + kappa * std::pow(mu, nu);
    const double arg = 2.0 * rho - Theta0 * Theta0;
    if (!(arg > 0.0))
        throw InvalidParameter("hj_domain_edge: domain edge radius below the pericenter");
    return -std::sqrt(arg) * (rho + Theta0 * Theta0) / 3.0;
}

/// Strip width sigma_0 pairing with the weighted norm on the solver grid.
inline double hj_strip_width(double mu, double nu, double kappa) {
    const double m = 1.0 - mu;
    return 0.5 * std::log((m + kappa * std::pow(mu, nu)) / m);
}

/// Real function on (-inf, u_max] x T stored as Fourier modes in the angle at
/// each grid node. Only modes k >= 0 are kept; f^[-k] = conj(f^[k]) holds by
/// construction, so the represented function is real.
struct GridFourierFunction {
    std::vector<double> u_grid;  // strictly decreasing, u_grid[0] = u_max
    std::vector<std::vector<std::complex<double>>> modes;  // modes[k][j]
    double sigma = 0.0;          // strip width used by the weighted norm

    int max_mode() const { return static_cast<int>(modes.size()) - 1; }
    std::size_t size() const { return u_grid.size(); }

    /// Value at (u_grid[j], v).
    double value(std::size_t j, double v) const {
        double s = modes[0][j].real();
        for (std::size_t k = 1; k < modes.size(); ++k)
            s += 2.0 * (modes[k][j] * std::polar(1.0, double(k) * v)).real();
        return s;
    }
};

namespace detail {

inline void validate_grid_fourier(const GridFourierFunction& f, const char* who) {
    if (f.u_grid.size() < 8)
        throw InvalidParameter(std::string(who) + ": needs at least 8 grid nodes");
    if (f.modes.empty()) throw InvalidParameter(std::string(who) + ": needs at least mode 0");
    for (std::size_t i = 1; i < f.u_grid.size(); ++i)
        if (!(f.u_grid[i] < f.u_grid[i - 1]))
            throw InvalidParameter(std::string(who) + ": u_grid must be strictly decreasing");
    for (const auto& m : f.modes)
        if (m.size() != f.u_grid.size())
            throw InvalidParameter(std::string(who) + ": mode/grid size mismatch");
}

/// Finite-difference weights of the m-th derivative at z on arbitrary
/// distinct nodes x[0..n-1] (Fornberg recursion).
inline void fd_weights(double z, const double* x, int n, int m, double* w) {
    std::vector<double> c(std::size_t(n) * (m + 1), 0.0);
    auto C = [&](int j, int k) -> double& { return c[std::size_t(j) * (m + 1) + k]; };
    double c1 = 1.0;
    double c4 = x[0] - z;
    C(0, 0) = 1.0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - z;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    C(i, k) = c1 * (k * C(i - 1, k - 1) - c5 * C(i - 1, k)) / c2;
                C(i, 0) = -c1 * c5 * C(i - 1, 0) / c2;
            }
            for (int k = mn; k >= 1; --k) C(j, k) = (c4 * C(j, k) - k * C(j, k - 1)) / c3;
            C(j, 0) = c4 * C(j, 0) / c3;
        }
        c1 = c2;
    }
    for (int j = 0; j < n; ++j) w[j] = C(j, m);
}

/// First derivative of samples y over nodes x, five-point stencils.
template <class T>
std::vector<T> fd_derivative(const std::vector<double>& x, const std::vector<T>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw InvalidParameter("fd_derivative: size mismatch");
    const std::size_t ns = std::min<std::size_t>(5, n);
    std::vector<T> d(n);
    std::array<double, 5> w{};
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i >= 2 ? i - 2 : 0;
        if (lo + ns > n) lo = n - ns;
        fd_weights(x[i], x.data() + lo, int(ns), 1, w.data());
        T acc{};
        for (std::size_t j = 0; j < ns; ++j) acc += w[j] * y[lo + j];
        d[i] = acc;
    }
    return d;
}

/// In-place radix-2 transform; forward sums e^{-2 pi i k m / M}, inverse sums
/// e^{+2 pi i k m / M}. Neither direction normalizes.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw InvalidParameter("fft_inplace: size must be 2^m");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * pi / double(len);
        const std::complex<double> wl = std::polar(1.0, ang);
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// Real values on v_m = 2 pi m / M from modes k = 0..K (conjugate-extended).
inline std::vector<double> values_on_circle(const std::vector<std::complex<double>>& fk,
                                            std::size_t M) {
    std::vector<std::complex<double>> a(M, {0.0, 0.0});
    a[0] = fk[0];
    for (std::size_t k = 1; k < fk.size(); ++k) {
        a[k] = fk[k];
        a[M - k] = std::conj(fk[k]);
    }
    fft_inplace(a, true);
    std::vector<double> out(M);
    for (std::size_t m = 0; m < M; ++m) out[m] = a[m].real();
    return out;
}

/// Modes k = 0..K of real values sampled on v_m = 2 pi m / M.
inline std::vector<std::complex<double>> modes_on_circle(const std::vector<double>& vals,
                                                         int K) {
    const std::size_t M = vals.size();
    std::vector<std::complex<double>> a(M);
    for (std::size_t m = 0; m < M; ++m) a[m] = vals[m];
    fft_inplace(a, false);
    std::vector<std::complex<double>> fk(std::size_t(K) + 1);
    for (int k = 0; k <= K; ++k) fk[std::size_t(k)] = a[std::size_t(k)] / double(M);
    return fk;
}

/// Moments int_0^h x^m e^{-i k x} dx for m = 0..3. Taylor series below
/// |kh| = 1/2, upward by-parts recursion above it.
inline std::array<std::complex<double>, 4> filon_moments(double h, double k) {
    std::array<std::complex<double>, 4> I{};
    if (k == 0.0) {
        double hp = h;
        for (int m = 0; m < 4; ++m) {
            I[m] = hp / double(m + 1);
            hp *= h;
        }
        return I;
    }
    const std::complex<double> ik(0.0, k);
    if (std::abs(k * h) < 0.5) {
        double hp = h;
        for (int m = 0; m < 4; ++m) {
            std::complex<double> term = hp / double(m + 1);
            std::complex<double> sum = term;
            for (int j = 1; j < 40; ++j) {
                term *= -ik * h * (double(m + j) / (double(j) * double(m + j + 1)));
                sum += term;
                if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
            }
            I[m] = sum;
            hp *= h;
        }
        return I;
    }
    const std::complex<double> e = std::exp(-ik * h);
    I[0] = (1.0 - e) / ik;
    double hm = 1.0;
    for (int m = 1; m < 4; ++m) {
        hm *= h;
        I[m] = (double(m) * I[m - 1] - hm * e) / ik;
    }
    return I;
}

struct TailFit {
    std::complex<double> c{0.0, 0.0};  // value at the last node
    double a = 0.0;                    // decay exponent in c |u/u_N|^{-a}
    bool zero = true;                  // below the noise floor; treated as 0
};

/// Power-law model of a mode beyond the deep end of the grid, fitted on the
/// last two nodes. A tail that has decayed within 3e-14 of the mode's peak is
/// numerical noise with random node-to-node ratios; it is treated as zero
/// rather than fitted. The neglected mass is below 1e-9 of the mode scale.
inline TailFit fit_tail(const std::vector<double>& u,
                        const std::vector<std::complex<double>>& y) {
    const std::size_t n = u.size();
    double peak = 0.0;
    for (const auto& v : y) peak = std::max(peak, std::abs(v));
    const double floor_ = 3e-14 * peak;
    const double aN = std::abs(y[n - 1]);
    const double aP = std::abs(y[n - 2]);
    TailFit fit;
    if (peak == 0.0 || aN <= floor_ || aP <= floor_) return fit;
    fit.zero = false;
    fit.c = y[n - 1];
    fit.a = std::log(aP / aN) / std::log(std::abs(u[n - 1] / u[n - 2]));
    return fit;
}

/// e^{i k u_N} int_{-inf}^{u_N} c |s/u_N|^{-a} e^{-i k s} ds; the outer phase
/// cancels the inner one exactly, so no large argument is ever evaluated.
inline std::complex<double> tail_integral_phased(const TailFit& fit, double uN, double k) {
    if (fit.zero) return {0.0, 0.0};
    if (!(fit.a > 1.0))
        throw TailDivergence("g_operator: tail exponent " + std::to_string(fit.a) +
                             " is not > 1; deepen the grid or damp the input");
    if (k == 0.0) return fit.c * (-uN) / (fit.a - 1.0);
    const std::complex<double> ik(0.0, k);
    const std::complex<double> g0 = fit.c;
    const std::complex<double> g1 = -fit.a / uN * fit.c;
    const std::complex<double> g2 = fit.a * (fit.a + 1.0) / (uN * uN) * fit.c;
    return -(g0 + g1 / ik + g2 / (ik * ik)) / ik;
}

/// Value and u-derivative of mode k at an arbitrary u at or below the grid
/// top; below the deep end the power-law tail model extends the mode.
inline std::pair<std::complex<double>, std::complex<double>> mode_eval(
    const GridFourierFunction& f, std::size_t k, double u) {
    const auto& x = f.u_grid;
    const auto& y = f.modes[k];
    const std::size_t n = x.size();
    if (u > x[0] + 1e-12) throw OutOfDomain("mode_eval: u above the grid top");
    if (u < x[n - 1]) {
        const TailFit fit = fit_tail(x, y);
        if (fit.zero) return {{0.0, 0.0}, {0.0, 0.0}};
        const std::complex<double> val = fit.c * std::pow(std::abs(u / x[n - 1]), -fit.a);
        return {val, -fit.a / u * val};
    }
    // nodes are decreasing: locate the first node below u
    std::size_t hi = std::size_t(std::lower_bound(x.begin(), x.end(), u, std::greater<>()) -
                                 x.begin());
    if (hi == 0) hi = 1;
    std::size_t lo = hi >= 2 ? hi - 2 : 0;
    const std::size_t ns = std::min<std::size_t>(4, n);
    if (lo + ns > n) lo = n - ns;
    std::array<double, 5> w0{};
    std::array<double, 5> w1{};
    fd_weights(u, x.data() + lo, int(ns), 0, w0.data());
    fd_weights(u, x.data() + lo, int(ns), 1, w1.data());
    std::complex<double> val{0.0, 0.0};
    std::complex<double> der{0.0, 0.0};
    for (std::size_t j = 0; j < ns; ++j) {
        val += w0[j] * y[lo + j];
        der += w1[j] * y[lo + j];
    }
    return {val, der};
}

} // namespace detail

/// Mode norm sup_{|u| > K} |u|^a |f^[k]| + sup_{|u| <= K} |f^[k]| on the grid.
inline double mode_sup_norm(const GridFourierFunction& f, int k, double a, double K = 1.0) {
    double far = 0.0;
    double near = 0.0;
    const auto& y = f.modes[std::size_t(k)];
    for (std::size_t j = 0; j < f.u_grid.size(); ++j) {
        const double au = std::abs(f.u_grid[j]);
        const double ay = std::abs(y[j]);
        if (au > K)
            far = std::max(far, std::pow(au, a) * ay);
        else
            near = std::max(near, ay);
    }
    return far + near;
}

/// Weighted norm sum_k ||f^[k]||_a e^{|k| sigma}, conjugate modes included.
inline double weighted_norm(const GridFourierFunction& f, double a, double K = 1.0) {
    detail::validate_grid_fourier(f, "weighted_norm");
    double s = mode_sup_norm(f, 0, a, K);
    for (int k = 1; k <= f.max_mode(); ++k)
        s += 2.0 * mode_sup_norm(f, k, a, K) * std::exp(double(k) * f.sigma);
    return s;
}

/// Right inverse of the transport derivative along the characteristics
/// (u, v) -> (u + s, v - s): mode-wise the phased cumulative integral
/// (Gf)^[k](u) = e^{iku} int_{-inf}^{u} f^[k](s) e^{-iks} ds. Each interval
/// integrates a cubic interpolant against the oscillation exactly; beyond the
/// deep grid end the mode is extended by a fitted power law.
inline GridFourierFunction g_operator(const GridFourierFunction& f) {
    detail::validate_grid_fourier(f, "g_operator");
    const std::size_t n = f.u_grid.size();
    const auto& u = f.u_grid;
    GridFourierFunction out;
    out.u_grid = u;
    out.sigma = f.sigma;
    out.modes.assign(f.modes.size(), std::vector<std::complex<double>>(n));
    parallel_for(f.modes.size(), [&](std::size_t k) {
        const auto& y = f.modes[k];
        const auto d = detail::fd_derivative(u, y);
        const double kk = double(k);
        std::complex<double> P =
            detail::tail_integral_phased(detail::fit_tail(u, y), u[n - 1], kk);
        out.modes[k][n - 1] = P;
        for (std::size_t j = n - 1; j-- > 0;) {
            const double h = u[j] - u[j + 1];
            const std::complex<double> f0 = y[j + 1];
            const std::complex<double> d0 = d[j + 1];
            const std::complex<double> slope = (y[j] - f0) / h;
            const std::complex<double> c2 = (3.0 * slope - 2.0 * d0 - d[j]) / h;
            const std::complex<double> c3 = (d0 + d[j] - 2.0 * slope) / (h * h);
            const auto M = detail::filon_moments(h, kk);
            const std::complex<double> seg = f0 * M[0] + d0 * M[1] + c2 * M[2] + c3 * M[3];
            P = std::polar(1.0, kk * h) * (P + seg);
            out.modes[k][j] = P;
        }
    });
    return out;
}

/// Transport derivative along the same characteristics: mode-wise
/// (Lf)^[k] = d f^[k] / du - i k f^[k], the left inverse of g_operator.
inline GridFourierFunction l_operator(const GridFourierFunction& f) {
    detail::validate_grid_fourier(f, "l_operator");
    GridFourierFunction out;
    out.u_grid = f.u_grid;
    out.sigma = f.sigma;
    out.modes.assign(f.modes.size(), {});
    for (std::size_t k = 0; k < f.modes.size(); ++k) {
        out.modes[k] = detail::fd_derivative(f.u_grid, f.modes[k]);
        const std::complex<double> ik(0.0, double(k));
        for (std::size_t j = 0; j < f.u_grid.size(); ++j) out.modes[k][j] -= ik * f.modes[k][j];
    }
    return out;
}

struct HJGridParams {
    double u_min = -1.0e4;      // deep end of the grid
    std::size_t n_nodes = 400;  // geometric in |u|
    int max_mode = 32;          // Fourier truncation K
    double kappa = 1.0;         // domain edge radius 1 - mu + kappa mu^nu
    double iter_tol = 1e-12;    // weighted-norm change that stops the iteration
    std::size_t max_iter = 100;
};

/// Fixed point of the generating-function equation on the unstable side
/// (u < 0). The stable side is the odd reflection T(u, v) -> -T(-u, -v).
struct HJSolution {
    GridFourierFunction T1;
    double Theta0 = 0.0;
    double nu = 0.0;
    double kappa = 1.0;
    EnergyContext ctx{};
    double residual = 0.0;       // sup |L T1 - F(T1)| over interior nodes
    std::vector<double> deltas;  // weighted-norm change of each sweep
    std::size_t iterations = 0;
};

namespace detail {

struct HJWorkspace {
    std::vector<double> r;    // unperturbed radius at each node
    std::vector<double> R;    // unperturbed radial momentum, negative
    std::vector<double> phi;  // polar-angle offset theta = v + phi(u)
    std::size_t M = 256;      // collocation size, power of two
    double Theta0 = 0.0;
    double mu = 0.0;
};

/// Nonlinear right-hand side on the grid: the quadratic graph-correction
/// terms plus the perturbing potential along the unperturbed parabola,
/// projected back onto modes 0..K by collocation in the angle.
inline GridFourierFunction hj_rhs(const GridFourierFunction& T, const HJWorkspace& ws) {
    const std::size_t n = T.u_grid.size();
    const std::size_t K = T.modes.size() - 1;
    GridFourierFunction out;
    out.u_grid = T.u_grid;
    out.sigma = T.sigma;
    out.modes.assign(K + 1, std::vector<std::complex<double>>(n));
    std::vector<std::vector<std::complex<double>>> dTu(K + 1);
    for (std::size_t k = 0; k <= K; ++k) dTu[k] = fd_derivative(T.u_grid, T.modes[k]);
    parallel_for(n, [&](std::size_t j) {
        std::vector<std::complex<double>> pk(K + 1);
        std::vector<std::complex<double>> vk(K + 1);
        const double rj = ws.r[j];
        const double Rj = ws.R[j];
        for (std::size_t k = 0; k <= K; ++k) {
            const std::complex<double> ik(0.0, double(k));
            const std::complex<double> dv = ik * T.modes[k][j];
            vk[k] = dv;
            pk[k] = dTu[k][j] - ws.Theta0 / (rj * rj) * dv;
        }
        const auto P = values_on_circle(pk, ws.M);
        const auto V = values_on_circle(vk, ws.M);
        std::vector<double> F(ws.M);
        for (std::size_t m = 0; m < ws.M; ++m) {
            const double v = 2.0 * pi * double(m) / double(ws.M);
            F[m] = -P[m] * P[m] / (2.0 * Rj * Rj) - V[m] * V[m] / (2.0 * rj * rj) +
                   perturbing_potential_cm(rj, v + ws.phi[j], ws.mu);
        }
        const auto fk = modes_on_circle(F, int(K));
        for (std::size_t k = 0; k <= K; ++k) out.modes[k][j] = fk[k];
    });
    return out;
}

} // namespace detail

/// Solves the generating-function equation for the unstable manifold of the
/// parabolic periodic orbit with angular momentum Theta0 (energy -Theta0) by
/// iterating the smoothing operator on the nonlinear right-hand side from
/// zero. The discretization is a K-mode collocation in the angle over a
/// geometric grid in u; the reported residual measures the transport
/// derivative against the same K-mode right-hand side, so it captures
/// quadrature and differentiation error, not the mode truncation.
inline HJSolution hj_solve(const EnergyContext& ctx, double Theta0, double nu,
                           const HJGridParams& grid = {}) {
    if (!(nu > 0.0 && nu < 1.0 / 3.0))
        throw InvalidParameter("hj_solve: nu must lie in (0, 1/3)");
    if (!(std::abs(Theta0) <= sqrt2 - 0.05))
        throw InvalidParameter("hj_solve: Theta0 must stay clear of the parabolic bound sqrt2");
    if (std::abs(ctx.h + Theta0) > 1e-9)
        throw InvalidParameter("hj_solve: the manifold lives on the level h = -Theta0");
    if (!(ctx.mu >= 0.0 && ctx.mu <= 0.05))
        throw InvalidParameter("hj_solve: perturbative solver, needs mu <= 0.05");
    if (grid.n_nodes < 16) throw InvalidParameter("hj_solve: needs at least 16 grid nodes");
    if (grid.max_mode < 1) throw InvalidParameter("hj_solve: needs at least one mode");
    if (!(grid.kappa > 0.0) || !(grid.iter_tol > 0.0))
        throw InvalidParameter("hj_solve: kappa and iter_tol must be positive");

    const double u_max = hj_domain_edge(ctx.mu, nu, Theta0, grid.kappa);
    if (!(grid.u_min < u_max))
        throw DomainTooSmall("hj_solve: u_min must lie below the domain edge " +
                             std::to_string(u_max));

    HJSolution sol;
    sol.Theta0 = Theta0;
    sol.nu = nu;
    sol.kappa = grid.kappa;
    sol.ctx = ctx;

    const std::size_t n = grid.n_nodes;
    const std::size_t K = std::size_t(grid.max_mode);
    GridFourierFunction T;
    T.sigma = hj_strip_width(ctx.mu, nu, grid.kappa);
    T.u_grid.resize(n);
    {
        // Geometric interval growth anchored at a top interval that resolves
        // the edge layer, where the potential varies on the radial scale
        // kappa mu^nu and the solution inherits it through dr/du = R.
        const double rho = 1.0 - ctx.mu + grid.kappa * std::pow(ctx.mu, nu);
        const double R_edge = std::sqrt(2.0 * rho - Theta0 * Theta0) / rho;
        const double layer = grid.kappa * std::pow(ctx.mu, nu) / R_edge;
        double h_top = 0.01 * std::abs(u_max);
        if (layer > 0.0) h_top = std::min(h_top, layer / 8.0);
        const double span = u_max - grid.u_min;
        T.u_grid[0] = u_max;
        if (h_top * double(n - 1) >= span) {
            for (std::size_t j = 1; j < n; ++j)
                T.u_grid[j] = u_max - span * double(j) / double(n - 1);
        } else {
            double lo = 1.0 + 1e-12, hi = 4.0;
            auto length = [&](double g) {
                return h_top * (std::pow(g, double(n - 1)) - 1.0) / (g - 1.0);
            };
            while (length(hi) < span) hi *= 2.0;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (length(mid) < span ? lo : hi) = mid;
            }
            const double g = 0.5 * (lo + hi);
            double h = h_top;
            for (std::size_t j = 1; j < n; ++j) {
                T.u_grid[j] = T.u_grid[j - 1] - h;
                h *= g;
            }
            T.u_grid[n - 1] = grid.u_min;
        }
    }
    T.modes.assign(K + 1, std::vector<std::complex<double>>(n, {0.0, 0.0}));

    detail::HJWorkspace ws;
    ws.Theta0 = Theta0;
    ws.mu = ctx.mu;
    ws.M = 64;
    while (ws.M < 4 * (K + 1)) ws.M <<= 1;
    ws.r.resize(n);
    ws.R.resize(n);
    ws.phi.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const ParabolicState st = parabolic_state(T.u_grid[j], 0.0, Theta0);
        ws.r[j] = st.r;
        ws.R[j] = st.R;
        ws.phi[j] = st.theta;
    }

    bool converged = false;
    for (std::size_t it = 0; it < grid.max_iter; ++it) {
        GridFourierFunction next = g_operator(detail::hj_rhs(T, ws));
        GridFourierFunction diff = next;
        for (std::size_t k = 0; k <= K; ++k)
            for (std::size_t j = 0; j < n; ++j) diff.modes[k][j] -= T.modes[k][j];
        const double delta = weighted_norm(diff, 1.0 / 3.0);
        sol.deltas.push_back(delta);
        T = std::move(next);
        sol.iterations = it + 1;
        if (delta < grid.iter_tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw NoConvergence("hj_solve: no fixed point after " + std::to_string(grid.max_iter) +
                            " sweeps, last change " + std::to_string(sol.deltas.back()));

    const GridFourierFunction rhs = detail::hj_rhs(T, ws);
    const GridFourierFunction lt = l_operator(T);
    double res = 0.0;
    if (n >= 6) {
        std::vector<std::complex<double>> dk(K + 1);
        for (std::size_t j = 2; j + 2 < n; ++j) {
            for (std::size_t k = 0; k <= K; ++k) dk[k] = lt.modes[k][j] - rhs.modes[k][j];
            const auto dv = detail::values_on_circle(dk, ws.M);
            for (const double v : dv) res = std::max(res, std::abs(v));
        }
    }
    sol.residual = res;
    sol.T1 = std::move(T);
    return sol;
}

/// Curve cut by the stable or unstable manifold of the parabolic orbit with
/// angular momentum Theta0 on a section near Jupiter (graph over the window
/// theta in (-pi/4, pi/4)) or on an outer ring (graph over the full circle).
/// Seeds start on the mu = 0 graph at radius R_far, far in the past for the
/// unstable branch and far in the future for the stable one, and the full
/// flow carries them to the section. A solver result passed as `refine`
/// corrects the seeds by the gradient of its generating function.
inline SectionCurve infinity_manifold_curve(const EnergyContext& ctx, double Theta0,
                                            ManifoldBranch branch, const SectionSpec& section,
                                            std::size_t n = 64, double R_far = 1.0e3,
                                            const HJSolution* refine = nullptr) {
    validate(section);
    if (n < 4) throw InvalidParameter("infinity_manifold_curve: needs n >= 4");
    if (!(Theta0 > theta0_curve_window_lo && Theta0 < theta0_curve_window_hi))
        throw InvalidParameter("infinity_manifold_curve: Theta0 outside the curve window");
    if (std::abs(ctx.h + Theta0) > 1e-9)
        throw InvalidParameter("infinity_manifold_curve: curve lives on the level h = -Theta0");
    if (section.kind == SectionKind::SigmaBarSun)
        throw InvalidParameter("infinity_manifold_curve: section must be near Jupiter or outer");
    if (section.sign == RadialSign::Both)
        throw InvalidParameter("infinity_manifold_curve: section sign must pick one side");
    const double r_sec = section_radius(section, ctx.mu);
    if (!(R_far >= 10.0 * r_sec && R_far > Theta0 * Theta0))
        throw SeedInvalid("infinity_manifold_curve: R_far must dominate the section radius");
    if (refine) {
        if (std::abs(refine->Theta0 - Theta0) > 1e-12 || refine->ctx.mu != ctx.mu)
            throw InvalidParameter("infinity_manifold_curve: refinement parameters differ");
        detail::validate_grid_fourier(refine->T1, "infinity_manifold_curve");
    }

    const bool unstable = branch == ManifoldBranch::Unstable;
    const TimeDirection dir = unstable ? TimeDirection::Forward : TimeDirection::Backward;

    // Kepler data of the unperturbed seed orbit: w parameterizes the parabola
    // through r = (w^2 + Theta0^2) / 2, sign(w) = sign of the radial momentum.
    const double w0 = (unstable ? -1.0 : 1.0) * std::sqrt(2.0 * R_far - Theta0 * Theta0);
    auto t_of_w = [Theta0](double w) {
        return 0.5 * (w * w * w / 3.0 + Theta0 * Theta0 * w);
    };
    // Rotating-frame angle swept between two parabola stations.
    auto sweep = [&](double wa, double wb) {
        const double turn =
            Theta0 != 0.0 ? 2.0 * (std::atan(wb / Theta0) - std::atan(wa / Theta0)) : 0.0;
        return turn - (t_of_w(wb) - t_of_w(wa));
    };
    const double r_arrive =
        section.kind == SectionKind::SigmaGamma ? 1.0 - ctx.mu : r_sec;
    const double w1_arg = 2.0 * r_arrive - Theta0 * Theta0;
    if (!(w1_arg > 0.0))
        throw SeedInvalid("infinity_manifold_curve: section radius below the pericenter");
    const double w1 =
        (section.sign == RadialSign::Negative ? -1.0 : 1.0) * std::sqrt(w1_arg);

    // Seed angle whose unperturbed orbit arrives at CM angle alpha when it
    // reaches the section-crossing radius.
    auto th_seed_arriving_at = [&](double alpha) { return alpha - sweep(w0, w1); };

    IntegrateOptions opts;
    // A seed that misses the section must fail fast, so the horizon hugs the
    // unperturbed flight time.
    opts.section_t_max = 1.3 * std::abs(t_of_w(w1) - t_of_w(w0)) + 10.0;
    // At default step tolerances the slow rotating-frame forcing aliases into
    // an energy drift of ~1e-8 over the far-field leg; 1e-14 keeps the hits
    // on-level to a few 1e-10 for ~10^4 cheap steps per flight.
    opts.tol.abs_tol = 1e-14;
    opts.tol.rel_tol = 1e-14;
    opts.energy_tol = 1e-8;

    // Seed on the mu = 0 graph at angle th, optionally corrected by the
    // generating-function gradient. The stable branch uses the reflection
    // (theta, R, Theta) -> (-theta, -R, Theta) of the unstable-side solution.
    auto seed_at = [&](double th) -> PhasePoint {
        const auto g0 = kepler_infinity_graph(R_far, Theta0, branch);
        double R = g0.first;
        double Th = g0.second;
        if (refine) {
            const double w = -std::sqrt(2.0 * R_far - Theta0 * Theta0);
            const double uu = 0.5 * (w * w * w / 3.0 + Theta0 * Theta0 * w);
            const ParabolicState st = parabolic_state(uu, 0.0, Theta0);
            const double th_u = unstable ? th : -th;
            const double vv = th_u - st.theta;
            double dTu = 0.0;
            double dTv = 0.0;
            for (std::size_t k = 0; k < refine->T1.modes.size(); ++k) {
                const auto [val, der] = detail::mode_eval(refine->T1, k, uu);
                const std::complex<double> ph = std::polar(1.0, double(k) * vv);
                const double mult = k == 0 ? 1.0 : 2.0;
                dTu += mult * (der * ph).real();
                dTv += mult * (std::complex<double>(0.0, double(k)) * val * ph).real();
            }
            const double Ru = st.R + (dTu - Theta0 / (st.r * st.r) * dTv) / st.R;
            const double Thu = Theta0 + dTv;
            R = unstable ? Ru : -Ru;
            Th = Thu;
        }
        return PhasePoint{Chart::RotPolarCM, {R_far, th, R, Th}, 0.0};
    };
    const Chart out_chart =
        section.kind == SectionKind::SigmaGamma ? Chart::RotPolarJup : Chart::RotPolarCM;
    auto image = [&](double th) {
        return convert(integrate_to_section(seed_at(th), ctx, section, dir, opts).point,
                       out_chart, ctx);
    };

    std::vector<PhasePoint> hits(n);
    if (section.kind == SectionKind::SigmaGamma) {
        // Only a seed window of width ~2 r_sec reaches the section (any other
        // orbit misses the ball around the secondary and exhausts the time
        // horizon), and inside it d(image)/d(seed) ~ 1/r_sec. The Kepler sweep
        // puts the mu = 0 arrival at the secondary's angle; a short scan in
        // units of r_sec absorbs the perturbed window shift.
        const double half = 0.995 * pi / 4.0;
        const double th_aim = wrap_angle(th_seed_arriving_at(0.0));
        double th_a = th_aim;
        double im_a = 0.0;
        bool found = false;
        for (const double off :
             {0.0, -0.3, 0.3, -0.6, 0.6, -0.9, 0.9, -1.4, 1.4, -2.0, 2.0}) {
            try {
                th_a = th_aim + off * r_sec;
                im_a = image(th_a).x[1];
                found = true;
                break;
            } catch (const NoCrossing&) {
            }
        }
        if (!found)
            throw NoCrossing(
                "infinity_manifold_curve: no seed near the aim angle reaches the section");
        double th_b = th_a + 0.02 * r_sec;
        double im_b;
        try {
            im_b = image(th_b).x[1];
        } catch (const NoCrossing&) {
            th_b = th_a - 0.02 * r_sec;
            im_b = image(th_b).x[1];
        }
        double slope = wrap_angle(im_b - im_a) / (th_b - th_a);
        if (!std::isfinite(slope) || std::abs(slope) < 0.1)
            throw NoCrossing("infinity_manifold_curve: degenerate seed-to-image map");
        for (int it = 0, misses = 0; std::abs(wrap_angle(im_b)) > 1e-3; ++it) {
            if (it >= 48)
                throw NoCrossing("infinity_manifold_curve: cannot center the image window");
            double step = std::clamp(-wrap_angle(im_b) / slope, -0.5 * r_sec, 0.5 * r_sec);
            const double th_n = th_b + step;
            try {
                const double im_n = image(th_n).x[1];
                if (std::abs(wrap_angle(im_n - im_b)) > 1e-12)
                    slope = wrap_angle(im_n - im_b) / (th_n - th_b);
                th_b = th_n;
                im_b = im_n;
            } catch (const NoCrossing&) {
                if (++misses > 8)
                    throw;
                slope *= 2.0;
            }
        }
        const double th_c = th_b;
        const double im_c = wrap_angle(im_b);
        const double slope_c = slope;
        parallel_for(n, [&](std::size_t i) {
            const double tgt = -half + 2.0 * half * double(i) / double(n - 1);
            double th_prev = th_c;
            double f_prev = im_c - tgt;
            double sl = slope_c;
            double th = th_c - f_prev / sl;
            PhasePoint p;
            for (int it = 0, misses = 0;; ++it) {
                const double dth =
                    std::clamp(th - th_prev, -0.3 * r_sec, 0.3 * r_sec);
                th = th_prev + dth;
                try {
                    p = image(th);
                } catch (const NoCrossing&) {
                    if (++misses > 6)
                        throw;
                    th = th_prev + dth / 2.0;
                    continue;
                }
                const double f = p.x[1] - tgt;
                if (std::abs(f) <= 1e-10 || it >= 12)
                    break;
                if (std::abs(f - f_prev) > 1e-15)
                    sl = (f - f_prev) / (th - th_prev);
                th_prev = th;
                f_prev = f;
                th -= f / sl;
            }
            hits[i] = p;
        });
    } else {
        parallel_for(n, [&](std::size_t i) {
            hits[i] = image(2.0 * pi * double(i) / double(n));
        });
        std::sort(hits.begin(), hits.end(),
                  [](const PhasePoint& a, const PhasePoint& b) { return a.x[1] < b.x[1]; });
    }

    SectionCurve curve;
    curve.section = section;
    curve.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        curve.samples[i] = {hits[i].x[1], hits[i].x[2], hits[i].x[3]};
    for (std::size_t i = 1; i < n; ++i)
        if (!(curve.samples[i].theta > curve.samples[i - 1].theta))
            throw NonGraph("infinity_manifold_curve: image is not a graph over the angle");
    curve.meta = {std::string(unstable ? "infinity-unstable" : "infinity-stable") +
                      (section.kind == SectionKind::SigmaGamma ? "-at-jup" : "-at-outer"),
                  ctx};
    validate(curve, opts.energy_tol);
    return curve;
}

} // namespace nearcol
