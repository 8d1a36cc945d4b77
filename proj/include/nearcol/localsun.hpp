#pragma once

// McGehee-regularized flow at the Sun: the ejection/collision manifold
// curves on the section r_bar = delta^2, their first-order law, and the
// Jupiter-ejection curve extended to that section by the full flow.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/curves.hpp"
#include "nearcol/dynamics.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/kepler.hpp"
#include "nearcol/localjup.hpp"
#include "nearcol/numutil.hpp"

namespace nearcol {

using SunManifoldCurve = SectionCurve;

enum class SunBranch { Unstable, Stable };       // W^u(S+) on R > 0, W^s(S-) on R < 0
enum class CurveMethod { Numeric, FirstOrder };

/// Departure angle on the Jupiter section of the ejection orbit that falls
/// onto the Sun, and the Sun-section angle where it lands.
inline double sun_theta_star() { return std::asin(1.0 / std::sqrt(3.0)) + pi; }
inline double sun_theta_bar0(double delta) {
    return -(std::sqrt(2.0) / 3.0) * (1.0 - delta * delta * delta);
}

/// First-order angular momentum of the Sun ejection manifold at the section:
/// the torque from Jupiter accumulated along the unperturbed ejection arc
/// r_bar = lambda s^{2/3}, theta_bar = alpha - s, traversed for
/// s in (0, (sqrt2/3) delta^3] and taken with reversed orientation.
inline double sun_I_integral(double theta_bar, double delta) {
    if (!(delta > 0.0 && delta < 1.0))
        throw InvalidParameter("sun_I_integral: needs 0 < delta < 1");
    const double lam = lambda_parabolic;
    const double a = (std::sqrt(2.0) / 3.0) * delta * delta * delta;
    const double alpha = theta_bar + a;

    const auto torque = [&](double s) {
        const double r = lam * std::cbrt(s * s);
        const double c = std::cos(alpha - s);
        const double d2 = 1.0 + r * r - 2.0 * r * c;
        return r * std::sin(alpha - s) / (d2 * std::sqrt(d2));
    };
    const double first = integrate_gk(torque, 0.0, a);

    // radial term; s = sigma^3 removes the s^{-1/3} endpoint singularity
    const auto radial = [&](double sig) {
        return 3.0 * sig * std::cos(alpha - sig * sig * sig);
    };
    const double second =
        std::sqrt(2.0 / lam) * integrate_gk(radial, 0.0, std::cbrt(a));

    return -(first + second);
}

namespace detail {

// rho making M = 0 at (s, theta_bar, alpha); M is affine in rho
inline double sun_rho_on_level(double s, double theta_bar, double alpha,
                               const EnergyContext& ctx) {
    return mcgehee_sun_level({s, theta_bar, alpha, 0.0}, ctx);
}

// unstable eigendirection of the (s, alpha) linearization at S+
inline std::array<double, 2> sun_unstable_direction(double theta_bar,
                                                    const EnergyContext& ctx) {
    const auto fld = [&](double s, double al) {
        PhasePoint p{Chart::McGeheeSun,
                     {s, theta_bar, al, sun_rho_on_level(s, theta_bar, al, ctx)}, 0.0};
        const auto f = vector_field(p, ctx);
        return std::array<double, 2>{f[0], f[2]};
    };
    const double d = 1e-6, a0 = 0.5 * pi;
    const auto fsp = fld(d, a0), fsm = fld(-d, a0);
    const auto fap = fld(0.0, a0 + d), fam = fld(0.0, a0 - d);
    const double a = (fsp[0] - fsm[0]) / (2.0 * d), b = (fap[0] - fam[0]) / (2.0 * d);
    const double c = (fsp[1] - fsm[1]) / (2.0 * d), e = (fap[1] - fam[1]) / (2.0 * d);
    const double lam_u = 0.5 * (a + e) + std::hypot(0.5 * (a - e), std::sqrt(std::abs(b * c)));
    std::array<double, 2> v{};
    if (std::abs(b) > std::abs(lam_u - a))
        v = {b, lam_u - a};
    else
        v = {lam_u - e, c};
    const double n = std::hypot(v[0], v[1]);
    if (!(n > 0.0) || !std::isfinite(n))
        throw NoConvergence("sun_unstable_direction: degenerate linearization");
    if (v[0] < 0.0) return {-v[0] / n, -v[1] / n};
    return {v[0] / n, v[1] / n};
}

// shift a strictly increasing angle sequence so it starts in (-pi, pi]
inline void rebase_angles(std::vector<double>& th) {
    const double shift = wrap_angle(th.front()) - th.front();
    for (auto& t : th) t += shift;
}

inline SectionCurve sun_curve_unstable_numeric(const EnergyContext& ctx, double delta,
                                               std::size_t n) {
    const SectionSpec sec{SectionKind::SigmaBarSun, RadialSign::Positive, delta};
    validate(sec);
    IntegrateOptions opts;
    opts.policy.delta = delta;  // keep the regularized chart out to the section
    std::vector<PhasePoint> hits(n);
    parallel_for(n, [&](std::size_t i) {
        const double tb = -pi + 2.0 * pi * double(i) / double(n);
        const auto dir = sun_unstable_direction(tb, ctx);
        const double s0 = 1e-8 * dir[0], al0 = 0.5 * pi + 1e-8 * dir[1];
        const PhasePoint seed{Chart::McGeheeSun,
                              {s0, tb, al0, sun_rho_on_level(s0, tb, al0, ctx)}, 0.0};
        const auto hit = integrate_to_section(seed, ctx, sec, TimeDirection::Forward, opts);
        hits[i] = convert(hit.point, Chart::RotPolarSun, ctx);
    });

    std::vector<double> th(n);
    for (std::size_t i = 0; i < n; ++i) th[i] = hits[i].x[1];
    unwrap_angles(th);
    for (std::size_t i = 1; i < n; ++i)
        if (!(th[i] > th[i - 1]))
            throw NonGraph("sun_manifold_curve: section angle is not monotone in the seed");
    rebase_angles(th);

    SectionCurve curve;
    curve.section = sec;
    curve.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        curve.samples[i] = {th[i], hits[i].x[2], hits[i].x[3]};
    curve.meta = {"sun-unstable", ctx};
    return curve;
}

// reflect a curve through (theta, R, Theta) -> (-theta, -R, Theta)
inline SectionCurve reflect_curve(SectionCurve c, RadialSign sign, std::string label) {
    std::reverse(c.samples.begin(), c.samples.end());
    std::vector<double> th(c.samples.size());
    for (std::size_t i = 0; i < th.size(); ++i) {
        th[i] = -c.samples[i].theta;
        c.samples[i].R = -c.samples[i].R;
    }
    rebase_angles(th);
    for (std::size_t i = 0; i < th.size(); ++i) c.samples[i].theta = th[i];
    c.section.sign = sign;
    c.meta.label = std::move(label);
    return c;
}

inline SectionCurve sun_curve_first_order(const EnergyContext& ctx, double delta,
                                          SunBranch branch, std::size_t n) {
    const bool unstable = branch == SunBranch::Unstable;
    const SectionSpec sec{SectionKind::SigmaBarSun,
                          unstable ? RadialSign::Positive : RadialSign::Negative, delta};
    validate(sec);
    const double r = delta * delta;
    SectionCurve curve;
    curve.section = sec;
    curve.samples.resize(n);
    parallel_for(n, [&](std::size_t i) {
        const double tb = -pi + 2.0 * pi * double(i) / double(n);
        const double Th = ctx.mu * sun_I_integral(unstable ? tb : -tb, delta);
        const double R = find_root_bracketed(
            [&](double R0) { return hamiltonian_sun_polar({r, tb, R0, Th}, ctx.mu) - ctx.h; },
            unstable ? 0.0 : -30.0, unstable ? 30.0 : 0.0);
        curve.samples[i] = {tb, R, Th};
    });
    curve.meta = {unstable ? "sun-unstable-first-order" : "sun-stable-first-order", ctx};
    return curve;
}

} // namespace detail

/// Ejection (W^u(S+), R > 0) or collision (W^s(S-), R < 0) manifold curve of
/// the Sun on the section r_bar = delta^2, either integrated from the
/// regularized equilibrium or assembled from the first-order law
/// Theta = mu I(theta). The stable branch is the reflection of the unstable
/// one under the frame symmetry.
inline SunManifoldCurve sun_manifold_curve(const EnergyContext& ctx, double delta,
                                           SunBranch branch, std::size_t n = 256,
                                           CurveMethod method = CurveMethod::Numeric) {
    if (n < 8) throw InvalidParameter("sun_manifold_curve: needs n >= 8");
    if (std::abs(ctx.h) > 1e3 * ctx.mu)
        throw InvalidParameter("sun_manifold_curve: needs |h| <= 1e3 mu");
    SectionCurve curve;
    if (method == CurveMethod::FirstOrder) {
        curve = detail::sun_curve_first_order(ctx, delta, branch, n);
    } else {
        curve = detail::sun_curve_unstable_numeric(ctx, delta, n);
        if (branch == SunBranch::Stable)
            curve = detail::reflect_curve(std::move(curve), RadialSign::Negative, "sun-stable");
    }
    validate(curve);
    return curve;
}

namespace detail {

/// Point of the ejection/collision curve on the Jupiter section at polar
/// angle theta, found by a secant solve of theta(beta) = theta. theta(beta)
/// is a near-affine full turn of slope ~2 over beta in [0, pi), so a start
/// within the turn converges in a few crossings.
inline PhasePoint jupiter_seed_at(double theta, const EnergyContext& ctx, double gamma,
                                  JupiterBranch branch, double beta0) {
    auto miss = [&](double beta) {
        const auto c = circle_crossing(beta, ctx, gamma, branch);
        return std::make_pair(wrap_angle(c.point.x[1] - theta), c.point);
    };
    double b0 = beta0;
    double b1 = beta0 + 1e-4;
    double f0 = miss(b0).first;
    auto [f1, p1] = miss(b1);
    for (int it = 0; it < 32; ++it) {
        if (std::abs(f1) < 1e-12) return p1;
        const double df = f1 - f0;
        if (df == 0.0) break;
        const double b2 = b1 - f1 * (b1 - b0) / df;
        b0 = b1;
        f0 = f1;
        b1 = b2;
        std::tie(f1, p1) = miss(b1);
    }
    throw NoCrossing("jupiter_seed_at: section angle not reached");
}

} // namespace detail

/// Jupiter ejection/collision curve carried to the Sun section by the full
/// flow: ejection runs forward to R_bar < 0, collision backward to R_bar > 0.
/// The image is a graph over theta_bar in the window of half-width delta^4
/// around -+theta_bar0. Its preimage on the Jupiter section sits O(mu^gamma)
/// below -+theta*: a seed at angle theta carries Sun-frame angular momentum
/// ~ mu^gamma cos(theta), and the infall integral sqrt(2)(1/delta - 1) sweeps
/// that into a theta_bar shift, so the window center is solved for by secant
/// on the flow map rather than fixed at theta*.
inline SunManifoldCurve jupiter_curve_at_sun_section(const EnergyContext& ctx, double delta,
                                                     double gamma, JupiterBranch branch,
                                                     std::size_t n = 64) {
    if (n < 4) throw InvalidParameter("jupiter_curve_at_sun_section: needs n >= 4");
    if (std::abs(ctx.h) > 1e3 * ctx.mu)
        throw InvalidParameter("jupiter_curve_at_sun_section: needs |h| <= 1e3 mu");
    const bool eject = branch == JupiterBranch::Ejection;
    const SectionSpec sec{SectionKind::SigmaBarSun,
                          eject ? RadialSign::Negative : RadialSign::Positive, delta};
    validate(sec);

    IntegrateOptions opts;
    opts.policy.gamma = gamma;
    // Hand off to the regularized chart while |Theta| / r^2 is still O(1):
    // polar integration noise in Theta enters the energy amplified by 1/r^2.
    opts.policy.delta = std::max(delta, 0.3);
    const TimeDirection dir = eject ? TimeDirection::Forward : TimeDirection::Backward;
    const double theta_off = circle_crossing(0.0, ctx, gamma, branch).point.x[1];
    auto seed = [&](double th) {
        return detail::jupiter_seed_at(th, ctx, gamma, branch, 0.5 * wrap_angle(th - theta_off));
    };
    auto image = [&](const PhasePoint& s) {
        return convert(integrate_to_section(s, ctx, sec, dir, opts).point, Chart::RotPolarSun,
                       ctx);
    };

    const double tb0 = eject ? sun_theta_bar0(delta) : -sun_theta_bar0(delta);
    const double w = delta * delta * delta * delta;

    double th_b = eject ? sun_theta_star() : -sun_theta_star();
    double tb_b = image(seed(th_b)).x[1];
    double slope;
    {
        const double th_c = th_b + 1e-3;
        const double tb_c = image(seed(th_c)).x[1];
        slope = (tb_c - tb_b) / (th_c - th_b);
        th_b = th_c;
        tb_b = tb_c;
    }
    for (int it = 0; std::abs(tb_b - tb0) > 1e-2 * w; ++it) {
        if (it >= 24 || !std::isfinite(slope) || !(std::abs(slope) > 1e-6))
            throw NoCrossing("jupiter_curve_at_sun_section: cannot center the image window");
        const double th_n = th_b + (tb0 - tb_b) / slope;
        const double tb_n = image(seed(th_n)).x[1];
        if (th_n != th_b) slope = (tb_n - tb_b) / (th_n - th_b);
        th_b = th_n;
        tb_b = tb_n;
    }
    // Remeasure the slope across a full half-window; the secant pair may have
    // collapsed to a separation too small to divide by cleanly.
    {
        const double th_p = th_b + (w / slope);
        const double tb_p = image(seed(th_p)).x[1];
        slope = (tb_p - tb_b) / (th_p - th_b);
        if (!std::isfinite(slope) || slope == 0.0)
            throw NoCrossing("jupiter_curve_at_sun_section: cannot center the image window");
    }
    const double th_z = th_b + (tb0 - tb_b) / slope;
    const double m = slope;

    std::vector<PhasePoint> hits(n);
    parallel_for(n, [&](std::size_t i) {
        const double tgt = tb0 + 0.9 * w * (2.0 * double(i) / double(n - 1) - 1.0);
        hits[i] = image(seed(th_z + (tgt - tb0) / m));
    });

    std::vector<double> tb(n);
    for (std::size_t i = 0; i < n; ++i) {
        tb[i] = hits[i].x[1];
        if (!(std::abs(tb[i] - tb0) < w))
            throw NoCrossing("jupiter_curve_at_sun_section: sample left the image window");
    }
    for (std::size_t i = 1; i < n; ++i)
        if (!(tb[i] > tb[i - 1]))
            throw NonGraph("jupiter_curve_at_sun_section: image is not a graph");

    SectionCurve curve;
    curve.section = sec;
    curve.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        curve.samples[i] = {tb[i], hits[i].x[2], hits[i].x[3]};
    curve.meta = {eject ? "jupiter-ejection-at-sun" : "jupiter-collision-at-sun", ctx};
    validate(curve);
    return curve;
}

} // namespace nearcol
