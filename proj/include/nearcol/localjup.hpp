#pragma once

// Collision circle at Jupiter, the ejection/collision curves it sweeps on
// the section r = mu^gamma, and the near-collision transition map.

#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/curves.hpp"
#include "nearcol/dynamics.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/numutil.hpp"

namespace nearcol {

enum class JupiterBranch { Ejection, Collision };

struct CollisionCirclePoint {
    double beta = 0.0;
    PhasePoint zw;
};

/// Point of the collision circle z = 0, |w| = xi sqrt(mu).
inline CollisionCirclePoint collision_circle(double beta, const EnergyContext& ctx) {
    const double w = ctx.xi * std::sqrt(ctx.mu);
    return {beta,
            {Chart::LeviCivita, {0.0, 0.0, w * std::cos(beta), w * std::sin(beta)}, 0.0}};
}

/// Crossing time of the linearized regularized flow from the circle to the
/// section, the same for every beta.
inline double tau_lin_oracle(double /*beta*/, const EnergyContext& ctx, double gamma) {
    return std::asinh(std::pow(ctx.mu, 0.5 * (gamma - 1.0)) / (std::sqrt(2.0) * ctx.xi));
}

/// One collision-circle orbit integrated to the section r = mu^gamma.
/// Ejection orbits run forward and cross outward; collision orbits run
/// backward and cross inward.
struct CircleCrossing {
    double beta = 0.0;
    PhasePoint point;  // RotPolarJup, on the section
    double t = 0.0;    // physical elapsed time (negative for Collision)
    double tau = 0.0;  // regularized time of the trip
};

inline CircleCrossing circle_crossing(double beta, const EnergyContext& ctx, double gamma,
                                      JupiterBranch branch) {
    if (!(ctx.mu > 0.0)) throw InvalidParameter("circle_crossing: requires mu > 0");
    const bool eject = branch == JupiterBranch::Ejection;
    const SectionSpec sec{SectionKind::SigmaGamma,
                          eject ? RadialSign::Positive : RadialSign::Negative, gamma};
    validate(sec);
    IntegrateOptions opts;
    opts.section_t_max = 1e3;
    const auto hit = integrate_to_section(
        collision_circle(beta, ctx).zw, ctx, sec,
        eject ? TimeDirection::Forward : TimeDirection::Backward, opts);
    return {beta, convert(hit.point, Chart::RotPolarJup, ctx), hit.elapsed,
            hit.path.chart_time};
}

/// Ejection or collision manifold curve on the section r = mu^gamma as a
/// graph theta -> (R, Theta). The deck symmetry (z,w) -> (-z,-w) identifies
/// beta with beta + pi, so half the circle sweeps the whole curve once.
inline SectionCurve jupiter_manifold_curve(const EnergyContext& ctx, double gamma,
                                           JupiterBranch branch, std::size_t n = 256) {
    if (n < 8) throw InvalidParameter("jupiter_manifold_curve: needs n >= 8");
    std::vector<CircleCrossing> cross(n);
    parallel_for(n, [&](std::size_t i) {
        cross[i] = circle_crossing(pi * double(i) / double(n), ctx, gamma, branch);
    });

    // theta(beta) ~ 2 beta; the curve is a graph only if this stays monotone
    std::vector<double> th(n);
    for (std::size_t i = 0; i < n; ++i) th[i] = cross[i].point.x[1];
    unwrap_angles(th);
    for (std::size_t i = 1; i < n; ++i)
        if (!(th[i] > th[i - 1]))
            throw NonGraph("jupiter_manifold_curve: theta(beta) is not monotone");
    if (!(th.back() - th.front() < 2.0 * pi))
        throw NonGraph("jupiter_manifold_curve: theta(beta) overshoots one turn");
    const double shift = wrap_angle(th.front()) - th.front();
    for (auto& t : th) t += shift;

    SectionCurve curve;
    curve.section = SectionSpec{SectionKind::SigmaGamma,
                                branch == JupiterBranch::Ejection ? RadialSign::Positive
                                                                  : RadialSign::Negative,
                                gamma};
    curve.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        curve.samples[i] = {th[i], cross[i].point.x[2], cross[i].point.x[3]};
    curve.meta = {branch == JupiterBranch::Ejection ? "jupiter-ejection" : "jupiter-collision",
                  ctx};
    validate(curve);
    return curve;
}

/// Leading-order transition across the straightened saddle: (s, u) with
/// |s| = eps maps to ((|u|/eps) s, eps u/|u|). Test oracle for transition_map.
inline std::pair<std::array<double, 2>, std::array<double, 2>>
linear_saddle_transition(const std::array<double, 2>& s, const std::array<double, 2>& u) {
    const double eps = std::hypot(s[0], s[1]);
    const double un = std::hypot(u[0], u[1]);
    if (eps == 0.0 || un == 0.0)
        throw DegenerateZero("linear_saddle_transition: needs nonzero s and u");
    return {{s[0] * un / eps, s[1] * un / eps}, {eps * u[0] / un, eps * u[1] / un}};
}

/// Poincare map across the near-collision region: follows an inward section
/// point through the regularized flow (passing through or near z = 0) until
/// the orbit crosses the section outward again.
inline PhasePoint transition_map(const PhasePoint& p_in, const EnergyContext& ctx,
                                 double gamma) {
    const SectionSpec sec_out{SectionKind::SigmaGamma, RadialSign::Positive, gamma};
    validate(sec_out);
    const auto pol = convert(p_in, Chart::RotPolarJup, ctx);
    const double r_sec = section_radius(sec_out, ctx.mu);
    if (std::abs(pol.x[0] - r_sec) > 1e-9 * std::max(1.0, r_sec) || !(pol.x[2] < 0.0))
        throw SeedInvalid("transition_map: input must sit on the section moving inward");
    const PhasePoint lc = p_in.chart == Chart::LeviCivita
                              ? p_in
                              : convert(p_in, Chart::LeviCivita, ctx, LCBranch::PlusZ2);
    IntegrateOptions opts;
    opts.section_t_max = 100.0;
    try {
        const auto hit = integrate_to_section(lc, ctx, sec_out, TimeDirection::Forward, opts);
        for (const auto& s : hit.path.switches)
            if (s.from == Chart::LeviCivita)
                throw NoReturn("transition_map: orbit left the near-collision ball");
        return convert(hit.point, Chart::RotPolarJup, ctx);
    } catch (const NoCrossing&) {
        throw NoReturn("transition_map: no outward section crossing");
    }
}

} // namespace nearcol
