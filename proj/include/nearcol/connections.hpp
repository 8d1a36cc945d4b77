#pragma once

// Intersections of manifold curves on the Poincare sections: distance graphs
// and their transverse zeros, the matched-energy triple intersection, the
// outer-ring Poincare map with its spiral evidence, and shooting searches for
// ejection-collision orbits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/curves.hpp"
#include "nearcol/dynamics.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/infinity.hpp"
#include "nearcol/kepler.hpp"
#include "nearcol/localjup.hpp"
#include "nearcol/localsun.hpp"
#include "nearcol/numutil.hpp"

namespace nearcol {

namespace detail {

// A sampled curve spanning all but one mesh gap of the circle closes up.
inline bool curve_is_closed(const SectionCurve& c) {
    return c.samples.back().theta - c.samples.front().theta > 2.0 * pi - 0.3;
}

} // namespace detail

/// Difference d(theta) = Theta_A(theta) - Theta_B(theta) between two curve
/// graphs on a common angular window, differentiable through the curves'
/// monotone-cubic interpolants. The raw-sample constructor wraps any sampled
/// miss function in the same zero-finding machinery.
class DistanceCurve {
public:
    DistanceCurve(const SectionCurve& A, const SectionCurve& B) : a_(&A), b_(&B) {
        if (A.section.kind != B.section.kind || A.section.sign != B.section.sign ||
            A.section.param != B.section.param)
            throw InvalidParameter("DistanceCurve: curves live on different sections");
        if (A.meta.ctx.mu != B.meta.ctx.mu || std::abs(A.meta.ctx.h - B.meta.ctx.h) > 1e-12)
            throw InvalidParameter("DistanceCurve: curves carry different energy contexts");
        const bool ca = detail::curve_is_closed(A);
        const bool cb = detail::curve_is_closed(B);
        fa_.emplace(A, ca);
        fb_.emplace(B, cb);
        if (ca && cb) {
            lo_ = -pi;
            hi_ = pi;
        } else if (ca) {
            lo_ = fb_->theta_min();
            hi_ = fb_->theta_max();
        } else if (cb) {
            lo_ = fa_->theta_min();
            hi_ = fa_->theta_max();
        } else {
            double best = 0.0;
            bool found = false;
            for (int k = -1; k <= 1; ++k) {
                const double s = 2.0 * pi * k;
                const double lo = std::max(fa_->theta_min(), fb_->theta_min() + s);
                const double hi = std::min(fa_->theta_max(), fb_->theta_max() + s);
                if (hi - lo > best) {
                    best = hi - lo;
                    shift_b_ = s;
                    lo_ = lo;
                    hi_ = hi;
                    found = true;
                }
            }
            if (!found) throw NoOverlap("DistanceCurve: no common angular window");
        }
    }

    /// Sampled miss function d at strictly increasing angles.
    DistanceCurve(std::vector<double> theta, std::vector<double> d) {
        if (theta.size() != d.size() || theta.size() < 2)
            throw InvalidParameter("DistanceCurve: needs matching samples, at least two");
        lo_ = theta.front();
        hi_ = theta.back();
        fd_.emplace(std::move(theta), std::move(d));
    }

    double theta_min() const { return lo_; }
    double theta_max() const { return hi_; }

    double operator()(double th) const {
        if (fd_) return (*fd_)(th);
        return (*fa_)(th).second - (*fb_)(th - shift_b_).second;
    }

    double derivative(double th) const {
        if (fd_) return fd_->derivative(th);
        return fa_->derivative(th).second - fb_->derivative(th - shift_b_).second;
    }

    const SectionCurve* curve_a() const { return a_; }
    const SectionCurve* curve_b() const { return b_; }

private:
    const SectionCurve* a_ = nullptr;
    const SectionCurve* b_ = nullptr;
    std::optional<CurveFun> fa_, fb_;
    std::optional<PchipInterpolant> fd_;
    double shift_b_ = 0.0;
    double lo_ = 0.0, hi_ = 0.0;
};

inline DistanceCurve distance_curve(const SectionCurve& A, const SectionCurve& B) {
    return DistanceCurve(A, B);
}

/// Transversal zero of a distance graph.
struct TransverseZero {
    double theta_star = 0.0;
    double d_prime = 0.0;
    double residual = 0.0;  // |d| at the accepted root
    const SectionCurve* curve_a = nullptr;
    const SectionCurve* curve_b = nullptr;
};

/// All sign-change zeros of d on its window, bisected and Newton-polished on
/// the interpolant, ordered by angle. A root whose |d'| stays within a factor
/// 10 of root_tol has no usable transversality margin and is rejected.
inline std::vector<TransverseZero> find_transverse_zero(const DistanceCurve& d,
                                                        double root_tol = Tolerances{}.root_tol,
                                                        std::size_t n_scan = 512) {
    if (!(root_tol > 0.0) || n_scan < 8)
        throw InvalidParameter("find_transverse_zero: bad tolerance or scan size");
    const double lo = d.theta_min(), hi = d.theta_max();
    std::vector<TransverseZero> out;

    auto polish = [&](double ta, double tb, double fa, double fb) {
        for (int it = 0; it < 200 && tb - ta > 1e-15 * std::max(1.0, std::abs(tb)); ++it) {
            const double tm = 0.5 * (ta + tb);
            const double fm = d(tm);
            if (fm == 0.0) {
                ta = tb = tm;
                break;
            }
            if ((fa < 0.0) != (fm < 0.0)) {
                tb = tm;
                fb = fm;
            } else {
                ta = tm;
                fa = fm;
            }
        }
        double th = 0.5 * (ta + tb);
        for (int it = 0; it < 8; ++it) {
            const double f = d(th);
            const double fp = d.derivative(th);
            if (fp == 0.0) break;
            const double next = th - f / fp;
            if (!(next >= lo && next <= hi)) break;
            const double moved = std::abs(next - th);
            th = next;
            if (moved < 1e-16 * std::max(1.0, std::abs(th))) break;
        }
        TransverseZero z;
        z.theta_star = th;
        z.d_prime = d.derivative(th);
        z.residual = std::abs(d(th));
        z.curve_a = d.curve_a();
        z.curve_b = d.curve_b();
        if (z.residual > root_tol)
            throw NoConvergence("find_transverse_zero: root residual above tolerance");
        if (std::abs(z.d_prime) <= 10.0 * root_tol)
            throw DegenerateZero("find_transverse_zero: derivative below the margin");
        for (const auto& prev : out)
            if (std::abs(prev.theta_star - z.theta_star) < 1e-9) return;
        out.push_back(z);
    };

    std::vector<double> t(n_scan + 1), f(n_scan + 1);
    for (std::size_t i = 0; i <= n_scan; ++i) {
        t[i] = lo + (hi - lo) * double(i) / double(n_scan);
        f[i] = d(t[i]);
    }
    for (std::size_t i = 0; i <= n_scan; ++i) {
        if (f[i] == 0.0)
            polish(t[i], t[i], 0.0, 0.0);
        else if (i > 0 && f[i - 1] != 0.0 && (f[i - 1] < 0.0) != (f[i] < 0.0))
            polish(t[i - 1], t[i], f[i - 1], f[i]);
    }
    if (out.empty()) throw NoSignChange("find_transverse_zero: no sign change on the window");
    return out;
}

namespace detail {

inline TransverseZero nearest_zero(const DistanceCurve& d, double goal,
                                   double root_tol = Tolerances{}.root_tol) {
    const auto zeros = find_transverse_zero(d, root_tol);
    std::size_t best = 0;
    for (std::size_t i = 1; i < zeros.size(); ++i)
        if (std::abs(zeros[i].theta_star - goal) < std::abs(zeros[best].theta_star - goal))
            best = i;
    return zeros[best];
}

} // namespace detail

// -- outer Poincare map ------------------------------------------------------

/// Radial momentum on the outer ring solving H(r0, theta, R, Theta) = h.
inline double outer_radial_momentum(double rhat0, double theta, double Theta,
                                    const EnergyContext& ctx, RadialSign sign) {
    if (sign == RadialSign::Both)
        throw InvalidParameter("outer_radial_momentum: sign must pick one side");
    const double rest = hamiltonian_rot_polar_cm({rhat0, theta, 0.0, Theta}, ctx.mu);
    const double R2 = 2.0 * (ctx.h - rest);
    if (!(R2 >= 0.0))
        throw InvalidParameter("outer_radial_momentum: level not reachable at this angle");
    const double R = std::sqrt(R2);
    return sign == RadialSign::Positive ? R : -R;
}

/// Integration options tuned for outer excursions: steps tight enough that
/// the slow rotating-frame forcing does not alias into energy drift, a finite
/// return horizon, and an escape radius that classifies runaways quickly.
inline IntegrateOptions outer_map_options() {
    IntegrateOptions o;
    o.tol.abs_tol = 1e-13;
    o.tol.rel_tol = 1e-13;
    o.energy_tol = 1e-7;
    o.section_t_max = 2.0e4;
    o.escape_radius = 1.0e4;
    return o;
}

struct OuterMapResult {
    PhasePoint point;       // inbound ring crossing
    double elapsed = 0.0;
    double apoapsis = 0.0;  // refined maximum CM radius of the excursion
    Trajectory path;
};

namespace detail {

// Maximum CM radius along a recorded excursion. The recording thins near the
// apex where steps are large, so the apex is refined by a bisection solve of
// R(t) = 0 re-integrated from the recorded point nearest the maximum.
inline double refine_apoapsis(const Trajectory& path, const EnergyContext& ctx,
                              const IntegrateOptions& opts) {
    if (path.points.empty()) throw InvalidParameter("refine_apoapsis: empty path");
    std::size_t best = 0;
    double rbest = -1.0;
    for (std::size_t i = 0; i < path.points.size(); ++i) {
        const double r = radius_cm(path.points[i], ctx);
        if (r > rbest) {
            rbest = r;
            best = i;
        }
    }
    if (best == 0 || best + 1 == path.points.size()) return rbest;
    const PhasePoint base = path.points[best];
    auto R_at = [&](double tt) {
        if (tt == base.t) return convert(base, Chart::RotPolarCM, ctx).x[2];
        const Trajectory seg = integrate(base, ctx, tt - base.t, opts);
        const PhasePoint& p = seg.points.empty() ? base : seg.points.back();
        return convert(p, Chart::RotPolarCM, ctx).x[2];
    };
    double ta = path.points[best - 1].t, tb = path.points[best + 1].t;
    double fa = convert(path.points[best - 1], Chart::RotPolarCM, ctx).x[2];
    double fb = convert(path.points[best + 1], Chart::RotPolarCM, ctx).x[2];
    if (!(fa > 0.0 && fb < 0.0)) return rbest;  // apex flat at recording resolution
    for (int it = 0; it < 48 && tb - ta > 1e-12 * std::max(1.0, std::abs(tb)); ++it) {
        const double tm = 0.5 * (ta + tb);
        const double fm = R_at(tm);
        if (fm == 0.0) {
            ta = tb = tm;
            break;
        }
        (fm > 0.0 ? ta : tb) = tm;
        (fm > 0.0 ? fa : fb) = fm;
    }
    const double tm = 0.5 * (ta + tb);
    const Trajectory seg = integrate(base, ctx, tm - base.t, opts);
    return radius_cm(seg.points.empty() ? base : seg.points.back(), ctx);
}

} // namespace detail

/// Follows a point of the outer ring with outward momentum around its far
/// excursion and back to the inbound ring crossing. Hyperbolic seeds leave
/// through the escape radius; seeds hugging the stable manifold exhaust the
/// time horizon instead.
inline OuterMapResult outer_poincare(const PhasePoint& p, const EnergyContext& ctx,
                                     double rhat0,
                                     const IntegrateOptions& opts = outer_map_options()) {
    const SectionSpec sec{SectionKind::SigmaHatOuter, RadialSign::Negative, rhat0};
    validate(sec);
    const PhasePoint pol = convert(p, Chart::RotPolarCM, ctx);
    if (std::abs(pol.x[0] - rhat0) > 1e-9 * std::max(1.0, rhat0) || !(pol.x[2] > 0.0))
        throw SeedInvalid("outer_poincare: input must sit on the ring moving outward");
    OuterMapResult res;
    try {
        SectionHit hit = integrate_to_section(pol, ctx, sec, TimeDirection::Forward, opts);
        res.point = hit.point;
        res.elapsed = hit.elapsed;
        res.path = std::move(hit.path);
    } catch (const NoCrossing&) {
        throw StepBudgetExceeded("outer_poincare: no return within the time horizon");
    }
    res.apoapsis = detail::refine_apoapsis(res.path, ctx, opts);
    return res;
}

// -- trajectory assembly helpers ----------------------------------------------

namespace detail {

inline void append_trajectory(Trajectory& a, Trajectory b) {
    if (a.points.empty()) {
        a = std::move(b);
        return;
    }
    std::size_t k = 0;
    if (!b.points.empty() &&
        std::abs(b.points.front().t - a.points.back().t) <=
            1e-12 * std::max(1.0, std::abs(a.points.back().t)))
        k = 1;
    a.points.insert(a.points.end(), b.points.begin() + std::ptrdiff_t(k), b.points.end());
    a.switches.insert(a.switches.end(), b.switches.begin(), b.switches.end());
    a.rescale_log += b.rescale_log;
    a.chart_time += b.chart_time;
    a.steps += b.steps;
}

inline void reverse_trajectory(Trajectory& a) {
    std::reverse(a.points.begin(), a.points.end());
    std::reverse(a.switches.begin(), a.switches.end());
}

// Truncates a recorded path at its closest approach to the Jupiter collision.
inline void clip_at_jup_min(Trajectory& a, const EnergyContext& ctx) {
    if (a.points.empty()) return;
    std::size_t best = 0;
    double rb = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        const double r = radius_jup(a.points[i], ctx);
        if (r < rb) {
            rb = r;
            best = i;
        }
    }
    a.points.resize(best + 1);
    const double t0 = std::min(a.points.front().t, a.points.back().t);
    const double t1 = std::max(a.points.front().t, a.points.back().t);
    std::vector<SwitchRecord> kept;
    for (const auto& s : a.switches)
        if (s.t >= t0 && s.t <= t1) kept.push_back(s);
    a.switches = std::move(kept);
}

inline double max_cm_radius(const Trajectory& t, const EnergyContext& ctx) {
    double m = 0.0;
    for (const auto& p : t.points) m = std::max(m, radius_cm(p, ctx));
    return m;
}

// Least-squares quadratic fit slope at x0.
inline double quad_fit_slope(const std::vector<double>& x, const std::vector<double>& y,
                             double x0) {
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n) throw InvalidParameter("quad_fit_slope: needs three points");
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
    const double s0 = double(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = x[i] - x0;
        const double u2 = u * u;
        s1 += u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        t0 += y[i];
        t1 += y[i] * u;
        t2 += y[i] * u2;
    }
    const double det = s0 * (s2 * s4 - s3 * s3) - s1 * (s1 * s4 - s3 * s2) +
                       s2 * (s1 * s3 - s2 * s2);
    if (det == 0.0) throw DegenerateZero("quad_fit_slope: singular fit");
    const double det1 = s0 * (t1 * s4 - s3 * t2) - t0 * (s1 * s4 - s3 * s2) +
                        s2 * (s1 * t2 - t1 * s2);
    return det1 / det;
}

} // namespace detail

// -- triple intersection -------------------------------------------------------

/// Common intersection of the carried unstable graph, the stable graph and
/// the ejection graph on the outbound section, at the matched level.
struct TripleIntersection {
    double Theta0_star = 0.0;    // parabolic angular momentum selecting the level
    double h_star = 0.0;         // energy level, equals -Theta0_star
    double theta_minus = 0.0;    // common intersection angle on the outbound section
    double Theta_minus = 0.0;
    double theta_plus = 0.0;     // inbound intersection angle
    double theta_minus_u = 0.0;  // image of the inbound point across the collision region
    double slope_unstable = 0.0; // carried unstable graph slope at theta_minus
    double slope_stable = 0.0;
    double slope_ejection = 0.0;
    double angle_A = 0.0;        // carried-unstable to stable tangent angle
    double angle_B = 0.0;        // carried-unstable to ejection tangent angle
    double residual = 0.0;       // |theta_minus_u - theta_minus| at acceptance
    int iterations = 0;
};

namespace detail {

struct TripleCurves {
    SectionCurve inf_s, inf_u, jup_e, jup_c;
    double theta_minus = 0.0, theta_plus = 0.0, theta_minus_u = 0.0, Theta_minus = 0.0;
    double F = 0.0;
};

// One candidate level: locate the inbound and outbound intersections and
// carry the inbound one across the collision region.
inline TripleCurves triple_eval(double Theta0, double mu, double nu, std::size_t n_inf,
                                std::size_t n_jup) {
    const EnergyContext ctx = make_context(mu, -Theta0);
    const SectionSpec sec_out{SectionKind::SigmaGamma, RadialSign::Positive, nu};
    const SectionSpec sec_in{SectionKind::SigmaGamma, RadialSign::Negative, nu};
    TripleCurves tc;
    tc.jup_c = jupiter_manifold_curve(ctx, nu, JupiterBranch::Collision, n_jup);
    tc.inf_u = infinity_manifold_curve(ctx, Theta0, ManifoldBranch::Unstable, sec_in, n_inf);
    tc.jup_e = jupiter_manifold_curve(ctx, nu, JupiterBranch::Ejection, n_jup);
    tc.inf_s = infinity_manifold_curve(ctx, Theta0, ManifoldBranch::Stable, sec_out, n_inf);
    const double pred = std::atan((Theta0 - 1.0) / std::sqrt(2.0 - Theta0 * Theta0));
    tc.theta_plus = nearest_zero(distance_curve(tc.inf_u, tc.jup_c), -pred).theta_star;
    tc.theta_minus = nearest_zero(distance_curve(tc.inf_s, tc.jup_e), pred).theta_star;

    const CurveFun fu(tc.inf_u, false);
    const auto [Rp, Tp] = fu(tc.theta_plus);
    const double r_sec = section_radius(sec_in, ctx.mu);
    const PhasePoint p_plus{Chart::RotPolarJup, {r_sec, tc.theta_plus, Rp, Tp}, 0.0};
    const PhasePoint p_u = convert(transition_map(p_plus, ctx, nu), Chart::RotPolarJup, ctx);
    tc.theta_minus_u = wrap_angle(p_u.x[1]);
    tc.Theta_minus = CurveFun(tc.jup_e, true)(tc.theta_minus).second;
    tc.F = tc.theta_minus_u - tc.theta_minus;
    return tc;
}

} // namespace detail

/// Solves for the level whose carried inbound intersection lands exactly on
/// the outbound one, by secant iteration on the parabolic angular momentum,
/// then measures the three graph slopes and their mutual angles there.
inline TripleIntersection solve_triple_intersection(double mu, double nu,
                                                    std::size_t n_inf = 64,
                                                    std::size_t n_jup = 256,
                                                    double tol = 1e-7, int max_iter = 12) {
    if (!(nu > 3.0 / 11.0 && nu < 1.0 / 3.0))
        throw InvalidParameter("solve_triple_intersection: nu outside (3/11, 1/3)");
    if (!(mu > 0.0 && mu < 0.1))
        throw InvalidParameter("solve_triple_intersection: mu outside (0, 0.1)");
    const double x_lo = theta0_curve_window_lo + 0.05;
    const double x_hi = theta0_curve_window_hi - 0.05;

    double x0 = 1.0;
    detail::TripleCurves c0 = detail::triple_eval(x0, mu, nu, n_inf, n_jup);
    int used = 1;
    double x1 = x0 - 1e-4;
    detail::TripleCurves c1 = detail::triple_eval(x1, mu, nu, n_inf, n_jup);
    ++used;
    while (std::abs(c1.F) > tol) {
        if (used >= max_iter)
            throw NoConvergence("solve_triple_intersection: secant budget exhausted");
        const double df = c1.F - c0.F;
        if (df == 0.0) throw NoConvergence("solve_triple_intersection: flat secant");
        double x2 = x1 - c1.F * (x1 - x0) / df;
        const double step = std::clamp(x2 - x1, -0.05, 0.05);
        x2 = std::clamp(x1 + step, x_lo, x_hi);
        x0 = x1;
        c0 = std::move(c1);
        x1 = x2;
        c1 = detail::triple_eval(x1, mu, nu, n_inf, n_jup);
        ++used;
    }

    TripleIntersection res;
    res.Theta0_star = x1;
    res.h_star = -x1;
    res.theta_minus = c1.theta_minus;
    res.Theta_minus = c1.Theta_minus;
    res.theta_plus = c1.theta_plus;
    res.theta_minus_u = c1.theta_minus_u;
    res.residual = std::abs(c1.F);
    res.iterations = used;

    const CurveFun fs(c1.inf_s, false);
    const CurveFun fe(c1.jup_e, true);
    res.slope_stable = fs.derivative(c1.theta_minus).second;
    res.slope_ejection = fe.derivative(c1.theta_minus).second;

    // Carried unstable slope: push the unstable samples near the inbound
    // intersection across the collision region and fit the image graph.
    const EnergyContext ctx = make_context(mu, -x1);
    const double r_sec = section_radius(c1.inf_u.section, ctx.mu);
    std::vector<CurveSample> local;
    double w = 0.08;
    while (true) {
        local.clear();
        for (const auto& s : c1.inf_u.samples)
            if (std::abs(s.theta - c1.theta_plus) <= w) local.push_back(s);
        if (local.size() >= 5 || w > 1.0) break;
        w *= 2.0;
    }
    if (local.size() < 5)
        throw NoConvergence("solve_triple_intersection: too few samples near the intersection");
    std::vector<double> thu(local.size()), Thu(local.size());
    parallel_for(local.size(), [&](std::size_t i) {
        const PhasePoint pin{Chart::RotPolarJup,
                             {r_sec, local[i].theta, local[i].R, local[i].Theta}, 0.0};
        const PhasePoint q = convert(transition_map(pin, ctx, nu), Chart::RotPolarJup, ctx);
        thu[i] = c1.theta_minus + wrap_angle(q.x[1] - c1.theta_minus);
        Thu[i] = q.x[3];
    });
    res.slope_unstable = detail::quad_fit_slope(thu, Thu, c1.theta_minus);

    const double mu_ = res.slope_unstable, ms = res.slope_stable, mj = res.slope_ejection;
    res.angle_A = std::atan2(ms - mu_, 1.0 + ms * mu_);
    res.angle_B = std::atan2(mj - mu_, 1.0 + mj * mu_);
    if (!(res.angle_A > -0.5 * pi && res.angle_A < res.angle_B && res.angle_B < 0.0))
        throw OrderingViolated("solve_triple_intersection: tangent angles out of order");
    return res;
}

// -- spiral evidence -----------------------------------------------------------

struct SpiralReport {
    double offset = 0.0;
    std::size_t n_seeds = 0;
    std::size_t n_returned = 0;
    std::size_t n_escaped = 0;
    double min_distance_unstable = 0.0;
    double max_elapsed = 0.0;
    std::size_t crossings = 0;  // sign changes of the images against the target graph
};

/// Maps short vertical segments hung offset-deep below the stable graph at
/// angle theta_seg through the outer Poincare map. Reports how closely the
/// images approach the unstable graph and how often they cross the target
/// curve (the unstable curve itself when no target is given). Deeper seeds
/// return sooner; seeds at or above the stable graph escape.
inline std::vector<SpiralReport> spiral_evidence(
    const EnergyContext& ctx, double rhat0, double theta_seg,
    const std::vector<double>& offsets = {3e-2, 1e-2, 3e-3}, std::size_t n_per_offset = 12,
    const SectionCurve* target = nullptr, std::size_t n_curve = 64,
    const IntegrateOptions& opts = outer_map_options()) {
    if (n_per_offset < 2) throw InvalidParameter("spiral_evidence: needs two seeds per offset");
    const double Theta0 = -ctx.h;
    const SectionSpec up{SectionKind::SigmaHatOuter, RadialSign::Positive, rhat0};
    const SectionSpec dn{SectionKind::SigmaHatOuter, RadialSign::Negative, rhat0};
    const SectionCurve cs =
        infinity_manifold_curve(ctx, Theta0, ManifoldBranch::Stable, up, n_curve);
    const SectionCurve cu =
        infinity_manifold_curve(ctx, Theta0, ManifoldBranch::Unstable, dn, n_curve);
    const CurveFun fs(cs, true), fu(cu, true);
    std::optional<CurveFun> ft;
    if (target) ft.emplace(*target, detail::curve_is_closed(*target));
    const double Ts = fs(theta_seg).second;

    std::vector<SpiralReport> reports;
    for (const double off : offsets) {
        if (!(off > 0.0)) throw InvalidParameter("spiral_evidence: offsets must be positive");
        SpiralReport rep;
        rep.offset = off;
        rep.n_seeds = n_per_offset;
        std::vector<std::optional<std::array<double, 3>>> img(n_per_offset);
        parallel_for(n_per_offset, [&](std::size_t j) {
            const double Th = Ts - off * double(j + 1) / double(n_per_offset);
            try {
                const double R =
                    outer_radial_momentum(rhat0, theta_seg, Th, ctx, RadialSign::Positive);
                const PhasePoint seed{Chart::RotPolarCM, {rhat0, theta_seg, R, Th}, 0.0};
                const OuterMapResult m = outer_poincare(seed, ctx, rhat0, opts);
                const PhasePoint q = convert(m.point, Chart::RotPolarCM, ctx);
                img[j] = std::array<double, 3>{wrap_angle(q.x[1]), q.x[3], m.elapsed};
            } catch (const NumericError&) {
                img[j] = std::nullopt;
            }
        });
        rep.min_distance_unstable = std::numeric_limits<double>::infinity();
        double prev_miss = 0.0;
        bool has_prev = false;
        for (std::size_t j = 0; j < n_per_offset; ++j) {
            if (!img[j]) {
                ++rep.n_escaped;
                continue;
            }
            ++rep.n_returned;
            const auto [thq, Tq, el] = *img[j];
            rep.min_distance_unstable =
                std::min(rep.min_distance_unstable, std::abs(Tq - fu(thq).second));
            rep.max_elapsed = std::max(rep.max_elapsed, el);
            const double miss = Tq - (ft ? (*ft)(thq).second : fu(thq).second);
            if (has_prev && (miss < 0.0) != (prev_miss < 0.0)) ++rep.crossings;
            prev_miss = miss;
            has_prev = true;
        }
        reports.push_back(rep);
    }
    return reports;
}

// -- ejection-collision orbit searches -----------------------------------------

/// Orbit kinds: source family (ejection) to target family (collision).
enum class ECKind { JmJp, SmJp, JmSp, BallisticSmJp, BallisticJmSp };

inline const char* to_string(ECKind k) {
    switch (k) {
        case ECKind::JmJp: return "J-J+";
        case ECKind::SmJp: return "S-J+";
        case ECKind::JmSp: return "J-S+";
        case ECKind::BallisticSmJp: return "ballistic-S-J+";
        case ECKind::BallisticJmSp: return "ballistic-J-S+";
    }
    throw InvalidParameter("to_string: unknown ECKind");
}

struct ECOrbit {
    ECKind kind = ECKind::JmJp;
    EnergyContext ctx{};
    Trajectory trajectory;        // collision set to collision set, physical time
    double apoapsis = 0.0;        // maximum CM radius along the orbit
    double return_time = 0.0;     // outer-excursion elapsed time (whole trip when ballistic)
    double start_residual = 0.0;  // distance to the source family at the clipped start
    double end_residual = 0.0;    // distance to the target family at the clipped end
    double parameter = 0.0;       // source-family parameter at the solution
};

struct ECSearchParams {
    double rhat0 = 3.0;        // outer ring radius
    double gamma = 0.3;        // Jupiter-side section exponent
    double delta = 0.3;        // Sun-side section scale
    std::size_t n_scan = 48;   // coarse scan of each collision family
    std::size_t n_ladder = 18; // geometric refinement toward the stable-curve crossing
    std::size_t n_curve = 64;  // outer manifold curve sampling
    double miss_tol = 1e-9;    // ring-crossing shooting tolerance
    IntegrateOptions outer = outer_map_options();
};

namespace detail {

// One-parameter ejection/collision family with its inner section.
struct ECFamily {
    bool jupiter = true;
    JupiterBranch jb = JupiterBranch::Ejection;
    SunBranch sb = SunBranch::Unstable;
    double inner = 0.3;  // gamma or delta
    double lo = 0.0, hi = pi;
    std::optional<SectionCurve> sun;
    std::optional<CurveFun> sun_fun;

    PhasePoint inner_point(double s, const EnergyContext& ctx) const {
        if (jupiter) return circle_crossing(s, ctx, inner, jb).point;
        const auto [R, Th] = (*sun_fun)(s);
        return {Chart::RotPolarSun, {inner * inner, wrap_angle(s), R, Th}, 0.0};
    }
};

inline ECFamily make_family(bool source, ECKind kind, const EnergyContext& ctx,
                            const ECSearchParams& par) {
    ECFamily f;
    f.jupiter = source ? kind != ECKind::SmJp : kind != ECKind::JmSp;
    if (f.jupiter) {
        f.jb = source ? JupiterBranch::Ejection : JupiterBranch::Collision;
        f.inner = par.gamma;
        f.lo = 0.0;
        f.hi = pi;  // deck symmetry: half the circle sweeps the family once
    } else {
        f.sb = source ? SunBranch::Unstable : SunBranch::Stable;
        f.inner = par.delta;
        f.sun = sun_manifold_curve(ctx, par.delta, f.sb, 256);
        f.sun_fun.emplace(*f.sun, true);
        f.lo = f.sun->samples.front().theta;
        f.hi = f.lo + 2.0 * pi;
    }
    return f;
}

struct RingPoint {
    bool ok = false;
    double s = 0.0;
    double theta = 0.0, Theta = 0.0;
    PhasePoint point;  // full state at the ring, CM polar
    double D = 0.0;    // Theta minus the stable graph (source side only)
};

inline RingPoint to_ring(double s, const ECFamily& fam, const EnergyContext& ctx, double rhat0,
                         RadialSign ring_sign, TimeDirection dir, const CurveFun* stable,
                         const IntegrateOptions& opts) {
    RingPoint rp;
    rp.s = s;
    try {
        const PhasePoint p0 = fam.inner_point(s, ctx);
        const SectionSpec ring{SectionKind::SigmaHatOuter, ring_sign, rhat0};
        const SectionHit hit = integrate_to_section(p0, ctx, ring, dir, opts);
        const PhasePoint q = convert(hit.point, Chart::RotPolarCM, ctx);
        rp.theta = wrap_angle(q.x[1]);
        rp.Theta = q.x[3];
        rp.point = q;
        rp.ok = true;
        if (stable) rp.D = rp.Theta - (*stable)(rp.theta).second;
    } catch (const NumericError&) {
        rp.ok = false;
    }
    return rp;
}

// Local graph of the target family on the inbound ring, anchored at its
// crossing with the unstable graph.
struct RingTarget {
    PchipInterpolant fn;
    double th_lo = 0.0, th_hi = 0.0;
    double theta_x = 0.0;  // crossing angle with the unstable graph
    double s_x = 0.0;      // family parameter at the crossing

    double miss(double theta, double Theta) const {
        const double th = theta_x + wrap_angle(theta - theta_x);
        if (!(th >= th_lo && th <= th_hi)) return std::numeric_limits<double>::quiet_NaN();
        return Theta - fn(th);
    }
};

inline RingTarget ring_target(const ECFamily& fam, const EnergyContext& ctx, double rhat0,
                              const CurveFun& fu, std::size_t n_scan,
                              const IntegrateOptions& opts) {
    const std::size_t n = std::max<std::size_t>(n_scan, 16);
    std::vector<RingPoint> pts(n);
    parallel_for(n, [&](std::size_t i) {
        const double s = fam.lo + (fam.hi - fam.lo) * double(i) / double(n);
        pts[i] = to_ring(s, fam, ctx, rhat0, RadialSign::Negative, TimeDirection::Backward,
                         nullptr, opts);
    });
    auto G = [&](const RingPoint& rp) { return rp.Theta - fu(rp.theta).second; };

    double sa = 0.0, sb = 0.0, Ga = 0.0;
    bool found = false;
    for (std::size_t i = 0; i + 1 <= n && !found; ++i) {
        const RingPoint& p0 = pts[i];
        const RingPoint& p1 = pts[(i + 1) % n];
        if (!p0.ok || !p1.ok) continue;
        const double g0 = G(p0), g1 = G(p1);
        if ((g0 < 0.0) == (g1 < 0.0)) continue;
        sa = p0.s;
        sb = i + 1 == n ? p1.s + (fam.hi - fam.lo) : p1.s;
        Ga = g0;
        found = true;
    }
    if (!found)
        throw NoneFound("ring_target: collision family does not cross the unstable graph");

    RingTarget tgt;
    RingPoint rx;
    for (int it = 0; it < 60 && std::abs(sb - sa) > 1e-13 * std::max(1.0, std::abs(sb)); ++it) {
        const double sm = 0.5 * (sa + sb);
        const RingPoint rm =
            to_ring(sm, fam, ctx, rhat0, RadialSign::Negative, TimeDirection::Backward, nullptr,
                    opts);
        if (!rm.ok) throw NoneFound("ring_target: family leg failed near the crossing");
        rx = rm;
        const double gm = G(rm);
        if ((gm < 0.0) == (Ga < 0.0)) {
            sa = sm;
            Ga = gm;
        } else {
            sb = sm;
        }
    }
    tgt.s_x = rx.s;
    tgt.theta_x = rx.theta;

    const double ds = (fam.hi - fam.lo) / double(n) * 4.0;
    const std::size_t m = 17;
    std::vector<RingPoint> loc(m);
    parallel_for(m, [&](std::size_t i) {
        const double s = tgt.s_x - ds + 2.0 * ds * double(i) / double(m - 1);
        loc[i] = to_ring(s, fam, ctx, rhat0, RadialSign::Negative, TimeDirection::Backward,
                         nullptr, opts);
    });
    std::vector<std::pair<double, double>> graph;
    for (const auto& rp : loc)
        if (rp.ok) graph.emplace_back(tgt.theta_x + wrap_angle(rp.theta - tgt.theta_x), rp.Theta);
    std::sort(graph.begin(), graph.end());
    std::vector<double> th, Th;
    for (const auto& [a, b] : graph) {
        if (!th.empty() && !(a > th.back())) continue;
        th.push_back(a);
        Th.push_back(b);
    }
    if (th.size() < 4) throw NoneFound("ring_target: local graph too thin at the crossing");
    tgt.th_lo = th.front();
    tgt.th_hi = th.back();
    tgt.fn = PchipInterpolant(std::move(th), std::move(Th));
    return tgt;
}

// Full orbit at a polished source parameter: inner legs, outer excursion,
// target approach, and the regularized clip at the collision.
inline ECOrbit assemble_ec(ECKind kind, double s, const ECFamily& src, const ECFamily& tgt,
                           const EnergyContext& ctx, const ECSearchParams& par,
                           const IntegrateOptions& oe, const CurveFun& f_tgt_inner) {
    ECOrbit orb;
    orb.kind = kind;
    orb.ctx = ctx;
    orb.parameter = s;
    Trajectory T;
    PhasePoint at_ring;
    const SectionSpec ring_up{SectionKind::SigmaHatOuter, RadialSign::Positive, par.rhat0};
    if (src.jupiter) {
        IntegrateOptions oi = oe;
        oi.section_t_max = 100.0;
        const SectionSpec secj{SectionKind::SigmaGamma, RadialSign::Positive, par.gamma};
        SectionHit h1 = integrate_to_section(collision_circle(s, ctx).zw, ctx, secj,
                                             TimeDirection::Forward, oi);
        SectionHit h2 = integrate_to_section(h1.point, ctx, ring_up, TimeDirection::Forward, oe);
        at_ring = h2.point;
        append_trajectory(T, std::move(h1.path));
        append_trajectory(T, std::move(h2.path));
    } else {
        SectionHit h2 = integrate_to_section(src.inner_point(s, ctx), ctx, ring_up,
                                             TimeDirection::Forward, oe);
        at_ring = h2.point;
        append_trajectory(T, std::move(h2.path));
    }

    OuterMapResult om = outer_poincare(convert(at_ring, Chart::RotPolarCM, ctx), ctx, par.rhat0,
                                       oe);
    orb.return_time = om.elapsed;
    orb.apoapsis = om.apoapsis;
    append_trajectory(T, std::move(om.path));

    const SectionSpec inner_t =
        tgt.jupiter ? SectionSpec{SectionKind::SigmaGamma, RadialSign::Negative, par.gamma}
                    : SectionSpec{SectionKind::SigmaBarSun, RadialSign::Negative, par.delta};
    SectionHit h4 = integrate_to_section(om.point, ctx, inner_t, TimeDirection::Forward, oe);
    const PhasePoint arr =
        convert(h4.point, tgt.jupiter ? Chart::RotPolarJup : Chart::RotPolarSun, ctx);
    orb.end_residual = std::abs(arr.x[3] - f_tgt_inner(arr.x[1]).second);
    append_trajectory(T, std::move(h4.path));

    if (tgt.jupiter) {
        IntegrateOptions oi = oe;
        oi.section_t_max = 100.0;
        const SectionSpec secout{SectionKind::SigmaGamma, RadialSign::Positive, par.gamma};
        const PhasePoint lc = convert(h4.point, Chart::LeviCivita, ctx, LCBranch::PlusZ2);
        SectionHit h5 = integrate_to_section(lc, ctx, secout, TimeDirection::Forward, oi);
        clip_at_jup_min(h5.path, ctx);
        append_trajectory(T, std::move(h5.path));
    }
    orb.trajectory = std::move(T);
    orb.start_residual = 0.0;
    return orb;
}

} // namespace detail

/// Shooting search for ejection-collision orbits of the requested kind: scans
/// the source family up to its crossing with the stable graph, follows the
/// returning side through the outer map, and polishes every sign change
/// against the target family's local graph on the inbound ring. Returns the
/// first n_wanted crossings ordered by return time; the sequence is not
/// claimed complete.
inline std::vector<ECOrbit> find_ec_orbits(const EnergyContext& ctx, ECKind kind,
                                           std::size_t n_wanted,
                                           const ECSearchParams& par = {}) {
    if (kind == ECKind::BallisticSmJp || kind == ECKind::BallisticJmSp)
        throw InvalidParameter("find_ec_orbits: ballistic kinds come from find_ballistic_ec");
    if (n_wanted == 0) return {};
    const double Theta0 = -ctx.h;
    if (!(Theta0 > theta0_curve_window_lo && Theta0 < theta0_curve_window_hi))
        throw InvalidParameter("find_ec_orbits: level outside the manifold window");

    IntegrateOptions oe = par.outer;
    oe.policy.gamma = par.gamma;
    oe.policy.delta = std::max(par.delta, 0.3);
    const SectionSpec up{SectionKind::SigmaHatOuter, RadialSign::Positive, par.rhat0};
    const SectionSpec dn{SectionKind::SigmaHatOuter, RadialSign::Negative, par.rhat0};
    const SectionCurve curve_s =
        infinity_manifold_curve(ctx, Theta0, ManifoldBranch::Stable, up, par.n_curve);
    const SectionCurve curve_u =
        infinity_manifold_curve(ctx, Theta0, ManifoldBranch::Unstable, dn, par.n_curve);
    const CurveFun fs(curve_s, true), fu(curve_u, true);

    const detail::ECFamily src = detail::make_family(true, kind, ctx, par);
    const detail::ECFamily tgt = detail::make_family(false, kind, ctx, par);
    const detail::RingTarget target = detail::ring_target(tgt, ctx, par.rhat0, fu, par.n_scan, oe);
    const SectionCurve tgt_inner =
        tgt.jupiter ? jupiter_manifold_curve(ctx, par.gamma, JupiterBranch::Collision, 256)
                    : *tgt.sun;
    const CurveFun f_tgt_inner(tgt_inner, true);

    const std::size_t n = std::max<std::size_t>(par.n_scan, 16);
    std::vector<detail::RingPoint> scan(n);
    parallel_for(n, [&](std::size_t i) {
        const double s = src.lo + (src.hi - src.lo) * double(i) / double(n);
        scan[i] = detail::to_ring(s, src, ctx, par.rhat0, RadialSign::Positive,
                                  TimeDirection::Forward, &fs, oe);
    });
    std::vector<std::pair<std::size_t, std::size_t>> brackets;
    for (std::size_t i = 0; i + 1 <= n; ++i) {
        const detail::RingPoint& p0 = scan[i];
        const detail::RingPoint& p1 = scan[(i + 1) % n];
        if (!p0.ok || !p1.ok) continue;
        if ((p0.D < 0.0) != (p1.D < 0.0)) brackets.emplace_back(i, (i + 1) % n);
    }
    if (brackets.empty())
        throw NoneFound("find_ec_orbits: source family does not cross the stable graph");

    struct PipeEval {
        double miss = 0.0;
        OuterMapResult om;
        detail::RingPoint rp;
    };
    auto run_pipe = [&](double s) -> std::optional<PipeEval> {
        detail::RingPoint rp = detail::to_ring(s, src, ctx, par.rhat0, RadialSign::Positive,
                                               TimeDirection::Forward, &fs, oe);
        if (!rp.ok || !(rp.D < 0.0)) return std::nullopt;
        try {
            PipeEval pe;
            pe.om = outer_poincare(rp.point, ctx, par.rhat0, oe);
            const PhasePoint q = convert(pe.om.point, Chart::RotPolarCM, ctx);
            const double m = target.miss(q.x[1], q.x[3]);
            if (!std::isfinite(m)) return std::nullopt;
            pe.miss = m;
            pe.rp = std::move(rp);
            return pe;
        } catch (const NumericError&) {
            return std::nullopt;
        }
    };

    std::vector<ECOrbit> found;
    const double period = src.hi - src.lo;
    for (const auto& [ia, ib] : brackets) {
        if (found.size() >= n_wanted) break;
        // refine the stable-curve crossing with cheap ring legs only
        double sa = scan[ia].s;
        double sb = ib == 0 ? scan[ib].s + period : scan[ib].s;
        double Da = scan[ia].D;
        const bool neg_left = Da < 0.0;
        for (int it = 0; it < 48 && std::abs(sb - sa) > 1e-12 * std::max(1.0, std::abs(sb));
             ++it) {
            const double sm = 0.5 * (sa + sb);
            const detail::RingPoint rm = detail::to_ring(
                sm, src, ctx, par.rhat0, RadialSign::Positive, TimeDirection::Forward, &fs, oe);
            const double Dm = rm.ok ? rm.D : (neg_left ? 1.0 : -1.0);  // failures act escape-side
            if ((Dm < 0.0) == (Da < 0.0)) {
                sa = sm;
                Da = Dm;
            } else {
                sb = sm;
            }
        }
        const double s_star = 0.5 * (sa + sb);
        const double s_neg = neg_left ? scan[ia].s : (ib == 0 ? scan[ib].s + period : scan[ib].s);
        const double dir = s_star - s_neg > 0.0 ? 1.0 : -1.0;
        const double e0 = std::abs(s_star - s_neg);

        std::vector<std::optional<PipeEval>> lad(par.n_ladder);
        std::vector<double> ss(par.n_ladder);
        parallel_for(par.n_ladder, [&](std::size_t j) {
            ss[j] = s_star - dir * e0 * std::pow(2.0, -double(j));
            lad[j] = run_pipe(ss[j]);
        });

        for (std::size_t j = 0; j + 1 < par.n_ladder && found.size() < n_wanted; ++j) {
            if (!lad[j] || !lad[j + 1]) continue;
            double ma = lad[j]->miss, mb = lad[j + 1]->miss;
            if ((ma < 0.0) == (mb < 0.0)) continue;
            double pa = ss[j], pb = ss[j + 1];
            std::optional<std::pair<double, PipeEval>> root;
            for (int it = 0; it < 64; ++it) {
                double sm = 0.5 * (pa + pb);
                const double den = mb - ma;
                if (den != 0.0) {
                    const double sf = (pa * mb - pb * ma) / den;  // false position
                    const double w = std::abs(pb - pa);
                    if (std::abs(sf - 0.5 * (pa + pb)) < 0.4 * w) sm = sf;
                }
                const auto pe = run_pipe(sm);
                if (!pe) break;
                if ((pe->miss < 0.0) == (ma < 0.0)) {
                    pa = sm;
                    ma = pe->miss;
                } else {
                    pb = sm;
                    mb = pe->miss;
                }
                if (std::abs(pe->miss) <= par.miss_tol ||
                    std::abs(pb - pa) < 1e-13 * std::max(1.0, std::abs(pb))) {
                    root = std::make_pair(sm, *pe);
                    break;
                }
            }
            if (!root) continue;
            ECOrbit orb = detail::assemble_ec(kind, root->first, src, tgt, ctx, par, oe,
                                              f_tgt_inner);
            found.push_back(std::move(orb));
        }
    }
    if (found.empty())
        throw NoneFound("find_ec_orbits: no spiral crossing within the ladder budget");
    std::sort(found.begin(), found.end(),
              [](const ECOrbit& a, const ECOrbit& b) { return a.return_time < b.return_time; });
    if (found.size() > n_wanted) found.resize(n_wanted);
    return found;
}

/// Ejection-collision orbit staying inside the primaries' circle: a root of
/// the section distance between the Jupiter family carried to the Sun section
/// and the Sun manifold curve there. The Sun-side end clips at that section
/// (the collision manifold is reached only asymptotically); the Jupiter-side
/// end clips at the closest regularized approach.
inline ECOrbit find_ballistic_ec(const EnergyContext& ctx, double delta,
                                 ECKind kind = ECKind::BallisticJmSp, double gamma = 0.3,
                                 std::size_t n = 64,
                                 double root_tol = Tolerances{}.root_tol) {
    if (kind != ECKind::BallisticJmSp && kind != ECKind::BallisticSmJp)
        throw InvalidParameter("find_ballistic_ec: kind must be ballistic");
    const bool jm = kind == ECKind::BallisticJmSp;  // Jupiter ejection to Sun collision
    const JupiterBranch jb = jm ? JupiterBranch::Ejection : JupiterBranch::Collision;
    const SunBranch sb = jm ? SunBranch::Stable : SunBranch::Unstable;
    const SunManifoldCurve cj = jupiter_curve_at_sun_section(ctx, delta, gamma, jb, n);
    const SunManifoldCurve csun = sun_manifold_curve(ctx, delta, sb, 256);
    const double goal = (jm ? 1.0 : -1.0) * sun_theta_bar0(delta);
    const TransverseZero z = detail::nearest_zero(distance_curve(cj, csun), goal, root_tol);

    const auto [Rb, Tb] = CurveFun(cj, false)(z.theta_star);
    const PhasePoint pbar{Chart::RotPolarSun, {delta * delta, z.theta_star, Rb, Tb}, 0.0};

    ECOrbit orb;
    orb.kind = kind;
    orb.ctx = ctx;
    orb.parameter = z.theta_star;
    IntegrateOptions oe = outer_map_options();
    oe.policy.gamma = gamma;
    oe.policy.delta = std::max(delta, 0.3);
    IntegrateOptions oi = oe;
    oi.section_t_max = 100.0;
    const SectionSpec sec_out{SectionKind::SigmaGamma, RadialSign::Positive, gamma};
    const SectionSpec sec_in{SectionKind::SigmaGamma, RadialSign::Negative, gamma};

    Trajectory T;
    if (jm) {
        SectionHit h1 = integrate_to_section(pbar, ctx, sec_out, TimeDirection::Backward, oe);
        const PhasePoint lc = convert(h1.point, Chart::LeviCivita, ctx, LCBranch::PlusZ2);
        SectionHit h2 = integrate_to_section(lc, ctx, sec_in, TimeDirection::Backward, oi);
        detail::clip_at_jup_min(h2.path, ctx);
        detail::append_trajectory(T, std::move(h1.path));
        detail::append_trajectory(T, std::move(h2.path));
        detail::reverse_trajectory(T);
        orb.start_residual = detail::radius_jup(T.points.front(), ctx);
        orb.end_residual = z.residual;
    } else {
        SectionHit h1 = integrate_to_section(pbar, ctx, sec_in, TimeDirection::Forward, oe);
        const PhasePoint lc = convert(h1.point, Chart::LeviCivita, ctx, LCBranch::PlusZ2);
        SectionHit h2 = integrate_to_section(lc, ctx, sec_out, TimeDirection::Forward, oi);
        detail::clip_at_jup_min(h2.path, ctx);
        detail::append_trajectory(T, std::move(h1.path));
        detail::append_trajectory(T, std::move(h2.path));
        orb.start_residual = z.residual;
        orb.end_residual = detail::radius_jup(T.points.back(), ctx);
    }
    orb.apoapsis = detail::max_cm_radius(T, ctx);
    orb.return_time = std::abs(T.points.back().t - T.points.front().t);
    orb.trajectory = std::move(T);
    return orb;
}

} // namespace nearcol
