#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "nearcol/core.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/numutil.hpp"

namespace nearcol {

/// Coordinate atlas. Chart coordinate order:
///   RotCartCM      (q1, q2, p1, p2)      rotating frame, center of mass at origin
///   RotPolarCM     (r, theta, R, Theta)  polar of RotCartCM
///   NonRotPolarCM  (r, theta, R, Theta)  sidereal polar, theta_sid = theta_rot + t
///   RotCartJup     (q1, q2, p1, p2)      q = q_cm - (1-mu, 0), p = p_cm - (0, 1-mu)
///   RotPolarJup    (r, theta, R, Theta)  polar of RotCartJup
///   LeviCivita     (z1, z2, w1, w2)      q_jup = 2 z^2 (complex), p_jup = w / (xi conj(z))
///   StraightenedLC (s1, s2, u1, u2)      s = (z-w)/sqrt(2), u = (z+w)/sqrt(2)
///   RotPolarSun    (r, theta, R, Theta)  polar of q_cm + (mu, 0); momenta unshifted
///   McGeheeSun     (s, theta, alpha, rho) r_sun = s^2; (v,u) = sqrt(2(1-mu)+rho)(sin a, cos a)
///   McGeheeInf     (x, theta, R, Theta)  r_cm = 2/x^2; (theta, R, Theta) as RotPolarCM
///
/// The time stamp t is always physical time; regularized charts expose their
/// internal time through time_dilation (dt / d(chart time)).
enum class Chart {
    RotCartCM,
    RotPolarCM,
    NonRotPolarCM,
    RotCartJup,
    RotPolarJup,
    LeviCivita,
    StraightenedLC,
    RotPolarSun,
    McGeheeSun,
    McGeheeInf,
};

inline const char* chart_name(Chart c) {
    switch (c) {
        case Chart::RotCartCM: return "RotCartCM";
        case Chart::RotPolarCM: return "RotPolarCM";
        case Chart::NonRotPolarCM: return "NonRotPolarCM";
        case Chart::RotCartJup: return "RotCartJup";
        case Chart::RotPolarJup: return "RotPolarJup";
        case Chart::LeviCivita: return "LeviCivita";
        case Chart::StraightenedLC: return "StraightenedLC";
        case Chart::RotPolarSun: return "RotPolarSun";
        case Chart::McGeheeSun: return "McGeheeSun";
        case Chart::McGeheeInf: return "McGeheeInf";
    }
    return "?";
}

/// Chart-tagged phase state with physical time stamp.
struct PhasePoint {
    Chart chart = Chart::RotCartCM;
    std::array<double, 4> x{};
    double t = 0.0;
};

/// Half-plane branch of the Levi-Civita square root.
enum class LCBranch { PlusZ2, MinusZ2 };

// -- per-chart Hamiltonians ---------------------------------------------------

/// Rotating-frame Hamiltonian at the center of mass; conserved value h.
// A massless Jupiter (mu = 0) contributes no potential and no singularity.
inline double hamiltonian_rot_cart_cm(const std::array<double, 4>& x, double mu) {
    const double q1 = x[0], q2 = x[1], p1 = x[2], p2 = x[3];
    const double ds = std::hypot(q1 + mu, q2);
    if (ds == 0.0) throw CollisionSingularity("hamiltonian_rot_cart_cm: point at the Sun");
    double val = 0.5 * (p1 * p1 + p2 * p2) - (q1 * p2 - q2 * p1) - (1.0 - mu) / ds;
    if (mu != 0.0) {
        const double dj = std::hypot(q1 - (1.0 - mu), q2);
        if (dj == 0.0)
            throw CollisionSingularity("hamiltonian_rot_cart_cm: point at Jupiter");
        val -= mu / dj;
    }
    return val;
}

inline double hamiltonian_rot_polar_cm(const std::array<double, 4>& x, double mu) {
    const double r = x[0], th = x[1], R = x[2], Th = x[3];
    if (r <= 0.0) throw CollisionSingularity("hamiltonian_rot_polar_cm: r <= 0");
    const double ds = std::sqrt(r * r + 2.0 * r * mu * std::cos(th) + mu * mu);
    if (ds == 0.0) throw CollisionSingularity("hamiltonian_rot_polar_cm: point at the Sun");
    double val = 0.5 * (R * R + Th * Th / (r * r)) - Th - (1.0 - mu) / ds;
    if (mu != 0.0) {
        const double dj =
            std::sqrt(r * r - 2.0 * r * (1.0 - mu) * std::cos(th) + (1.0 - mu) * (1.0 - mu));
        if (dj == 0.0)
            throw CollisionSingularity("hamiltonian_rot_polar_cm: point at Jupiter");
        val -= mu / dj;
    }
    return val;
}

/// Two-body energy of sidereal polar data; conserved only for mu = 0.
inline double kepler_energy(const std::array<double, 4>& x) {
    const double r = x[0], R = x[2], Th = x[3];
    if (r <= 0.0) throw CollisionSingularity("kepler_energy: r <= 0");
    return 0.5 * (R * R + Th * Th / (r * r)) - 1.0 / r;
}

/// Shifted Jupiter-centered Hamiltonian G; conserved value g = 1/(2 xi^2).
inline double hamiltonian_jup_cart(const std::array<double, 4>& x, double mu) {
    const double q1 = x[0], q2 = x[1], p1 = x[2], p2 = x[3];
    const double r = std::hypot(q1, q2);
    const double ds = std::hypot(q1 + 1.0, q2);
    if (ds == 0.0) throw CollisionSingularity("hamiltonian_jup_cart: point at the Sun");
    double val = 0.5 * (p1 * p1 + p2 * p2) - (q1 * p2 - q2 * p1) - q1 * (1.0 - mu) -
                 (1.0 - mu) / ds + (1.0 - mu);
    if (mu != 0.0) {
        if (r == 0.0) throw CollisionSingularity("hamiltonian_jup_cart: point at Jupiter");
        val -= mu / r;
    }
    return val;
}

inline double hamiltonian_jup_polar(const std::array<double, 4>& x, double mu) {
    const double r = x[0], th = x[1], R = x[2], Th = x[3];
    if (r <= 0.0) throw CollisionSingularity("hamiltonian_jup_polar: r <= 0");
    const double c = std::cos(th);
    const double ds = std::sqrt(r * r + 2.0 * r * c + 1.0);
    return 0.5 * (R * R + Th * Th / (r * r)) - Th - r * c * (1.0 - mu) - (1.0 - mu) / ds - mu / r +
           (1.0 - mu);
}

/// Levi-Civita Hamiltonian; the h-level of the flow maps to {L = 0}.
/// Exact form: L = xi^2 |z|^2 (G o psi - g), with the Jupiter singularity cancelled.
inline double levi_civita_hamiltonian(const std::array<double, 4>& x, const EnergyContext& ctx) {
    const double z1 = x[0], z2 = x[1], w1 = x[2], w2 = x[3];
    const double zz = z1 * z1 + z2 * z2;
    const double ww = w1 * w1 + w2 * w2;
    const double xi = ctx.xi;
    const double q1 = 2.0 * (z1 * z1 - z2 * z2);
    const double q2 = 4.0 * z1 * z2;
    const double ds = std::sqrt((1.0 + q1) * (1.0 + q1) + q2 * q2);
    if (ds == 0.0) throw CollisionSingularity("levi_civita_hamiltonian: point at the Sun");
    return 0.5 * (ww - zz) - 0.5 * xi * xi * ctx.mu - 2.0 * xi * zz * (z1 * w2 - z2 * w1) +
           xi * xi * zz * (1.0 - ctx.mu) * (1.0 - q1 - 1.0 / ds);
}

/// Sun-centered rotating polar Hamiltonian; numerically equals the CM value h.
inline double hamiltonian_sun_polar(const std::array<double, 4>& x, double mu) {
    const double r = x[0], th = x[1], R = x[2], Th = x[3];
    if (r <= 0.0) throw CollisionSingularity("hamiltonian_sun_polar: r <= 0");
    const double c = std::cos(th), s = std::sin(th);
    double val = 0.5 * (R * R + Th * Th / (r * r)) - 1.0 / r - Th;
    if (mu != 0.0) {
        const double dj = std::sqrt(1.0 + r * r - 2.0 * r * c);
        if (dj == 0.0) throw CollisionSingularity("hamiltonian_sun_polar: point at Jupiter");
        val += mu * (1.0 / r + R * s + (Th / r) * c - 1.0 / dj);
    }
    return val;
}

/// McGehee-regularized level function at the Sun: zero on the h-level.
inline double mcgehee_sun_level(const std::array<double, 4>& x, const EnergyContext& ctx) {
    const double s = x[0], th = x[1], rho = x[3];
    const double s2 = s * s;
    const double dj = std::sqrt(1.0 + s2 * s2 - 2.0 * s2 * std::cos(th));
    return -rho + 2.0 * s2 * ctx.h + s2 * s2 * s2 -
           2.0 * ctx.mu * s2 * (-0.5 * ctx.mu + s2 * std::cos(th) - 1.0 / dj);
}

/// Energy offset H_sun - h in McGehee Sun coordinates. Equal to the level
/// function divided by -2 r, with each O(r) term divided analytically: the
/// level itself scales with r along an off-level orbit, so this is the
/// quantity the flow actually conserves, and it stays well conditioned as
/// s -> 0 where rho -> 0 carries the offset only in its relative precision.
inline double mcgehee_sun_offlevel(const std::array<double, 4>& x, const EnergyContext& ctx) {
    const double s = x[0], th = x[1], rho = x[3];
    const double s2 = s * s;
    if (s2 <= 0.0) throw OutOfDomain("mcgehee_sun_offlevel: needs s != 0");
    double val = rho / (2.0 * s2) - ctx.h - 0.5 * s2 * s2;
    if (ctx.mu != 0.0) {
        const double c = std::cos(th);
        const double dj = std::sqrt(1.0 + s2 * s2 - 2.0 * s2 * c);
        val += ctx.mu * (-0.5 * ctx.mu + s2 * c - 1.0 / dj);
    }
    return val;
}

/// Rotating-frame Hamiltonian in McGehee infinity coordinates; regular at x = 0,
/// where it reduces to R^2/2 - Theta.
inline double hamiltonian_inf_mcgehee(const std::array<double, 4>& xx, double mu) {
    const double x = xx[0], th = xx[1], R = xx[2], Th = xx[3];
    const double x2 = x * x, x4 = x2 * x2;
    const double c = std::cos(th);
    const double da = std::sqrt(1.0 + x2 * mu * c + 0.25 * x4 * mu * mu);
    if (da == 0.0) throw CollisionSingularity("hamiltonian_inf_mcgehee: point at the Sun");
    double val = 0.5 * R * R + 0.125 * Th * Th * x4 - Th - 0.5 * x2 * (1.0 - mu) / da;
    if (mu != 0.0) {
        const double db =
            std::sqrt(1.0 - x2 * (1.0 - mu) * c + 0.25 * x4 * (1.0 - mu) * (1.0 - mu));
        if (db == 0.0)
            throw CollisionSingularity("hamiltonian_inf_mcgehee: point at Jupiter");
        val -= 0.5 * x2 * mu / db;
    }
    return val;
}

// -- conversion helpers -------------------------------------------------------

namespace detail {

inline std::array<double, 4> polar_of_cart(const std::array<double, 4>& c, const char* who) {
    const double q1 = c[0], q2 = c[1], p1 = c[2], p2 = c[3];
    const double r = std::hypot(q1, q2);
    if (r == 0.0) throw OutOfDomain(std::string(who) + ": polar chart undefined at r = 0");
    return {r, std::atan2(q2, q1), (q1 * p1 + q2 * p2) / r, q1 * p2 - q2 * p1};
}

inline std::array<double, 4> cart_of_polar(const std::array<double, 4>& p, const char* who) {
    const double r = p[0], th = p[1], R = p[2], Th = p[3];
    if (r <= 0.0) throw OutOfDomain(std::string(who) + ": r must be positive");
    const double c = std::cos(th), s = std::sin(th);
    return {r * c, r * s, R * c - (Th / r) * s, R * s + (Th / r) * c};
}

inline std::array<double, 4> jup_of_cm(const std::array<double, 4>& x, double mu) {
    return {x[0] - (1.0 - mu), x[1], x[2], x[3] - (1.0 - mu)};
}

inline std::array<double, 4> cm_of_jup(const std::array<double, 4>& x, double mu) {
    return {x[0] + (1.0 - mu), x[1], x[2], x[3] + (1.0 - mu)};
}

inline std::array<double, 4> suncart_of_cm(const std::array<double, 4>& x, double mu) {
    return {x[0] + mu, x[1], x[2], x[3]};
}

inline std::array<double, 4> cm_of_suncart(const std::array<double, 4>& x, double mu) {
    return {x[0] - mu, x[1], x[2], x[3]};
}

// Levi-Civita lift of Jupiter-centered (q, p), branch z2 >= 0 (or its mirror).
inline std::array<double, 4> lc_of_jup(const std::array<double, 4>& qp, const EnergyContext& ctx,
                                       std::optional<LCBranch> branch) {
    const double q1 = qp[0], q2 = qp[1], p1 = qp[2], p2 = qp[3];
    const double r = std::hypot(q1, q2);
    if (r == 0.0)
        throw CollisionSingularity("convert: Levi-Civita lift undefined at q = 0");
    // r + q1 = 4 z1^2 and r - q1 = 4 z2^2; take the larger root first.
    double z1, z2;
    if (q1 >= 0.0) {
        z1 = 0.5 * std::sqrt(r + q1);
        z2 = (z1 > 0.0) ? q2 / (4.0 * z1) : 0.0;
    } else {
        z2 = 0.5 * std::sqrt(r - q1);
        z1 = q2 / (4.0 * z2);
    }
    if (z2 == 0.0 && !branch)
        throw BranchRequired("convert: Levi-Civita lift ambiguous at q2 = 0, q1 > 0");
    const bool flip = branch == LCBranch::MinusZ2 ? (z2 >= 0.0) : (z2 < 0.0);
    if (flip) { z1 = -z1; z2 = -z2; }
    const double xi = ctx.xi;
    return {z1, z2, xi * (p1 * z1 + p2 * z2), xi * (p2 * z1 - p1 * z2)};
}

inline std::array<double, 4> jup_of_lc(const std::array<double, 4>& zw, const EnergyContext& ctx) {
    const double z1 = zw[0], z2 = zw[1], w1 = zw[2], w2 = zw[3];
    const double zz = z1 * z1 + z2 * z2;
    if (zz == 0.0)
        throw CollisionSingularity("convert: momenta blow up at the collision circle");
    const double d = ctx.xi * zz;
    return {2.0 * (z1 * z1 - z2 * z2), 4.0 * z1 * z2, (w1 * z1 - w2 * z2) / d,
            (w1 * z2 + w2 * z1) / d};
}

inline std::array<double, 4> su_of_zw(const std::array<double, 4>& zw) {
    const double inv = 1.0 / std::sqrt(2.0);
    return {(zw[0] - zw[2]) * inv, (zw[1] - zw[3]) * inv, (zw[0] + zw[2]) * inv,
            (zw[1] + zw[3]) * inv};
}

inline std::array<double, 4> zw_of_su(const std::array<double, 4>& su) {
    const double inv = 1.0 / std::sqrt(2.0);
    return {(su[0] + su[2]) * inv, (su[1] + su[3]) * inv, (su[2] - su[0]) * inv,
            (su[3] - su[1]) * inv};
}

inline std::array<double, 4> mcgsun_of_sunpolar(const std::array<double, 4>& x,
                                                const EnergyContext& ctx) {
    const double r = x[0], th = x[1], R = x[2], Th = x[3];
    if (r <= 0.0) throw OutOfDomain("convert: McGeheeSun needs r > 0");
    const double sq = std::sqrt(r);
    const double v = (R + ctx.mu * std::sin(th)) * sq;
    const double u = (Th - r * r + ctx.mu * r * std::cos(th)) / sq;
    const double rho = v * v + u * u - 2.0 * (1.0 - ctx.mu);
    return {sq, th, std::atan2(v, u), rho};
}

inline std::array<double, 4> sunpolar_of_mcgsun(const std::array<double, 4>& x,
                                                const EnergyContext& ctx) {
    const double s = x[0], th = x[1], alpha = x[2], rho = x[3];
    if (s <= 0.0)
        throw OutOfDomain("convert: the collision manifold s = 0 has no polar image");
    const double mag2 = 2.0 * (1.0 - ctx.mu) + rho;
    if (mag2 < 0.0) throw OutOfDomain("convert: rho below -2(1-mu)");
    const double mag = std::sqrt(mag2);
    const double v = mag * std::sin(alpha), u = mag * std::cos(alpha);
    const double r = s * s;
    return {r, th, v / s - ctx.mu * std::sin(th),
            u * s + r * r - ctx.mu * r * std::cos(th)};
}

} // namespace detail

// -- atlas --------------------------------------------------------------------

/// Converts p to the target chart. The default Levi-Civita branch takes
/// z2 >= 0; the lift on the ray q2 = 0, q1 > 0 needs an explicit branch.
inline PhasePoint convert(const PhasePoint& p, Chart target, const EnergyContext& ctx,
                          std::optional<LCBranch> branch = std::nullopt) {
    if (p.chart == target) return p;
    // hops within the double cover are linear and must preserve the sheet
    if (p.chart == Chart::LeviCivita && target == Chart::StraightenedLC)
        return PhasePoint{target, detail::su_of_zw(p.x), p.t};
    if (p.chart == Chart::StraightenedLC && target == Chart::LeviCivita)
        return PhasePoint{target, detail::zw_of_su(p.x), p.t};
    const double mu = ctx.mu;

    // Lift the source to rotating cartesian CM coordinates, staying inside
    // the local family hubs (RotCartJup, RotPolarSun) to preserve precision.
    std::array<double, 4> jup{};   // RotCartJup coordinates, when known
    bool have_jup = false;
    std::array<double, 4> sun{};   // RotPolarSun coordinates, when known
    bool have_sun = false;
    std::array<double, 4> cm{};
    switch (p.chart) {
        case Chart::RotCartCM: cm = p.x; break;
        case Chart::RotPolarCM: cm = detail::cart_of_polar(p.x, "RotPolarCM"); break;
        case Chart::NonRotPolarCM: {
            std::array<double, 4> rot = p.x;
            rot[1] = wrap_angle(rot[1] - p.t);
            cm = detail::cart_of_polar(rot, "NonRotPolarCM");
            break;
        }
        case Chart::McGeheeInf: {
            const double x = p.x[0];
            if (x <= 0.0) throw OutOfDomain("convert: McGeheeInf inverse needs x > 0");
            cm = detail::cart_of_polar({2.0 / (x * x), p.x[1], p.x[2], p.x[3]}, "McGeheeInf");
            break;
        }
        case Chart::RotCartJup:
            jup = p.x;
            have_jup = true;
            break;
        case Chart::RotPolarJup:
            jup = detail::cart_of_polar(p.x, "RotPolarJup");
            have_jup = true;
            break;
        case Chart::LeviCivita:
            jup = detail::jup_of_lc(p.x, ctx);
            have_jup = true;
            break;
        case Chart::StraightenedLC:
            jup = detail::jup_of_lc(detail::zw_of_su(p.x), ctx);
            have_jup = true;
            break;
        case Chart::RotPolarSun:
            sun = p.x;
            have_sun = true;
            break;
        case Chart::McGeheeSun:
            sun = detail::sunpolar_of_mcgsun(p.x, ctx);
            have_sun = true;
            break;
    }

    const bool target_jup = target == Chart::RotCartJup || target == Chart::RotPolarJup ||
                            target == Chart::LeviCivita || target == Chart::StraightenedLC;
    const bool target_sun = target == Chart::RotPolarSun || target == Chart::McGeheeSun;

    if (target_jup && !have_jup)
        jup = detail::jup_of_cm(have_sun ? detail::cm_of_suncart(
                                               detail::cart_of_polar(sun, "RotPolarSun"), mu)
                                         : cm,
                                mu);
    if (target_sun && !have_sun) {
        const std::array<double, 4> base = have_jup ? detail::cm_of_jup(jup, mu) : cm;
        sun = detail::polar_of_cart(detail::suncart_of_cm(base, mu), "RotPolarSun");
    }
    if (!target_jup && !target_sun && (have_jup || have_sun))
        cm = have_jup ? detail::cm_of_jup(jup, mu)
                      : detail::cm_of_suncart(detail::cart_of_polar(sun, "RotPolarSun"), mu);

    PhasePoint out;
    out.chart = target;
    out.t = p.t;
    switch (target) {
        case Chart::RotCartCM: out.x = cm; break;
        case Chart::RotPolarCM: out.x = detail::polar_of_cart(cm, "RotPolarCM"); break;
        case Chart::NonRotPolarCM: {
            out.x = detail::polar_of_cart(cm, "NonRotPolarCM");
            out.x[1] = wrap_angle(out.x[1] + p.t);
            break;
        }
        case Chart::McGeheeInf: {
            auto pol = detail::polar_of_cart(cm, "McGeheeInf");
            out.x = {std::sqrt(2.0 / pol[0]), pol[1], pol[2], pol[3]};
            break;
        }
        case Chart::RotCartJup: out.x = jup; break;
        case Chart::RotPolarJup: out.x = detail::polar_of_cart(jup, "RotPolarJup"); break;
        case Chart::LeviCivita: out.x = detail::lc_of_jup(jup, ctx, branch); break;
        case Chart::StraightenedLC:
            out.x = detail::su_of_zw(detail::lc_of_jup(jup, ctx, branch));
            break;
        case Chart::RotPolarSun: out.x = sun; break;
        case Chart::McGeheeSun: out.x = detail::mcgsun_of_sunpolar(sun, ctx); break;
    }
    return out;
}

/// The chart's natural conserved quantity. On the h-level of the flow the
/// values are: h (RotCartCM, RotPolarCM, RotPolarSun, McGeheeInf),
/// g = 1/(2 xi^2) (RotCartJup, RotPolarJup), 0 (LeviCivita, StraightenedLC,
/// McGeheeSun), and the two-body energy h + Theta for NonRotPolarCM at mu = 0.
inline double energy(const PhasePoint& p, const EnergyContext& ctx) {
    switch (p.chart) {
        case Chart::RotCartCM: return hamiltonian_rot_cart_cm(p.x, ctx.mu);
        case Chart::RotPolarCM: return hamiltonian_rot_polar_cm(p.x, ctx.mu);
        case Chart::NonRotPolarCM: return kepler_energy(p.x);
        case Chart::RotCartJup: return hamiltonian_jup_cart(p.x, ctx.mu);
        case Chart::RotPolarJup: return hamiltonian_jup_polar(p.x, ctx.mu);
        case Chart::LeviCivita: return levi_civita_hamiltonian(p.x, ctx);
        case Chart::StraightenedLC:
            return levi_civita_hamiltonian(detail::zw_of_su(p.x), ctx);
        case Chart::RotPolarSun: return hamiltonian_sun_polar(p.x, ctx.mu);
        case Chart::McGeheeSun: return mcgehee_sun_level(p.x, ctx);
        case Chart::McGeheeInf: return hamiltonian_inf_mcgehee(p.x, ctx.mu);
    }
    throw Error("energy: unknown chart");
}

/// Rotating-frame energy h recovered from any chart (via the CM value).
inline double energy_h(const PhasePoint& p, const EnergyContext& ctx) {
    switch (p.chart) {
        case Chart::RotCartCM:
        case Chart::RotPolarCM:
        case Chart::RotPolarSun:
        case Chart::McGeheeInf:
            return energy(p, ctx);
        case Chart::RotCartJup:
        case Chart::RotPolarJup:
            return energy(p, ctx) - (ctx.g - ctx.h);
        default:
            return hamiltonian_rot_cart_cm(convert(p, Chart::RotCartCM, ctx).x, ctx.mu);
    }
}

/// dt / d(chart time) at p: 4 xi |z|^2 in Levi-Civita charts, r^(3/2) in
/// McGeheeSun, 1 elsewhere.
inline double time_dilation(const PhasePoint& p, const EnergyContext& ctx) {
    switch (p.chart) {
        case Chart::LeviCivita:
            return 4.0 * ctx.xi * (p.x[0] * p.x[0] + p.x[1] * p.x[1]);
        case Chart::StraightenedLC: {
            const auto zw = detail::zw_of_su(p.x);
            return 4.0 * ctx.xi * (zw[0] * zw[0] + zw[1] * zw[1]);
        }
        case Chart::McGeheeSun:
            return p.x[0] * p.x[0] * p.x[0];
        default:
            return 1.0;
    }
}

/// Linear-order straightening of the Levi-Civita saddle, valid near collision.
inline PhasePoint straighten_leading(const PhasePoint& zw, const EnergyContext&) {
    if (zw.chart != Chart::LeviCivita)
        throw InvalidParameter("straighten_leading: expects a LeviCivita point");
    if (std::hypot(zw.x[0], zw.x[1]) >= 0.1 || std::hypot(zw.x[2], zw.x[3]) >= 0.1)
        throw OutsideValidity("straighten_leading: |z|, |w| must be below 0.1");
    return PhasePoint{Chart::StraightenedLC, detail::su_of_zw(zw.x), zw.t};
}

/// Exact inverse of the linear straightening.
inline PhasePoint unstraighten_leading(const PhasePoint& su, const EnergyContext&) {
    if (su.chart != Chart::StraightenedLC)
        throw InvalidParameter("unstraighten_leading: expects a StraightenedLC point");
    return PhasePoint{Chart::LeviCivita, detail::zw_of_su(su.x), su.t};
}

/// Reversibility involution (theta, R) -> (-theta, -R) in every chart, t -> -t.
/// Conjugates the flow to its time reversal.
inline PhasePoint reverse_involution(const PhasePoint& p) {
    PhasePoint out = p;
    out.t = -p.t;
    switch (p.chart) {
        case Chart::RotCartCM:
        case Chart::RotCartJup:
            out.x = {p.x[0], -p.x[1], -p.x[2], p.x[3]};
            break;
        case Chart::RotPolarCM:
        case Chart::NonRotPolarCM:
        case Chart::RotPolarJup:
        case Chart::RotPolarSun:
        case Chart::McGeheeInf:
            out.x = {p.x[0], -p.x[1], -p.x[2], p.x[3]};
            break;
        case Chart::LeviCivita:
            out.x = {p.x[0], -p.x[1], -p.x[2], p.x[3]};
            break;
        case Chart::StraightenedLC:
            out.x = {p.x[2], -p.x[3], p.x[0], -p.x[1]};
            break;
        case Chart::McGeheeSun:
            out.x = {p.x[0], -p.x[1], -p.x[2], p.x[3]};
            break;
    }
    return out;
}

} // namespace nearcol
