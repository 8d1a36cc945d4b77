#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/numutil.hpp"

namespace nearcol {

// -- sections -------------------------------------------------------------

/// Poincare sections: a radius level near Jupiter (r = mu^gamma), near the
/// Sun (rbar = delta^2), or in the outer region (rhat = rhat0).
enum class SectionKind { SigmaGamma, SigmaBarSun, SigmaHatOuter };

/// Sign condition on the radial momentum at the crossing.
enum class RadialSign { Positive, Negative, Both };

struct SectionSpec {
    SectionKind kind = SectionKind::SigmaGamma;
    RadialSign sign = RadialSign::Both;
    double param = 0.3;  // gamma, delta, or rhat0 depending on kind
};

inline void validate(const SectionSpec& s) {
    switch (s.kind) {
        case SectionKind::SigmaGamma:
            if (!(s.param > 3.0 / 11.0 && s.param <= 1.0 / 3.0))
                throw Unsupported("SectionSpec: gamma must lie in (3/11, 1/3]");
            return;
        case SectionKind::SigmaBarSun:
            if (!(s.param > 0.0 && s.param < 0.5))
                throw Unsupported("SectionSpec: delta must lie in (0, 0.5)");
            return;
        case SectionKind::SigmaHatOuter:
            if (!(s.param > 1.0)) throw Unsupported("SectionSpec: rhat0 must exceed 1");
            return;
    }
    throw InvalidParameter("SectionSpec: unknown kind");
}

/// Section radius level for a given mass ratio.
inline double section_radius(const SectionSpec& s, double mu) {
    switch (s.kind) {
        case SectionKind::SigmaGamma: return std::pow(mu, s.param);
        case SectionKind::SigmaBarSun: return s.param * s.param;
        case SectionKind::SigmaHatOuter: return s.param;
    }
    throw InvalidParameter("SectionSpec: unknown kind");
}

// -- trajectories ----------------------------------------------------------

struct SwitchRecord {
    double t = 0.0;  // physical time of the hand-off
    Chart from = Chart::RotPolarCM;
    Chart to = Chart::RotPolarCM;
};

struct Trajectory {
    std::vector<PhasePoint> points;      // time stamps are physical
    std::vector<SwitchRecord> switches;
    double rescale_log = 0.0;            // physical time spent in regularized charts
    double chart_time = 0.0;             // rescaled time accumulated in those charts
    std::size_t steps = 0;               // accepted integrator steps
};

// -- vector fields ----------------------------------------------------------

namespace detail {

// distance helpers in the rotating CM frame
inline double radius_cm(const PhasePoint& p, const EnergyContext& ctx) {
    switch (p.chart) {
        case Chart::RotPolarCM:
        case Chart::NonRotPolarCM: return p.x[0];
        case Chart::McGeheeInf: return 2.0 / (p.x[0] * p.x[0]);
        case Chart::RotCartCM: return std::hypot(p.x[0], p.x[1]);
        default: break;
    }
    const auto cm = convert(p, Chart::RotCartCM, ctx);
    return std::hypot(cm.x[0], cm.x[1]);
}

inline double radius_jup(const PhasePoint& p, const EnergyContext& ctx) {
    switch (p.chart) {
        case Chart::RotPolarJup: return p.x[0];
        case Chart::RotCartJup: return std::hypot(p.x[0], p.x[1]);
        case Chart::LeviCivita: return 2.0 * (p.x[0] * p.x[0] + p.x[1] * p.x[1]);
        case Chart::StraightenedLC: {
            const auto zw = detail::zw_of_su(p.x);
            return 2.0 * (zw[0] * zw[0] + zw[1] * zw[1]);
        }
        case Chart::RotPolarCM:
        case Chart::NonRotPolarCM:
        case Chart::McGeheeInf: {
            const double r = radius_cm(p, ctx);
            const double th = (p.chart == Chart::NonRotPolarCM) ? p.x[1] - p.t : p.x[1];
            const double a = 1.0 - ctx.mu;
            return std::sqrt(std::max(0.0, r * r - 2.0 * r * a * std::cos(th) + a * a));
        }
        default: break;
    }
    const auto jp = convert(p, Chart::RotCartJup, ctx);
    return std::hypot(jp.x[0], jp.x[1]);
}

inline double radius_sun(const PhasePoint& p, const EnergyContext& ctx) {
    switch (p.chart) {
        case Chart::RotPolarSun: return p.x[0];
        case Chart::McGeheeSun: return p.x[0] * p.x[0];
        case Chart::RotPolarCM:
        case Chart::NonRotPolarCM:
        case Chart::McGeheeInf: {
            const double r = radius_cm(p, ctx);
            const double th = (p.chart == Chart::NonRotPolarCM) ? p.x[1] - p.t : p.x[1];
            return std::sqrt(
                std::max(0.0, r * r + 2.0 * r * ctx.mu * std::cos(th) + ctx.mu * ctx.mu));
        }
        default: break;
    }
    const auto sp = convert(p, Chart::RotPolarSun, ctx);
    return sp.x[0];
}

// Field in the chart's own time variable; returns dt/d(chart time).
inline double field(Chart chart, const std::array<double, 4>& x, double t,
                    const EnergyContext& ctx, std::array<double, 4>& out) {
    const double mu = ctx.mu;
    switch (chart) {
        // In every chart a massless Jupiter (mu = 0) exerts no force and its
        // location is not a singularity; the Sun term is always singular.
        case Chart::RotCartCM: {
            const double q1 = x[0], q2 = x[1], p1 = x[2], p2 = x[3];
            const double ds2 = (q1 + mu) * (q1 + mu) + q2 * q2;
            if (ds2 == 0.0) throw SingularPoint("vector_field: Sun collision in RotCartCM");
            const double ds3 = ds2 * std::sqrt(ds2);
            out[0] = p1 + q2;
            out[1] = p2 - q1;
            out[2] = p2 - (1.0 - mu) * (q1 + mu) / ds3;
            out[3] = -p1 - (1.0 - mu) * q2 / ds3;
            if (mu != 0.0) {
                const double dj2 = (q1 - 1.0 + mu) * (q1 - 1.0 + mu) + q2 * q2;
                if (dj2 == 0.0)
                    throw SingularPoint("vector_field: Jupiter collision in RotCartCM");
                const double dj3 = dj2 * std::sqrt(dj2);
                out[2] -= mu * (q1 - 1.0 + mu) / dj3;
                out[3] -= mu * q2 / dj3;
            }
            return 1.0;
        }
        case Chart::RotPolarCM:
        case Chart::NonRotPolarCM: {
            const double r = x[0], R = x[2], Th = x[3];
            if (r <= 0.0) throw SingularPoint("vector_field: r <= 0 in polar chart");
            const double ph = (chart == Chart::NonRotPolarCM) ? x[1] - t : x[1];
            const double c = std::cos(ph), s = std::sin(ph);
            const double ds2 = r * r + 2.0 * r * mu * c + mu * mu;
            const double a = 1.0 - mu;
            if (ds2 == 0.0)
                throw SingularPoint("vector_field: Sun collision in polar CM chart");
            const double ds3 = ds2 * std::sqrt(ds2);
            out[0] = R;
            out[1] = Th / (r * r) - (chart == Chart::RotPolarCM ? 1.0 : 0.0);
            out[2] = Th * Th / (r * r * r) - a * (r + mu * c) / ds3;
            out[3] = 0.0;
            if (mu != 0.0) {
                const double dj2 = r * r - 2.0 * r * a * c + a * a;
                if (dj2 == 0.0)
                    throw SingularPoint("vector_field: Jupiter collision in polar CM chart");
                const double dj3 = dj2 * std::sqrt(dj2);
                out[2] -= mu * (r - a * c) / dj3;
                out[3] = r * mu * a * s * (1.0 / ds3 - 1.0 / dj3);
            }
            return 1.0;
        }
        case Chart::RotCartJup: {
            const double q1 = x[0], q2 = x[1], p1 = x[2], p2 = x[3];
            const double r2 = q1 * q1 + q2 * q2;
            const double ds2 = (q1 + 1.0) * (q1 + 1.0) + q2 * q2;
            if (ds2 == 0.0) throw SingularPoint("vector_field: Sun collision in RotCartJup");
            const double ds3 = ds2 * std::sqrt(ds2);
            out[0] = p1 + q2;
            out[1] = p2 - q1;
            out[2] = p2 + (1.0 - mu) - (1.0 - mu) * (q1 + 1.0) / ds3;
            out[3] = -p1 - (1.0 - mu) * q2 / ds3;
            if (mu != 0.0) {
                if (r2 == 0.0)
                    throw SingularPoint("vector_field: Jupiter collision in RotCartJup");
                const double r3 = r2 * std::sqrt(r2);
                out[2] -= mu * q1 / r3;
                out[3] -= mu * q2 / r3;
            }
            return 1.0;
        }
        case Chart::RotPolarJup: {
            const double r = x[0], th = x[1], R = x[2], Th = x[3];
            if (r <= 0.0) throw SingularPoint("vector_field: r <= 0 in RotPolarJup");
            const double c = std::cos(th), s = std::sin(th);
            const double ds2 = r * r + 2.0 * r * c + 1.0;
            if (ds2 == 0.0) throw SingularPoint("vector_field: Sun collision in RotPolarJup");
            const double ds3 = ds2 * std::sqrt(ds2);
            out[0] = R;
            out[1] = Th / (r * r) - 1.0;
            out[2] = Th * Th / (r * r * r) + (1.0 - mu) * c - (1.0 - mu) * (r + c) / ds3 -
                     mu / (r * r);
            out[3] = -r * (1.0 - mu) * s * (1.0 - 1.0 / ds3);
            return 1.0;
        }
        case Chart::LeviCivita: {
            const double z1 = x[0], z2 = x[1], w1 = x[2], w2 = x[3];
            const double xi = ctx.xi;
            const double zz = z1 * z1 + z2 * z2;
            const double cross = z1 * w2 - z2 * w1;
            const double q1 = 2.0 * (z1 * z1 - z2 * z2);
            const double q2 = 4.0 * z1 * z2;
            const double ds2 = (1.0 + q1) * (1.0 + q1) + q2 * q2;
            if (ds2 == 0.0) throw SingularPoint("vector_field: Sun collision in LeviCivita");
            const double ds = std::sqrt(ds2);
            const double B = 1.0 - q1 - 1.0 / ds;
            const double ds_z1 = ((1.0 + q1) * 4.0 * z1 + q2 * 4.0 * z2) / ds;
            const double ds_z2 = (-(1.0 + q1) * 4.0 * z2 + q2 * 4.0 * z1) / ds;
            const double B_z1 = -4.0 * z1 + ds_z1 / ds2;
            const double B_z2 = 4.0 * z2 + ds_z2 / ds2;
            const double k = xi * xi * (1.0 - mu);
            out[0] = w1 + 2.0 * xi * zz * z2;
            out[1] = w2 - 2.0 * xi * zz * z1;
            out[2] = z1 + 2.0 * xi * (2.0 * z1 * cross + zz * w2) -
                     k * (2.0 * z1 * B + zz * B_z1);
            out[3] = z2 + 2.0 * xi * (2.0 * z2 * cross - zz * w1) -
                     k * (2.0 * z2 * B + zz * B_z2);
            return 4.0 * xi * zz;
        }
        case Chart::StraightenedLC: {
            const auto zw = detail::zw_of_su(x);
            std::array<double, 4> fzw{};
            const double lam = field(Chart::LeviCivita, zw, t, ctx, fzw);
            const double inv = 1.0 / std::sqrt(2.0);
            out[0] = (fzw[0] - fzw[2]) * inv;
            out[1] = (fzw[1] - fzw[3]) * inv;
            out[2] = (fzw[0] + fzw[2]) * inv;
            out[3] = (fzw[1] + fzw[3]) * inv;
            return lam;
        }
        case Chart::RotPolarSun: {
            const double r = x[0], th = x[1], R = x[2], Th = x[3];
            if (r <= 0.0) throw SingularPoint("vector_field: r <= 0 in RotPolarSun");
            const double c = std::cos(th), s = std::sin(th);
            out[0] = R + mu * s;
            out[1] = Th / (r * r) - 1.0 + mu * c / r;
            out[2] = Th * Th / (r * r * r) - 1.0 / (r * r);
            out[3] = 0.0;
            if (mu != 0.0) {
                const double dj2 = 1.0 + r * r - 2.0 * r * c;
                if (dj2 == 0.0)
                    throw SingularPoint("vector_field: Jupiter collision in RotPolarSun");
                const double dj3 = dj2 * std::sqrt(dj2);
                out[2] += mu * (1.0 / (r * r) + Th * c / (r * r) - (r - c) / dj3);
                out[3] = -mu * (R * c - Th * s / r + r * s / dj3);
            }
            return 1.0;
        }
        case Chart::McGeheeSun: {
            const double sv = x[0], th = x[1], al = x[2], rho = x[3];
            const double V2 = std::max(0.0, 2.0 * (1.0 - mu) + rho);
            if (V2 == 0.0) throw SingularPoint("vector_field: degenerate velocity in McGeheeSun");
            const double V = std::sqrt(V2);
            const double v = V * std::sin(al), u = V * std::cos(al);
            const double r = sv * sv, r32 = sv * sv * sv;
            const double c = std::cos(th), s = std::sin(th);
            // v' grouped via v^2 + u^2 = 2(1 - mu) + rho: equal to
            // v^2/2 + u^2 + 2 u r^{3/2} + r^3 - 1 + mu (1 - ...) but free of the
            // O(1) cancellation that would swamp rho' near the collision manifold.
            double vp = 0.5 * rho + 0.5 * u * u + 2.0 * u * r32 + r * r * r;
            double up = -0.5 * u * v - 2.0 * v * r32;
            if (mu != 0.0) {
                const double dj2 = 1.0 + r * r - 2.0 * r * c;
                if (dj2 == 0.0)
                    throw SingularPoint("vector_field: Jupiter collision in McGeheeSun");
                const double dj3 = dj2 * std::sqrt(dj2);
                vp -= mu * r * r * (c + (r - c) / dj3);
                up += mu * r * r * s * (1.0 - 1.0 / dj3);
            }
            out[0] = 0.5 * sv * v;
            out[1] = u;
            out[2] = (vp * u - up * v) / V2;
            out[3] = 2.0 * (v * vp + u * up);
            return r32;
        }
        case Chart::McGeheeInf: {
            const double xv = x[0], th = x[1], R = x[2], Th = x[3];
            const double x2 = xv * xv, x3 = x2 * xv, x4 = x2 * x2;
            const double c = std::cos(th), s = std::sin(th);
            const double a = 1.0 - mu;
            const double da2 = 1.0 + x2 * mu * c + 0.25 * x4 * mu * mu;
            if (da2 <= 0.0)
                throw SingularPoint("vector_field: Sun collision in McGeheeInf");
            const double da3 = da2 * std::sqrt(da2);
            out[0] = -0.25 * R * x3;
            out[1] = 0.25 * Th * x4 - 1.0;
            out[2] = 0.125 * Th * Th * x4 * x2 - a * x4 * (2.0 + x2 * mu * c) / (8.0 * da3);
            out[3] = 0.0;
            if (mu != 0.0) {
                const double db2 = 1.0 - x2 * a * c + 0.25 * x4 * a * a;
                if (db2 <= 0.0)
                    throw SingularPoint("vector_field: Jupiter collision in McGeheeInf");
                const double db3 = db2 * std::sqrt(db2);
                out[2] -= mu * x4 * (2.0 - x2 * a * c) / (8.0 * db3);
                out[3] = 0.25 * x4 * mu * a * s * (1.0 / da3 - 1.0 / db3);
            }
            return 1.0;
        }
    }
    throw InvalidParameter("vector_field: unknown chart");
}

} // namespace detail

/// Time derivative of the chart state in the chart's own time variable
/// (tau near the collisions, physical time elsewhere).
inline std::array<double, 4> vector_field(const PhasePoint& p, const EnergyContext& ctx) {
    std::array<double, 4> out{};
    detail::field(p.chart, p.x, p.t, ctx, out);
    return out;
}

// -- integration ------------------------------------------------------------

enum class TimeDirection { Forward, Backward };

struct ChartPolicy {
    bool auto_switch = true;
    double gamma = 0.3;        // Levi-Civita window  r_jup <= 2 mu^gamma
    double delta = 0.1;        // McGehee Sun window  r_sun <= 2 delta^2
    double r_inf = 20.0;       // McGehee infinity beyond this CM radius
    double hysteresis = 1.25;  // leave a window only past enter-radius * this
};

struct IntegrateOptions {
    Tolerances tol{};
    ChartPolicy policy{};
    double energy_tol = 1e-9;      // native-energy drift guard per chart segment
    double escape_radius = 1e6;    // CM radius treated as escape
    double section_t_max = 1e6;    // physical-time horizon for section searches
    std::size_t record_cap = 1 << 17;
};

struct SectionHit {
    PhasePoint point;      // on the section, within event_tol
    double elapsed = 0.0;  // signed physical time from the start
    Trajectory path;
};

namespace detail {

// Dormand-Prince 5(4) tableau
inline constexpr double dp_c[7] = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
inline constexpr double dp_a[7][6] = {
    {},
    {1.0 / 5.0},
    {3.0 / 40.0, 9.0 / 40.0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0},
    {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0}};
inline constexpr double dp_e[7] = {71.0 / 57600.0,     0.0,
                                   -71.0 / 16695.0,    71.0 / 1920.0,
                                   -17253.0 / 339200.0, 22.0 / 525.0,
                                   -1.0 / 40.0};
inline constexpr double dp_d[7] = {-12715105075.0 / 11282082432.0,
                                   0.0,
                                   87487479700.0 / 32700410799.0,
                                   -10690763975.0 / 1880347072.0,
                                   701980252875.0 / 199316789632.0,
                                   -1453857185.0 / 822651844.0,
                                   69997945.0 / 29380423.0};

using State5 = std::array<double, 5>;  // chart coords + physical time

class Integrator {
  public:
    Integrator(const EnergyContext& ctx, const IntegrateOptions& opts, PhasePoint start,
               double dir)
        : ctx_(ctx), opts_(opts), dir_(dir), chart_(start.chart) {
        validate(opts_.tol);
        y_ = {start.x[0], start.x[1], start.x[2], start.x[3], start.t};
        mu_gamma_ = std::pow(ctx_.mu, opts_.policy.gamma);
        e_ref_ = monitor_energy();
        traj_.points.push_back(current());
        eval_rhs(y_, k_[0]);
        have_k1_ = true;
        h_ = dir_ * initial_step();
    }

    const Trajectory& trajectory() const { return traj_; }
    Trajectory&& take_trajectory() { return std::move(traj_); }

    PhasePoint current() const {
        return PhasePoint{chart_, {y_[0], y_[1], y_[2], y_[3]}, y_[4]};
    }

    /// Advance until the physical time reaches target_t (dir-signed).
    void run_to_time(double target_t) {
        if (dir_ * (target_t - y_[4]) <= 0.0) return;
        while (true) {
            const double lam = k_[0][4];
            if (lam > 0.0) {
                const double h_hit = 1.05 * (target_t - y_[4]) / lam;
                if (std::abs(h_) > std::abs(h_hit)) h_ = h_hit;
            }
            if (step_event([&](const State5& s) { return s[4] - target_t; }, nullptr)) {
                finish_record();
                return;
            }
        }
    }

    /// Advance until a transversal section crossing with the sign condition.
    PhasePoint run_to_section(const SectionSpec& section) {
        const double t0 = y_[4];
        section_ = &section;
        if (std::abs(event_value(y_)) <= opts_.tol.event_tol && sign_ok(current(), section)) {
            finish_record();
            return current();
        }
        while (true) {
            if (std::abs(y_[4] - t0) > opts_.section_t_max)
                throw NoCrossing("integrate_to_section: physical-time horizon exhausted");
            if (step_event([&](const State5& s) { return event_state(s); }, &section)) {
                finish_record();
                return current();
            }
        }
    }

  private:
    const EnergyContext& ctx_;
    IntegrateOptions opts_;
    double dir_;
    Chart chart_;
    State5 y_{};
    double h_ = 0.0;
    double err_prev_ = 1e-4;
    std::array<State5, 7> k_{};
    bool have_k1_ = false;
    Trajectory traj_;
    double e_ref_ = 0.0;
    double mu_gamma_ = 0.0;
    const SectionSpec* section_ = nullptr;
    std::size_t record_stride_ = 1, record_count_ = 0;

    // physical-time derivative bundled with the chart field
    void eval_rhs(const State5& s, State5& out) const {
        std::array<double, 4> x{s[0], s[1], s[2], s[3]};
        std::array<double, 4> f{};
        const double lam = field(chart_, x, s[4], ctx_, f);
        out = {f[0], f[1], f[2], f[3], lam};
    }

    double monitor_energy() const {
        const auto p = current();
        if (p.chart == Chart::NonRotPolarCM && ctx_.mu > 0.0)
            return hamiltonian_rot_polar_cm({p.x[0], p.x[1] - p.t, p.x[2], p.x[3]}, ctx_.mu);
        // The level function itself scales with r along an off-level orbit, so
        // monitor the conserved energy offset instead.
        if (p.chart == Chart::McGeheeSun) return mcgehee_sun_offlevel(p.x, ctx_);
        return energy(p, ctx_);
    }

    double initial_step() const {
        double ymax = 1.0, fmax = 1e-8;
        for (int i = 0; i < 5; ++i) {
            ymax = std::max(ymax, std::abs(y_[i]));
            fmax = std::max(fmax, std::abs(k_[0][i]));
        }
        return std::min(1e-2 * ymax / fmax, 1.0);
    }

    double event_value(const State5& s) const {
        PhasePoint p{chart_, {s[0], s[1], s[2], s[3]}, s[4]};
        return event_point(p);
    }
    double event_state(const State5& s) const { return event_value(s); }

    double event_point(const PhasePoint& p) const {
        const double target = section_radius(*section_, ctx_.mu);
        switch (section_->kind) {
            case SectionKind::SigmaGamma: return radius_jup(p, ctx_) - target;
            case SectionKind::SigmaBarSun: return radius_sun(p, ctx_) - target;
            case SectionKind::SigmaHatOuter: return radius_cm(p, ctx_) - target;
        }
        throw InvalidParameter("SectionSpec: unknown kind");
    }

    bool sign_ok(const PhasePoint& p, const SectionSpec& section) const {
        if (section.sign == RadialSign::Both) return true;
        Chart polar = Chart::RotPolarJup;
        if (section.kind == SectionKind::SigmaBarSun) polar = Chart::RotPolarSun;
        if (section.kind == SectionKind::SigmaHatOuter) polar = Chart::RotPolarCM;
        const double R = convert(p, polar, ctx_).x[2];
        return section.sign == RadialSign::Positive ? R > 0.0 : R < 0.0;
    }

    // One accepted step; returns true when the stop event was crossed and the
    // state was re-anchored onto it.  stop(s) must be monotone for the time
    // target and may be any smooth function for sections.
    template <typename Stop>
    bool step_event(const Stop& stop, const SectionSpec* section) {
        const double g0 = stop(y_);
        State5 y1{};
        double err = 0.0;
        while (true) {
            if (traj_.steps >= opts_.tol.max_steps) {
                if (section) throw NoCrossing("integrate_to_section: step budget exhausted");
                throw StepBudgetExceeded("integrate: step budget exhausted");
            }
            if (std::abs(h_) < 1e-16 * (1.0 + std::abs(y_[4])))
                throw StepBudgetExceeded("integrate: step size underflow");
            if (!have_k1_) {
                eval_rhs(y_, k_[0]);
                have_k1_ = true;
            }
            bool bad = false;
            for (int i = 1; i < 7 && !bad; ++i) {
                State5 yi = y_;
                for (int j = 0; j < i; ++j)
                    for (int c = 0; c < 5; ++c) yi[c] += h_ * dp_a[i][j] * k_[j][c];
                try {
                    eval_rhs(yi, k_[i]);
                } catch (const Error&) {
                    bad = true;
                }
                for (int c = 0; c < 5 && !bad; ++c)
                    if (!std::isfinite(k_[i][c])) bad = true;
            }
            if (!bad) {
                // stage 7 sits at the step end (FSAL); the 5th-order solution
                // uses the first six slopes only
                y1 = y_;
                for (int j = 0; j < 6; ++j)
                    for (int c = 0; c < 5; ++c) y1[c] += h_ * dp_a[6][j] * k_[j][c];
                double esum = 0.0;
                for (int c = 0; c < 5; ++c) {
                    double e = 0.0;
                    for (int j = 0; j < 7; ++j) e += dp_e[j] * k_[j][c];
                    e *= h_;
                    double floor = opts_.tol.abs_tol;
                    // rho scales with r = s^2; a flat absolute budget would
                    // let per-step noise of abs_tol / (2 s^2) into the energy
                    if (chart_ == Chart::McGeheeSun && c == 3)
                        floor *= std::max(2.0 * y_[0] * y_[0], 1e-30);
                    const double sc = floor + opts_.tol.rel_tol *
                                                  std::max(std::abs(y_[c]), std::abs(y1[c]));
                    esum += (e / sc) * (e / sc);
                    if (!std::isfinite(y1[c])) bad = true;
                }
                err = std::sqrt(esum / 5.0);
            }
            if (bad || !(err <= 1.0)) {
                const double fac =
                    bad ? 0.3 : std::max(0.1, 0.9 * std::pow(std::max(err, 1e-10), -0.2));
                h_ *= fac;
                continue;
            }
            break;
        }
        ++traj_.steps;

        // event location on the dense interpolant
        const double g1 = stop(y1);
        const bool crossed = (g0 * g1 < 0.0) || (g1 == 0.0);
        if (crossed) {
            State5 rc1 = y_, rc2{}, rc3{}, rc4{}, rc5{};
            for (int c = 0; c < 5; ++c) {
                const double dy = y1[c] - y_[c];
                const double bspl = h_ * k_[0][c] - dy;
                rc2[c] = dy;
                rc3[c] = bspl;
                rc4[c] = dy - h_ * k_[6][c] - bspl;
                double d = 0.0;
                for (int j = 0; j < 7; ++j) d += dp_d[j] * k_[j][c];
                rc5[c] = h_ * d;
            }
            auto dense = [&](double th) {
                State5 s{};
                const double th1 = 1.0 - th;
                for (int c = 0; c < 5; ++c)
                    s[c] = rc1[c] +
                           th * (rc2[c] + th1 * (rc3[c] + th * (rc4[c] + th1 * rc5[c])));
                return s;
            };
            double lo = 0.0, hi = 1.0, glo = g0;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double gm = stop(dense(mid));
                if (gm == 0.0) { lo = hi = mid; break; }
                if (glo * gm < 0.0) hi = mid;
                else { lo = mid; glo = gm; }
            }
            const double th_star = 0.5 * (lo + hi);
            const State5 yev = dense(th_star);
            bool accept_event = true;
            if (section) {
                PhasePoint pe{chart_, {yev[0], yev[1], yev[2], yev[3]}, yev[4]};
                State5 fe{};
                eval_rhs(yev, fe);
                const double dg =
                    (stop(dense(std::min(1.0, th_star + 1e-6))) -
                     stop(dense(std::max(0.0, th_star - 1e-6)))) /
                    (h_ * (std::min(1.0, th_star + 1e-6) - std::max(0.0, th_star - 1e-6)));
                if (std::abs(dg) <= opts_.tol.event_tol) accept_event = false;  // graze
                else if (!sign_ok(pe, *section)) accept_event = false;
            }
            if (accept_event) {
                track_rescale(y_[4], yev[4], th_star * h_);
                y_ = yev;
                check_energy();
                return true;
            }
        }

        track_rescale(y_[4], y1[4], h_);
        const double lam_old = k_[6][4];  // dt/dtau at step end, before any switch
        y_ = y1;
        k_[0] = k_[6];
        have_k1_ = true;
        check_energy();
        if (radius_cm(current(), ctx_) > opts_.escape_radius)
            throw EscapedDomain("integrate: beyond the escape radius");
        wrap_state_angle();
        record_point();
        maybe_switch(lam_old);

        const double fac = std::min(
            5.0, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-10), -0.17) *
                                   std::pow(err_prev_, 0.04)));
        err_prev_ = std::max(err, 1e-4);
        h_ *= fac;
        return false;
    }

    void track_rescale(double t_before, double t_after, double ds) {
        if (chart_ == Chart::LeviCivita || chart_ == Chart::StraightenedLC ||
            chart_ == Chart::McGeheeSun) {
            traj_.rescale_log += std::abs(t_after - t_before);
            traj_.chart_time += std::abs(ds);
        }
    }

    void check_energy() {
        const double e = monitor_energy();
        if (std::abs(e - e_ref_) > opts_.energy_tol * std::max(1.0, std::abs(e_ref_)))
            throw EnergyDriftExceeded("integrate: conserved quantity drifted beyond tolerance");
        // rho is defined by the energy relation, so within the guard above pin
        // it to the segment's energy offset: absolute stepper noise in this
        // much smaller component would otherwise leak into the energy.
        if (chart_ == Chart::McGeheeSun) y_[3] -= 2.0 * y_[0] * y_[0] * (e - e_ref_);
    }

    void wrap_state_angle() {
        switch (chart_) {
            case Chart::RotPolarCM:
            case Chart::NonRotPolarCM:
            case Chart::RotPolarJup:
            case Chart::RotPolarSun:
            case Chart::McGeheeSun:
            case Chart::McGeheeInf:
                if (std::abs(y_[1]) > 64.0) y_[1] = wrap_angle(y_[1]);
                break;
            default: break;
        }
    }

    void record_point() {
        if (++record_count_ < record_stride_) return;
        record_count_ = 0;
        traj_.points.push_back(current());
        if (traj_.points.size() >= opts_.record_cap) {
            std::size_t keep = 0;
            for (std::size_t i = 0; i < traj_.points.size(); i += 2)
                traj_.points[keep++] = traj_.points[i];
            traj_.points.resize(keep);
            record_stride_ *= 2;
        }
    }

    void finish_record() {
        if (traj_.points.empty() || traj_.points.back().t != y_[4])
            traj_.points.push_back(current());
    }

    Chart desired_chart() const {
        const auto p = current();
        const double f = opts_.policy.hysteresis;
        const double rj = radius_jup(p, ctx_);
        const double rs = radius_sun(p, ctx_);
        const double rc = radius_cm(p, ctx_);
        const double jwin = 2.0 * mu_gamma_;
        const double swin = 2.0 * opts_.policy.delta * opts_.policy.delta;
        if (chart_ == Chart::LeviCivita && rj <= jwin * f) return Chart::LeviCivita;
        if (chart_ == Chart::McGeheeSun && rs <= swin * f) return Chart::McGeheeSun;
        if (chart_ == Chart::McGeheeInf && rc >= opts_.policy.r_inf / f)
            return Chart::McGeheeInf;
        if (ctx_.mu > 0.0 && rj <= jwin) return Chart::LeviCivita;
        if (rs <= swin) return Chart::McGeheeSun;
        if (rc >= opts_.policy.r_inf) return Chart::McGeheeInf;
        return Chart::RotPolarCM;
    }

    void maybe_switch(double lam_old) {
        if (!opts_.policy.auto_switch) return;
        const Chart want = desired_chart();
        if (want == chart_) return;
        const auto here = current();
        const auto there = convert(here, want, ctx_, LCBranch::PlusZ2);
        traj_.switches.push_back({here.t, chart_, want});
        chart_ = there.chart;
        y_ = {there.x[0], there.x[1], there.x[2], there.x[3], there.t};
        e_ref_ = monitor_energy();
        eval_rhs(y_, k_[0]);
        have_k1_ = true;
        const double lam_new = k_[0][4];
        if (lam_new > 0.0 && lam_old > 0.0) h_ *= lam_old / lam_new;
        traj_.points.push_back(current());
    }
};

} // namespace detail

/// Integrates for a signed span of physical time with automatic chart
/// switching across the regularized regimes.
inline Trajectory integrate(const PhasePoint& start, const EnergyContext& ctx, double t_span,
                            const IntegrateOptions& opts = {}) {
    detail::Integrator ig(ctx, opts, start, t_span >= 0.0 ? 1.0 : -1.0);
    if (t_span != 0.0) ig.run_to_time(start.t + t_span);
    return ig.take_trajectory();
}

inline Trajectory integrate(const PhasePoint& start, const EnergyContext& ctx, double t_span,
                            const Tolerances& tol) {
    IntegrateOptions opts;
    opts.tol = tol;
    return integrate(start, ctx, t_span, opts);
}

/// Integrates until the trajectory crosses the section transversally with the
/// requested radial-momentum sign.  A start already on the section returns
/// immediately with zero elapsed time.
inline SectionHit integrate_to_section(const PhasePoint& start, const EnergyContext& ctx,
                                       const SectionSpec& section, TimeDirection dir,
                                       const IntegrateOptions& opts = {}) {
    validate(section);
    detail::Integrator ig(ctx, opts, start,
                          dir == TimeDirection::Forward ? 1.0 : -1.0);
    SectionHit hit;
    hit.point = ig.run_to_section(section);
    hit.elapsed = hit.point.t - start.t;
    hit.path = ig.take_trajectory();
    return hit;
}

} // namespace nearcol
