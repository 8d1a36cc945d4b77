#pragma once

// Sampled manifold curves living on Poincare sections.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/dynamics.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/numutil.hpp"

namespace nearcol {

struct CurveSample {
    double theta = 0.0;
    double R = 0.0;
    double Theta = 0.0;
};

struct CurveMeta {
    std::string label;  // manifold and branch that produced the curve
    EnergyContext ctx{};
};

/// Graph theta -> (R, Theta) sampled on a Poincare section. Samples keep
/// theta unwrapped and strictly increasing; closed curves span one full turn
/// without repeating the seam point.
struct SectionCurve {
    SectionSpec section{};
    std::vector<CurveSample> samples;
    CurveMeta meta;
};

/// Defect of the section's energy equation at one sample, in the chart that
/// defines the section.
inline double section_energy_residual(const SectionSpec& sec, const CurveSample& s,
                                      const EnergyContext& ctx) {
    const double r = section_radius(sec, ctx.mu);
    switch (sec.kind) {
        case SectionKind::SigmaGamma:
            return hamiltonian_jup_polar({r, s.theta, s.R, s.Theta}, ctx.mu) - ctx.g;
        case SectionKind::SigmaBarSun:
            return hamiltonian_sun_polar({r, s.theta, s.R, s.Theta}, ctx.mu) - ctx.h;
        case SectionKind::SigmaHatOuter:
            return hamiltonian_rot_polar_cm({r, s.theta, s.R, s.Theta}, ctx.mu) - ctx.h;
    }
    throw InvalidParameter("section_energy_residual: unknown section kind");
}

inline void validate(const SectionCurve& c, double energy_tol = 1e-10) {
    validate(c.section);
    if (c.samples.size() < 2)
        throw InvalidParameter("SectionCurve: needs at least two samples");
    for (std::size_t i = 1; i < c.samples.size(); ++i)
        if (!(c.samples[i].theta > c.samples[i - 1].theta))
            throw OrderingViolated("SectionCurve: theta samples must strictly increase");
    for (const auto& s : c.samples)
        if (std::abs(section_energy_residual(c.section, s, c.meta.ctx)) > energy_tol)
            throw EnergyDriftExceeded("SectionCurve: sample off the section energy level");
}

/// C1 interpolant of a SectionCurve. Periodic curves are closed over one
/// turn and accept any angle; open curves are restricted to their span.
class CurveFun {
public:
    CurveFun(const SectionCurve& c, bool periodic) : periodic_(periodic) {
        std::vector<double> th, R, Th;
        th.reserve(c.samples.size() + 1);
        R.reserve(th.capacity());
        Th.reserve(th.capacity());
        for (const auto& s : c.samples) {
            th.push_back(s.theta);
            R.push_back(s.R);
            Th.push_back(s.Theta);
        }
        if (th.size() < 2) throw InvalidParameter("CurveFun: needs at least two samples");
        theta0_ = th.front();
        if (periodic_) {
            th.push_back(theta0_ + 2.0 * pi);
            R.push_back(R.front());
            Th.push_back(Th.front());
        }
        theta1_ = th.back();
        R_ = PchipInterpolant(th, R);
        Theta_ = PchipInterpolant(std::move(th), std::move(Th));
    }

    double theta_min() const { return theta0_; }
    double theta_max() const { return theta1_; }

    std::pair<double, double> operator()(double theta) const {
        const double th = reduce(theta);
        return {R_(th), Theta_(th)};
    }

    std::pair<double, double> derivative(double theta) const {
        const double th = reduce(theta);
        return {R_.derivative(th), Theta_.derivative(th)};
    }

private:
    double reduce(double theta) const {
        if (!periodic_) return theta;
        double u = std::fmod(theta - theta0_, 2.0 * pi);
        if (u < 0.0) u += 2.0 * pi;
        return theta0_ + u;
    }

    bool periodic_;
    double theta0_ = 0.0, theta1_ = 0.0;
    PchipInterpolant R_, Theta_;
};

} // namespace nearcol
