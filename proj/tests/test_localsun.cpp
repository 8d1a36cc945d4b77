#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "nearcol/localsun.hpp"

using namespace nearcol;

namespace {

// independent 1e6-point midpoint quadrature of the first-order integral;
// the radial piece is evaluated after s = sigma^3, which removes the
// s^{-1/3} endpoint singularity, so midpoint converges at full order
double brute_I(double theta_bar, double delta) {
    const double lam = lambda_parabolic;
    const double a = (std::sqrt(2.0) / 3.0) * delta * delta * delta;
    const double alpha = theta_bar + a;
    const std::size_t n = 1'000'000;
    double first = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = a * (double(i) + 0.5) / double(n);
        const double r = lam * std::cbrt(s * s);
        const double c = std::cos(alpha - s);
        const double d2 = 1.0 + r * r - 2.0 * r * c;
        first += r * std::sin(alpha - s) / (d2 * std::sqrt(d2));
    }
    first *= a / double(n);
    const double b = std::cbrt(a);
    double second = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sig = b * (double(i) + 0.5) / double(n);
        second += 3.0 * sig * std::cos(alpha - sig * sig * sig);
    }
    second *= std::sqrt(2.0 / lam) * b / double(n);
    return -(first + second);
}

double fitted_slope(const SectionCurve& c) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(c.samples.size());
    for (const auto& s : c.samples) {
        sx += s.theta;
        sy += s.Theta;
        sxx += s.theta * s.theta;
        sxy += s.theta * s.Theta;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace

TEST_CASE("departure and landing angles of the limit infall orbit") {
    REQUIRE(sun_theta_star() ==
            Catch::Approx(std::asin(1.0 / std::sqrt(3.0)) + pi).margin(1e-15));
    REQUIRE(sun_theta_bar0(0.1) ==
            Catch::Approx(-(std::sqrt(2.0) / 3.0) * 0.999).margin(1e-15));
    REQUIRE(sun_theta_bar0(0.1) == Catch::Approx(-0.47094).margin(1e-5));
}

TEST_CASE("first-order integral: values, reduction, periodicity, oracle") {
    const double delta = 0.1;
    const double a = (std::sqrt(2.0) / 3.0) * delta * delta * delta;

    // frozen values (adaptive quadrature, deterministic)
    REQUIRE(sun_I_integral(0.0, delta) == Catch::Approx(-1.000000000869e-2).margin(1e-11));
    REQUIRE(sun_I_integral(0.3, delta) == Catch::Approx(-9.553382260966e-3).margin(1e-11));
    REQUIRE(sun_I_integral(1.0, delta) == Catch::Approx(-5.403050700628e-3).margin(1e-11));
    REQUIRE(sun_I_integral(-2.0, delta) == Catch::Approx(4.161445409816e-3).margin(1e-11));

    // at theta_bar = -a the phase vanishes and the radial integrand reduces
    // to sqrt(2/lam) cos(s) / s^{1/3}; evaluate that reduction directly
    {
        const double lam = lambda_parabolic;
        const std::size_t n = 200'000;
        const double b = std::cbrt(a);
        double radial = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sig = b * (double(i) + 0.5) / double(n);
            radial += 3.0 * sig * std::cos(sig * sig * sig);
        }
        radial *= std::sqrt(2.0 / lam) * b / double(n);
        REQUIRE(std::isfinite(radial));
        double torque = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = a * (double(i) + 0.5) / double(n);
            const double r = lam * std::cbrt(s * s);
            const double d2 = 1.0 + r * r - 2.0 * r * std::cos(s);
            torque += -r * std::sin(s) / (d2 * std::sqrt(d2));
        }
        torque *= a / double(n);
        REQUIRE(sun_I_integral(-a, delta) ==
                Catch::Approx(-(torque + radial)).margin(1e-10));
    }

    // 2 pi periodicity in the angle
    REQUIRE(std::abs(sun_I_integral(0.3, delta) - sun_I_integral(0.3 + 2.0 * pi, delta)) <
            1e-10);  // observed 9.5e-18

    // brute-force midpoint oracle
    REQUIRE(std::abs(sun_I_integral(0.0, delta) - brute_I(0.0, delta)) <
            1e-8);  // observed 8.2e-15

    REQUIRE_THROWS_AS(sun_I_integral(0.0, 0.0), InvalidParameter);
    REQUIRE_THROWS_AS(sun_I_integral(0.0, 1.0), InvalidParameter);
}

TEST_CASE("numeric manifold curve follows the first-order law") {
    const double delta = 0.1;
    for (double mu : {1e-4, 1e-5}) {
        const auto ctx = make_context(mu, -mu);
        const auto c = sun_manifold_curve(ctx, delta, SunBranch::Unstable, 64);
        REQUIRE(c.samples.size() == 64);
        double dmax = 0.0, rmax = 0.0;
        for (const auto& s : c.samples) {
            REQUIRE(s.R > 0.0);
            dmax = std::max(dmax, std::abs(s.Theta - mu * sun_I_integral(s.theta, delta)));
            rmax = std::max(rmax, std::abs(section_energy_residual(c.section, s, ctx)));
        }
        // remainder is O(mu^2) with a tiny constant at this delta; the
        // measured discrepancy sits at the integrator floor (~2e-14)
        REQUIRE(dmax < 1e-12);
        REQUIRE(dmax / (mu * mu) < 1e-2);
        REQUIRE(rmax < 1e-11);  // observed 5.1e-14
    }
}

TEST_CASE("stable branch is the mirror of the unstable branch") {
    const auto ctx = make_context(1e-5, -1e-5);
    const double delta = 0.1;
    const auto cu = sun_manifold_curve(ctx, delta, SunBranch::Unstable, 64);
    const auto cs = sun_manifold_curve(ctx, delta, SunBranch::Stable, 64);
    const CurveFun fu(cu, true);
    double dsym = 0.0;
    for (const auto& s : cs.samples) {
        const auto [R, Th] = fu(-s.theta);
        dsym = std::max(dsym, std::abs(s.R + R));
        dsym = std::max(dsym, std::abs(s.Theta - Th));
    }
    REQUIRE(dsym < 1e-8);  // observed 1.1e-9

    // the first-order construction obeys the same reflection
    const auto fo = sun_manifold_curve(ctx, delta, SunBranch::Stable, 64,
                                       CurveMethod::FirstOrder);
    for (const auto& s : fo.samples) REQUIRE(s.R < 0.0);
}

TEST_CASE("first-order and numeric methods agree") {
    const auto ctx = make_context(1e-5, -1e-5);
    const auto nu = sun_manifold_curve(ctx, 0.1, SunBranch::Unstable, 64);
    const CurveFun fo(
        sun_manifold_curve(ctx, 0.1, SunBranch::Unstable, 256, CurveMethod::FirstOrder), true);
    double d = 0.0;
    for (const auto& s : nu.samples) {
        const auto [R, Th] = fo(s.theta);
        d = std::max(d, std::max(std::abs(s.R - R), std::abs(s.Theta - Th)));
    }
    REQUIRE(d < 1e-9);  // observed 1.2e-12
}

TEST_CASE("the curve collapses onto the collision ray as mu vanishes") {
    const auto ctx = make_context(0.0, 0.0);
    const auto c = sun_manifold_curve(ctx, 0.1, SunBranch::Unstable, 16);
    for (const auto& s : c.samples) REQUIRE(std::abs(s.Theta) < 1e-12);  // observed 4.3e-15
}

TEST_CASE("numeric minus first-order remainder scales as mu squared") {
    // at delta = 0.1 the remainder constant is below the integration floor,
    // so the scaling is measured at delta = 0.3 where it clears it
    const double delta = 0.3;
    std::vector<double> lmu, ld;
    for (double mu : {1e-2, 3e-3, 1e-3}) {
        const auto ctx = make_context(mu, -mu);
        const auto c = sun_manifold_curve(ctx, delta, SunBranch::Unstable, 33);
        double dmax = 0.0;
        for (const auto& s : c.samples)
            dmax = std::max(dmax, std::abs(s.Theta - mu * sun_I_integral(s.theta, delta)));
        REQUIRE(dmax / (mu * mu) < 5e-4);  // observed 3.6e-5
        lmu.push_back(std::log(mu));
        ld.push_back(std::log(dmax));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lmu.size(); ++i) {
        sx += lmu[i];
        sy += ld[i];
        sxx += lmu[i] * lmu[i];
        sxy += lmu[i] * ld[i];
    }
    const double n = double(lmu.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    REQUIRE(slope > 1.7);  // observed 2.00
    REQUIRE(slope < 2.3);
}

TEST_CASE("equilibria and regularity on the collision manifold") {
    const auto ctx = make_context(1e-4, -1e-4);
    for (double tb : {0.0, 0.7, -2.1}) {
        for (double al : {0.5 * pi, -0.5 * pi}) {
            const PhasePoint p{Chart::McGeheeSun, {0.0, tb, al, 0.0}, 0.0};
            const auto f = vector_field(p, ctx);
            for (double v : f) REQUIRE(std::isfinite(v));
            REQUIRE(std::abs(f[0]) < 1e-15);  // s stays on the manifold
            REQUIRE(std::abs(f[1]) < 1e-15);  // u = V cos(alpha) = 0 there
            REQUIRE(std::abs(f[2]) < 1e-15);  // alpha is stationary
        }
        // generic alpha: still finite at s = 0
        const PhasePoint q{Chart::McGeheeSun, {0.0, tb, 1.1, 0.0}, 0.0};
        for (double v : vector_field(q, ctx)) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("energy level is pinned along regularized trajectories") {
    const auto ctx = make_context(1e-4, -1e-4);
    const double delta = 0.1, tb = 0.3;
    const auto dir = nearcol::detail::sun_unstable_direction(tb, ctx);
    const double s0 = 1e-8 * dir[0], al0 = 0.5 * pi + 1e-8 * dir[1];
    const PhasePoint seed{Chart::McGeheeSun,
                          {s0, tb, al0, nearcol::detail::sun_rho_on_level(s0, tb, al0, ctx)},
                          0.0};
    const SectionSpec sec{SectionKind::SigmaBarSun, RadialSign::Positive, delta};
    const auto hit = integrate_to_section(seed, ctx, sec, TimeDirection::Forward);
    double mmax = 0.0;
    for (const auto& p : hit.path.points)
        if (p.chart == Chart::McGeheeSun)
            mmax = std::max(mmax, std::abs(mcgehee_sun_level(p.x, ctx)));
    REQUIRE(mmax < 1e-9);  // observed 2e-15
    const auto pol = convert(hit.point, Chart::RotPolarSun, ctx);
    REQUIRE(std::abs(hamiltonian_sun_polar(pol.x, ctx.mu) - ctx.h) < 1e-10);
}

TEST_CASE("limit seed orbit reaches the section at the limit time") {
    const auto ctx = make_context(0.0, 0.0);
    const double delta = 0.1;
    const PhasePoint p{Chart::RotPolarSun, {1.0, 0.0, -std::sqrt(2.0), 0.0}, 0.0};
    const SectionSpec sec{SectionKind::SigmaBarSun, RadialSign::Negative, delta};
    const auto hit = integrate_to_section(p, ctx, sec, TimeDirection::Forward);
    const double t0s = (std::sqrt(2.0) / 3.0) * (1.0 - delta * delta * delta);
    REQUIRE(t0s == Catch::Approx(0.47094).margin(1e-5));
    REQUIRE(hit.elapsed == Catch::Approx(t0s).margin(1e-9));  // observed diff 7e-14
    const auto sp = convert(hit.point, Chart::RotPolarSun, ctx);
    REQUIRE(sp.x[1] == Catch::Approx(sun_theta_bar0(delta)).margin(1e-9));
}

TEST_CASE("ejection curve extended to the sun section lands in the window") {
    const double delta = 0.1, gamma = 0.3;
    const double w = delta * delta * delta * delta;
    const double tb0 = sun_theta_bar0(delta);
    for (double mu : {1e-6, 1e-5}) {
        const auto ctx = make_context(mu, -mu);
        const auto ej = jupiter_curve_at_sun_section(ctx, delta, gamma,
                                                     JupiterBranch::Ejection, 16);
        REQUIRE(ej.samples.size() == 16);
        double rmax = 0.0;
        for (const auto& s : ej.samples) {
            REQUIRE(std::abs(s.theta - tb0) < w);
            REQUIRE(s.R < 0.0);
            rmax = std::max(rmax, std::abs(section_energy_residual(ej.section, s, ctx)));
        }
        REQUIRE(rmax < 5e-11);  // observed 1.0e-11

        const double slope = fitted_slope(ej);
        const double target = delta / std::sqrt(2.0);
        REQUIRE(std::abs(slope - target) < 0.2 * target);  // observed 0.0777 vs 0.0707

        // collision branch is the time-reversal mirror
        const auto co = jupiter_curve_at_sun_section(ctx, delta, gamma,
                                                     JupiterBranch::Collision, 16);
        const CurveFun fe(ej, false);
        double dsym = 0.0;
        for (const auto& s : co.samples) {
            REQUIRE(std::abs(-s.theta - tb0) < w);
            REQUIRE(s.R > 0.0);
            if (-s.theta < ej.samples.front().theta || -s.theta > ej.samples.back().theta)
                continue;
            const auto [R, Th] = fe(-s.theta);
            dsym = std::max(dsym, std::max(std::abs(s.R + R), std::abs(s.Theta - Th)));
        }
        REQUIRE(dsym < 1e-10);  // observed 5.3e-15
    }
}

TEST_CASE("localsun input validation") {
    const auto ctx = make_context(1e-5, -1e-5);
    REQUIRE_THROWS_AS(sun_manifold_curve(ctx, 0.1, SunBranch::Unstable, 7), InvalidParameter);
    REQUIRE_THROWS_AS(
        jupiter_curve_at_sun_section(ctx, 0.1, 0.3, JupiterBranch::Ejection, 3),
        InvalidParameter);
    const auto off = make_context(1e-5, -0.2);
    REQUIRE_THROWS_AS(sun_manifold_curve(off, 0.1, SunBranch::Unstable, 16), InvalidParameter);
    REQUIRE_THROWS_AS(
        jupiter_curve_at_sun_section(off, 0.1, 0.3, JupiterBranch::Ejection, 16),
        InvalidParameter);
}
