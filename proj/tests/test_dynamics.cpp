#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/dynamics.hpp"
#include "nearcol/errors.hpp"
#include "nearcol/kepler.hpp"
#include "nearcol/numutil.hpp"

using namespace nearcol;

namespace {

double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// central-difference canonical field from an energy function H(x):
// pairs (x0, x2) and (x1, x3) are conjugate (position, momentum)
std::array<double, 4> canonical_fd(const std::function<double(std::array<double, 4>)>& H,
                                   const std::array<double, 4>& x, double d = 1e-6) {
    auto pd = [&](int i) {
        auto a = x, b = x;
        a[i] += d;
        b[i] -= d;
        return (H(a) - H(b)) / (2.0 * d);
    };
    return {pd(2), pd(3), -pd(0), -pd(1)};
}

void require_field_matches(const std::array<double, 4>& f, const std::array<double, 4>& fd,
                           double tol) {
    for (int i = 0; i < 4; ++i)
        REQUIRE(std::abs(f[i] - fd[i]) <
                tol * std::max({1.0, std::abs(f[i]), std::abs(fd[i])}));
}

} // namespace

TEST_CASE("canonical fields agree with energy gradients") {
    std::mt19937 rng(101);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double mu = 1e-3;
    const auto ctx = make_context(mu, -1.0);

    for (int i = 0; i < 40; ++i) {
        const std::array<double, 4> cart{0.3 + 0.5 * std::abs(u(rng)), 0.4 * u(rng), u(rng),
                                         u(rng)};
        require_field_matches(
            vector_field({Chart::RotCartCM, cart, 0.0}, ctx),
            canonical_fd([&](std::array<double, 4> x) { return hamiltonian_rot_cart_cm(x, mu); },
                         cart),
            1e-7);
        require_field_matches(
            vector_field({Chart::RotCartJup, cart, 0.0}, ctx),
            canonical_fd([&](std::array<double, 4> x) { return hamiltonian_jup_cart(x, mu); },
                         cart),
            1e-7);

        const std::array<double, 4> pol{0.4 + 0.5 * std::abs(u(rng)), 2.0 * u(rng), u(rng),
                                        u(rng)};
        require_field_matches(
            vector_field({Chart::RotPolarCM, pol, 0.0}, ctx),
            canonical_fd([&](std::array<double, 4> x) { return hamiltonian_rot_polar_cm(x, mu); },
                         pol),
            1e-7);
        require_field_matches(
            vector_field({Chart::RotPolarJup, pol, 0.0}, ctx),
            canonical_fd([&](std::array<double, 4> x) { return hamiltonian_jup_polar(x, mu); },
                         pol),
            1e-7);
        require_field_matches(
            vector_field({Chart::RotPolarSun, pol, 0.0}, ctx),
            canonical_fd([&](std::array<double, 4> x) { return hamiltonian_sun_polar(x, mu); },
                         pol),
            1e-7);

        const std::array<double, 4> zw{0.5 * u(rng), 0.5 * u(rng), u(rng), u(rng)};
        require_field_matches(
            vector_field({Chart::LeviCivita, zw, 0.0}, ctx),
            canonical_fd(
                [&](std::array<double, 4> x) { return levi_civita_hamiltonian(x, ctx); }, zw),
            1e-7);
    }
}

TEST_CASE("sidereal field is the time-dependent two-center gradient") {
    const double mu = 1e-2;
    const auto ctx = make_context(mu, -1.0);
    const double t = 0.83;
    const std::array<double, 4> x{1.3, 2.1, -0.2, 0.7};
    auto Hsid = [&](std::array<double, 4> y) {
        return hamiltonian_rot_polar_cm({y[0], y[1] - t, y[2], y[3]}, mu) + y[3];
    };
    require_field_matches(vector_field({Chart::NonRotPolarCM, x, t}, ctx), canonical_fd(Hsid, x),
                          1e-7);
}

TEST_CASE("regularized fields at their special sets") {
    const double mu = 1e-4;
    const auto ctx0 = make_context(0.0, -1.0);
    const auto f_inf = vector_field({Chart::McGeheeInf, {0.0, 0.7, 0.0, 0.4}, 0.0}, ctx0);
    REQUIRE(f_inf[0] == 0.0);
    REQUIRE(f_inf[1] == -1.0);
    REQUIRE(f_inf[2] == 0.0);
    REQUIRE(f_inf[3] == 0.0);

    const auto ctx = make_context(mu, -1.0);
    for (double th : {0.0, 1.0, -2.0}) {
        for (double al : {0.5 * pi, -0.5 * pi}) {
            const auto f = vector_field({Chart::McGeheeSun, {0.0, th, al, 0.0}, 0.0}, ctx);
            for (int i = 0; i < 4; ++i) REQUIRE(std::abs(f[i]) < 1e-14);
        }
    }

    const double w0 = ctx.xi * std::sqrt(mu);
    const auto f_lc =
        vector_field({Chart::LeviCivita, {0.0, 0.0, w0 * 0.6, w0 * 0.8}, 0.0}, ctx);
    REQUIRE(f_lc[0] == Catch::Approx(w0 * 0.6));
    REQUIRE(f_lc[1] == Catch::Approx(w0 * 0.8));
    REQUIRE(std::abs(f_lc[2]) < 1e-18);
    REQUIRE(std::abs(f_lc[3]) < 1e-18);
}

TEST_CASE("two-body integration reproduces the parabolic closed form") {
    const auto ctx = make_context(0.0, -1.0);
    const auto s1 = parabolic_state(1.0, 0.0, 1.0);
    const PhasePoint start =
        convert({Chart::NonRotPolarCM, {s1.r, s1.theta, s1.R, s1.Theta}, 0.0},
                Chart::RotPolarCM, ctx);
    const auto traj = integrate(start, ctx, 2.0);
    const auto& end = traj.points.back();
    REQUIRE(end.t == Catch::Approx(2.0).margin(1e-12));
    const auto s3 = parabolic_state(3.0, 0.0, 1.0);
    const auto endp = convert(end, Chart::RotPolarCM, ctx);
    REQUIRE(std::abs(endp.x[0] - s3.r) < 1e-9);
    REQUIRE(std::abs(wrap_angle(endp.x[1] - (s3.theta - 2.0))) < 1e-9);
    REQUIRE(std::abs(endp.x[2] - s3.R) < 1e-9);
    REQUIRE(std::abs(endp.x[3] - s3.Theta) < 1e-9);
}

TEST_CASE("frame energy is conserved over long arcs") {
    const double mu = 1e-3;
    for (auto seed : {std::array<double, 4>{0.9, 1.0, 0.4, 0.8},
                      std::array<double, 4>{1.4, -0.5, -0.1, 0.9}}) {
        const double h = hamiltonian_rot_polar_cm(seed, mu);
        const auto ctx = make_context(mu, h);
        const auto traj = integrate({Chart::RotPolarCM, seed, 0.0}, ctx, 50.0);
        const auto end = convert(traj.points.back(), Chart::RotPolarCM, ctx);
        REQUIRE(std::abs(hamiltonian_rot_polar_cm(end.x, mu) - h) < 1e-9);
        REQUIRE(traj.points.back().t == Catch::Approx(50.0).margin(1e-10));
    }
}

TEST_CASE("ejection from the collision circle reaches the Jupiter section") {
    const double mu = 1e-4, gamma = 0.3;
    const auto ctx = make_context(mu, -1.0);
    const double w0 = ctx.xi * std::sqrt(mu);
    const PhasePoint start{Chart::LeviCivita, {0.0, 0.0, w0, 0.0}, 0.0};
    const SectionSpec sec{SectionKind::SigmaGamma, RadialSign::Positive, gamma};

    const auto hit = integrate_to_section(start, ctx, sec, TimeDirection::Forward);
    REQUIRE(hit.elapsed > 0.0);
    const auto pol = convert(hit.point, Chart::RotPolarJup, ctx);
    REQUIRE(std::abs(pol.x[0] - std::pow(mu, gamma)) < 1e-12);
    REQUIRE(pol.x[2] > 0.0);
    REQUIRE(hit.path.rescale_log > 0.0);

    // the incoming collision orbit leaves the same section with R < 0
    const SectionSpec sec_in{SectionKind::SigmaGamma, RadialSign::Negative, gamma};
    const auto hit_b = integrate_to_section(start, ctx, sec_in, TimeDirection::Backward);
    REQUIRE(hit_b.elapsed < 0.0);
    const auto pol_b = convert(hit_b.point, Chart::RotPolarJup, ctx);
    REQUIRE(std::abs(pol_b.x[0] - std::pow(mu, gamma)) < 1e-12);
    REQUIRE(pol_b.x[2] < 0.0);

    // a start already on the section returns with zero elapsed time
    const auto again = integrate_to_section(hit.point, ctx, sec, TimeDirection::Forward);
    REQUIRE(again.elapsed == 0.0);
}

TEST_CASE("near-collision ejection obeys the two-thirds law in physical time") {
    // r_jup^3 / t^2 -> (9/2) mu for ejection at parabolic speed, which pins
    // the physical-time factor of the regularized flow.
    const double mu = 1e-4;
    const auto ctx = make_context(mu, -1.0);
    const double w0 = ctx.xi * std::sqrt(mu);
    const PhasePoint start{Chart::LeviCivita, {0.0, 0.0, w0 * std::cos(0.4), w0 * std::sin(0.4)},
                           0.0};
    for (double dt : {1e-9, -1e-9, 4e-9}) {
        IntegrateOptions opts;
        opts.policy.auto_switch = false;
        const auto traj = integrate(start, ctx, dt, opts);
        const auto& e = traj.points.back();
        const double rj = 2.0 * (e.x[0] * e.x[0] + e.x[1] * e.x[1]);
        REQUIRE(rj > 0.0);
        REQUIRE(rj * rj * rj / (dt * dt) == Catch::Approx(4.5 * mu).epsilon(1e-2));
    }
}

TEST_CASE("parabolic infall crosses the outer section at the graph value") {
    const auto ctx = make_context(0.0, -1.0);
    const double r0 = 50.0;
    auto [R0, Th0] = kepler_infinity_graph(r0, 1.0, ManifoldBranch::Stable);
    const PhasePoint start{Chart::RotPolarCM, {r0, 0.3, -R0, Th0}, 0.0};
    const SectionSpec sec{SectionKind::SigmaHatOuter, RadialSign::Negative, 2.0};
    const auto hit = integrate_to_section(start, ctx, sec, TimeDirection::Forward);
    const auto pol = convert(hit.point, Chart::RotPolarCM, ctx);
    REQUIRE(std::abs(pol.x[0] - 2.0) < 1e-11);
    REQUIRE(pol.x[2] == Catch::Approx(-0.5 * std::sqrt(3.0)).margin(1e-9));
    REQUIRE(pol.x[3] == Catch::Approx(1.0).margin(1e-11));
    REQUIRE(hit.elapsed > 0.0);
    REQUIRE(!hit.path.switches.empty());  // rides the infinity chart inward
}

TEST_CASE("trajectories are reversible under the frame symmetry") {
    const double mu = 1e-3;
    const std::array<double, 4> seed{0.8, 0.2, 0.1, 0.9};
    const double h = hamiltonian_jup_polar(seed, mu);
    const auto ctx = make_context(mu, h - (0.5 / 1.0));  // any valid frame energy
    IntegrateOptions opts;
    opts.policy.auto_switch = false;
    const PhasePoint p{Chart::RotPolarJup, seed, 0.0};
    const auto fwd = integrate(p, ctx, 3.0, opts);
    const auto q = reverse_involution(fwd.points.back());
    const auto back = integrate(q, ctx, 3.0, opts);
    const auto r = back.points.back();
    const auto target = reverse_involution(p);
    for (int i = 0; i < 4; ++i) REQUIRE(std::abs(r.x[i] - target.x[i]) < 1e-8);
}

TEST_CASE("regularized charts integrate consistently with their polar charts") {
    const double mu = 1e-4;
    const auto ctx = make_context(mu, -1.0);
    IntegrateOptions opts;
    opts.policy.auto_switch = false;

    // Levi-Civita vs Jupiter polar on the energy level
    const double q1 = 0.05;
    const double p2 = find_root_bracketed(
        [&](double b) {
            return hamiltonian_jup_cart({q1, 0.0, 0.0, b}, mu) - ctx.g;
        },
        0.0, 3.0);
    const PhasePoint jc{Chart::RotCartJup, {q1, 0.0, 0.0, p2}, 0.0};
    const auto lc = convert(jc, Chart::LeviCivita, ctx, LCBranch::PlusZ2);
    const auto t_jup = integrate(convert(jc, Chart::RotPolarJup, ctx), ctx, 0.2, opts);
    const auto t_lc = integrate(lc, ctx, 0.2, opts);
    const auto e1 = convert(t_jup.points.back(), Chart::RotCartJup, ctx);
    const auto e2 = convert(t_lc.points.back(), Chart::RotCartJup, ctx);
    REQUIRE(std::abs(t_lc.points.back().t - 0.2) < 1e-12);
    for (int i = 0; i < 4; ++i) REQUIRE(std::abs(e1.x[i] - e2.x[i]) < 1e-8);

    // McGehee Sun vs Sun polar, seeded on the context energy level where the
    // McGehee conserved quantity is meaningful
    const double rbar = 0.015;
    const double Rbar = find_root_bracketed(
        [&](double R) {
            return hamiltonian_sun_polar({rbar, 0.6, R, 0.12}, mu) - ctx.h;
        },
        0.0, 20.0);
    const PhasePoint sp{Chart::RotPolarSun, {rbar, 0.6, Rbar, 0.12}, 0.0};
    const auto t_sun = integrate(sp, ctx, 0.004, opts);
    const auto t_mg = integrate(convert(sp, Chart::McGeheeSun, ctx), ctx, 0.004, opts);
    const auto s1 = convert(t_sun.points.back(), Chart::RotPolarSun, ctx);
    const auto s2 = convert(t_mg.points.back(), Chart::RotPolarSun, ctx);
    for (int i : {0, 2, 3}) REQUIRE(std::abs(s1.x[i] - s2.x[i]) < 1e-8);
    REQUIRE(std::abs(wrap_angle(s1.x[1] - s2.x[1])) < 1e-8);

    // McGehee infinity vs CM polar (both in physical time)
    const PhasePoint far{Chart::RotPolarCM, {25.0, 0.1, 0.05, 1.2}, 0.0};
    const auto t_cm = integrate(far, ctx, 5.0, opts);
    const auto t_in = integrate(convert(far, Chart::McGeheeInf, ctx), ctx, 5.0, opts);
    const auto i1 = convert(t_cm.points.back(), Chart::RotPolarCM, ctx);
    const auto i2 = convert(t_in.points.back(), Chart::RotPolarCM, ctx);
    for (int i : {0, 2, 3}) REQUIRE(std::abs(i1.x[i] - i2.x[i]) < 1e-8);
    REQUIRE(std::abs(wrap_angle(i1.x[1] - i2.x[1])) < 1e-8);
}

TEST_CASE("escape and no-crossing outcomes") {
    const auto ctx = make_context(0.0, 1.0);
    // outbound hyperbolic motion beyond a tight escape radius
    IntegrateOptions opts;
    opts.escape_radius = 5.0;
    const PhasePoint out{Chart::RotPolarCM, {2.0, 0.0, 1.5, 1.0}, 0.0};
    REQUIRE_THROWS_AS(integrate(out, ctx, 50.0, opts), EscapedDomain);

    // a far orbit never reaches the Jupiter section within the horizon
    IntegrateOptions opts2;
    opts2.section_t_max = 1.0;
    const auto ctx2 = make_context(1e-3, -1.0);
    const SectionSpec sec{SectionKind::SigmaGamma, RadialSign::Both, 0.3};
    const PhasePoint far{Chart::RotPolarCM, {3.0, 0.0, 0.0, 1.9}, 0.0};
    REQUIRE_THROWS_AS(integrate_to_section(far, ctx2, sec, TimeDirection::Forward, opts2),
                      NoCrossing);
}

TEST_CASE("section parameter windows are enforced") {
    REQUIRE_THROWS_AS(validate(SectionSpec{SectionKind::SigmaGamma, RadialSign::Both, 0.25}),
                      Unsupported);
    REQUIRE_THROWS_AS(validate(SectionSpec{SectionKind::SigmaGamma, RadialSign::Both, 0.4}),
                      Unsupported);
    REQUIRE_NOTHROW(validate(SectionSpec{SectionKind::SigmaGamma, RadialSign::Both, 1.0 / 3.0}));
    REQUIRE_THROWS_AS(validate(SectionSpec{SectionKind::SigmaHatOuter, RadialSign::Both, 0.5}),
                      Unsupported);
}
