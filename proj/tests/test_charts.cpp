#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <random>

#include "nearcol/charts.hpp"
#include "nearcol/core.hpp"
#include "nearcol/errors.hpp"

using namespace nearcol;

namespace {

double rel_diff(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1.0});
    return std::abs(a - b) / scale;
}

double max_rel_diff(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    double m = 0.0;
    for (int i = 0; i < 4; ++i) m = std::max(m, rel_diff(a[i], b[i]));
    return m;
}

} // namespace

TEST_CASE("Levi-Civita value is the scaled shifted energy defect") {
    // L(z, w) = xi^2 |z|^2 (G(psi(z, w)) - g) identically, so the h-level of
    // the Jupiter flow is exactly the zero level of the regularized flow.
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double mu : {0.0, 1e-3, 1e-5}) {
        const auto ctx = make_context(mu, -1.0);
        for (int i = 0; i < 200; ++i) {
            const std::array<double, 4> zw{0.6 * u(rng), 0.6 * u(rng), 1.5 * u(rng),
                                           1.5 * u(rng)};
            if (zw[0] * zw[0] + zw[1] * zw[1] < 1e-4) continue;
            const PhasePoint lc{Chart::LeviCivita, zw, 0.0};
            const auto jup = convert(lc, Chart::RotCartJup, ctx);
            const double G = hamiltonian_jup_cart(jup.x, mu);
            const double zz = zw[0] * zw[0] + zw[1] * zw[1];
            const double expected = ctx.xi * ctx.xi * zz * (G - ctx.g);
            const double L = levi_civita_hamiltonian(zw, ctx);
            REQUIRE(std::abs(L - expected) < 1e-12 * std::max(1.0, std::abs(G) * zz));
        }
    }
}

TEST_CASE("collision circle lies on the zero level") {
    for (double mu : {1e-3, 1e-5}) {
        const auto ctx = make_context(mu, -1.0);
        const double w0 = ctx.xi * std::sqrt(mu);
        for (double a : {0.0, 0.9, 2.4, -1.1}) {
            const std::array<double, 4> zw{0.0, 0.0, w0 * std::cos(a), w0 * std::sin(a)};
            REQUIRE(std::abs(levi_civita_hamiltonian(zw, ctx)) < 1e-17);
        }
    }
}

TEST_CASE("shifted Jupiter energy differs from the frame energy by g - h") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double mu : {0.0, 1e-2, 1e-4}) {
        const auto ctx = make_context(mu, -0.7);
        for (int i = 0; i < 100; ++i) {
            const std::array<double, 4> cm{u(rng), u(rng), u(rng), u(rng)};
            if (std::hypot(cm[0] + mu, cm[1]) < 0.05) continue;
            if (std::hypot(cm[0] - (1.0 - mu), cm[1]) < 0.05) continue;
            const PhasePoint p{Chart::RotCartCM, cm, 0.0};
            const double H = hamiltonian_rot_cart_cm(cm, mu);
            const double G = energy(convert(p, Chart::RotCartJup, ctx), ctx);
            REQUIRE(rel_diff(G - H, ctx.g - ctx.h) < 1e-13);
        }
    }
}

TEST_CASE("Sun-centered and infinity forms reproduce the frame energy") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double mu : {0.0, 1e-2, 1e-4}) {
        const auto ctx = make_context(mu, -0.7);
        for (int i = 0; i < 100; ++i) {
            const std::array<double, 4> cm{1.8 * u(rng), 1.8 * u(rng), u(rng), u(rng)};
            if (std::hypot(cm[0] + mu, cm[1]) < 0.05) continue;
            if (std::hypot(cm[0] - (1.0 - mu), cm[1]) < 0.05) continue;
            const PhasePoint p{Chart::RotCartCM, cm, 0.0};
            const double H = hamiltonian_rot_cart_cm(cm, mu);
            REQUIRE(rel_diff(energy(convert(p, Chart::RotPolarSun, ctx), ctx), H) < 1e-12);
            REQUIRE(rel_diff(energy(convert(p, Chart::McGeheeInf, ctx), ctx), H) < 1e-12);
            REQUIRE(rel_diff(energy_h(convert(p, Chart::RotPolarJup, ctx), ctx), H) < 1e-11);
            REQUIRE(rel_diff(energy_h(convert(p, Chart::McGeheeSun, ctx), ctx), H) < 1e-11);
        }
    }
}

TEST_CASE("McGehee Sun level function vanishes exactly on the energy level") {
    // M = -2 rbar (Hbar - h) identically in the regularized variables.
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double mu : {1e-3, 1e-5}) {
        const auto ctx = make_context(mu, -1.0);
        for (int i = 0; i < 200; ++i) {
            const std::array<double, 4> pol{0.02 + 0.6 * std::abs(u(rng)), pi * u(rng),
                                            1.5 * u(rng), 1.5 * u(rng)};
            const PhasePoint sp{Chart::RotPolarSun, pol, 0.0};
            const double Hbar = hamiltonian_sun_polar(pol, mu);
            const double M = energy(convert(sp, Chart::McGeheeSun, ctx), ctx);
            const double expected = -2.0 * pol[0] * (Hbar - ctx.h);
            REQUIRE(std::abs(M - expected) < 1e-12 * std::max(1.0, std::abs(Hbar)));
        }
    }
}

TEST_CASE("infinity chart energy is regular at x = 0") {
    const double mu = 1e-3;
    // at x = 0 the form reduces to R^2/2 - Theta
    REQUIRE(hamiltonian_inf_mcgehee({0.0, 0.3, 0.2, 1.1}, mu) ==
            Catch::Approx(0.5 * 0.04 - 1.1).epsilon(1e-15));
    for (double x : {0.5, 0.1, 0.01}) {
        const std::array<double, 4> xx{x, 0.4, -0.3, 0.9};
        const std::array<double, 4> pol{2.0 / (x * x), 0.4, -0.3, 0.9};
        REQUIRE(rel_diff(hamiltonian_inf_mcgehee(xx, mu), hamiltonian_rot_polar_cm(pol, mu)) <
                1e-13);
    }
}

TEST_CASE("atlas round trips stay below 1e-10 relative error") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto ctx = make_context(1e-3, -1.0);
    const Chart charts[] = {Chart::RotPolarCM,  Chart::NonRotPolarCM, Chart::RotCartJup,
                            Chart::RotPolarJup, Chart::LeviCivita,    Chart::StraightenedLC,
                            Chart::RotPolarSun, Chart::McGeheeSun,    Chart::McGeheeInf};
    int tested = 0;
    for (int i = 0; i < 300; ++i) {
        const std::array<double, 4> cm{1.5 * u(rng), 1.5 * u(rng), u(rng), u(rng)};
        if (std::hypot(cm[0] + ctx.mu, cm[1]) < 0.05) continue;
        if (std::hypot(cm[0] - (1.0 - ctx.mu), cm[1]) < 0.05) continue;
        const PhasePoint p{Chart::RotCartCM, cm, 0.37};
        for (Chart c : charts) {
            const auto there = convert(p, c, ctx);
            const auto back = convert(there, Chart::RotCartCM, ctx);
            REQUIRE(max_rel_diff(back.x, cm) < 1e-10);
            REQUIRE(back.t == p.t);
        }
        ++tested;
    }
    REQUIRE(tested > 200);
}

TEST_CASE("direct hops between neighbouring charts agree with hub routing") {
    const auto ctx = make_context(1e-4, -1.0);
    const PhasePoint sunp{Chart::RotPolarSun, {0.3, 0.8, -0.4, 0.9}, 0.0};
    const auto mg = convert(sunp, Chart::McGeheeSun, ctx);
    const auto back = convert(mg, Chart::RotPolarSun, ctx);
    REQUIRE(max_rel_diff(back.x, sunp.x) < 1e-13);

    const PhasePoint lc{Chart::LeviCivita, {0.21, -0.4, 0.6, 0.35}, 0.0};
    const auto su = convert(lc, Chart::StraightenedLC, ctx);
    const auto lc2 = convert(su, Chart::LeviCivita, ctx);
    REQUIRE(max_rel_diff(lc2.x, lc.x) < 1e-13);
}

TEST_CASE("square-root lift branch rules") {
    const auto ctx = make_context(1e-3, -1.0);
    // positive real axis: both lifts project to the same point
    const PhasePoint onaxis{Chart::RotCartJup, {0.5, 0.0, 0.1, 0.2}, 0.0};
    REQUIRE_THROWS_AS(convert(onaxis, Chart::LeviCivita, ctx), BranchRequired);
    const auto plus = convert(onaxis, Chart::LeviCivita, ctx, LCBranch::PlusZ2);
    const auto minus = convert(onaxis, Chart::LeviCivita, ctx, LCBranch::MinusZ2);
    REQUIRE(plus.x[0] == Catch::Approx(-minus.x[0]));
    REQUIRE(max_rel_diff(convert(plus, Chart::RotCartJup, ctx).x, onaxis.x) < 1e-13);
    REQUIRE(max_rel_diff(convert(minus, Chart::RotCartJup, ctx).x, onaxis.x) < 1e-13);

    // negative real axis needs no branch choice
    const PhasePoint offaxis{Chart::RotCartJup, {-0.5, 0.0, 0.1, 0.2}, 0.0};
    const auto lifted = convert(offaxis, Chart::LeviCivita, ctx);
    REQUIRE(lifted.x[1] > 0.0);

    // default representative keeps z2 >= 0
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const PhasePoint q{Chart::RotCartJup, {u(rng), u(rng), u(rng), u(rng)}, 0.0};
        if (std::abs(q.x[1]) < 1e-12) continue;
        REQUIRE(convert(q, Chart::LeviCivita, ctx).x[1] >= 0.0);
    }

    REQUIRE_THROWS_AS(
        convert(PhasePoint{Chart::RotCartJup, {0.0, 0.0, 0.1, 0.2}, 0.0}, Chart::LeviCivita, ctx),
        CollisionSingularity);
    REQUIRE_THROWS_AS(
        convert(PhasePoint{Chart::LeviCivita, {0.0, 0.0, 0.1, 0.2}, 0.0}, Chart::RotCartJup, ctx),
        CollisionSingularity);
}

TEST_CASE("double cover identifies antipodal lift points") {
    const auto ctx = make_context(1e-3, -1.0);
    const PhasePoint a{Chart::LeviCivita, {0.3, -0.2, 0.5, 0.7}, 0.0};
    const PhasePoint b{Chart::LeviCivita, {-0.3, 0.2, -0.5, -0.7}, 0.0};
    REQUIRE(max_rel_diff(convert(a, Chart::RotCartJup, ctx).x,
                         convert(b, Chart::RotCartJup, ctx).x) < 1e-14);
    REQUIRE(levi_civita_hamiltonian(a.x, ctx) ==
            Catch::Approx(levi_civita_hamiltonian(b.x, ctx)).epsilon(1e-14));
}

TEST_CASE("sidereal chart advances the angle by the time stamp") {
    const auto ctx = make_context(0.0, -1.0);
    const PhasePoint rot{Chart::RotPolarCM, {1.2, 0.3, -0.1, 0.9}, 0.5};
    const auto sid = convert(rot, Chart::NonRotPolarCM, ctx);
    REQUIRE(sid.x[1] == Catch::Approx(0.8).margin(1e-14));
    const auto back = convert(sid, Chart::RotPolarCM, ctx);
    REQUIRE(max_rel_diff(back.x, rot.x) < 1e-13);
    // two-body energy of sidereal data equals h + Theta at mu = 0
    REQUIRE(energy(sid, ctx) ==
            Catch::Approx(hamiltonian_rot_polar_cm(rot.x, 0.0) + rot.x[3]).epsilon(1e-12));
}

TEST_CASE("time dilation factors") {
    const auto ctx = make_context(1e-3, -1.0);
    const PhasePoint lc{Chart::LeviCivita, {0.3, -0.4, 0.0, 0.1}, 0.0};
    REQUIRE(time_dilation(lc, ctx) == Catch::Approx(4.0 * ctx.xi * 0.25).epsilon(1e-15));
    const auto su = convert(lc, Chart::StraightenedLC, ctx);
    REQUIRE(time_dilation(su, ctx) == Catch::Approx(4.0 * ctx.xi * 0.25).epsilon(1e-13));
    const PhasePoint mg{Chart::McGeheeSun, {0.2, 0.1, 0.4, -0.5}, 0.0};
    REQUIRE(time_dilation(mg, ctx) == Catch::Approx(0.008).epsilon(1e-15));
    const PhasePoint cm{Chart::RotCartCM, {0.5, 0.1, 0.0, 0.0}, 0.0};
    REQUIRE(time_dilation(cm, ctx) == 1.0);
}

TEST_CASE("straightening is restricted to the collision neighbourhood") {
    const auto ctx = make_context(1e-5, -1.0);
    const PhasePoint near{Chart::LeviCivita, {0.03, -0.02, 0.05, 0.01}, 0.0};
    const auto su = straighten_leading(near, ctx);
    REQUIRE(su.chart == Chart::StraightenedLC);
    const auto back = unstraighten_leading(su, ctx);
    REQUIRE(max_rel_diff(back.x, near.x) < 1e-14);

    const PhasePoint far{Chart::LeviCivita, {0.3, 0.0, 0.05, 0.01}, 0.0};
    REQUIRE_THROWS_AS(straighten_leading(far, ctx), OutsideValidity);
}

TEST_CASE("reversal conjugation is an involution preserving every energy") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto ctx = make_context(1e-3, -0.9);
    const Chart charts[] = {Chart::RotCartCM,  Chart::RotPolarCM, Chart::NonRotPolarCM,
                            Chart::RotCartJup, Chart::RotPolarJup, Chart::LeviCivita,
                            Chart::StraightenedLC, Chart::RotPolarSun, Chart::McGeheeSun,
                            Chart::McGeheeInf};
    for (int i = 0; i < 200; ++i) {
        const std::array<double, 4> cm{1.4 * u(rng), 1.4 * u(rng), u(rng), u(rng)};
        if (std::hypot(cm[0] + ctx.mu, cm[1]) < 0.05) continue;
        if (std::hypot(cm[0] - (1.0 - ctx.mu), cm[1]) < 0.05) continue;
        const PhasePoint p0{Chart::RotCartCM, cm, 0.2};
        for (Chart c : charts) {
            const auto p = convert(p0, c, ctx);
            const auto q = reverse_involution(p);
            const auto pp = reverse_involution(q);
            REQUIRE(max_rel_diff(pp.x, p.x) == 0.0);
            REQUIRE(pp.t == p.t);
            REQUIRE(rel_diff(energy(q, ctx), energy(p, ctx)) < 1e-12);
        }
    }
}

TEST_CASE("reversal commutes with chart conversion") {
    const auto ctx = make_context(1e-3, -0.9);
    const PhasePoint p{Chart::RotCartCM, {0.4, 0.7, -0.3, 0.2}, 0.15};
    for (Chart c : {Chart::RotPolarCM, Chart::NonRotPolarCM, Chart::RotPolarJup,
                    Chart::RotPolarSun, Chart::McGeheeSun, Chart::McGeheeInf}) {
        const auto a = reverse_involution(convert(p, c, ctx));
        const auto b = convert(reverse_involution(p), c, ctx);
        REQUIRE(max_rel_diff(a.x, b.x) < 1e-12);
        REQUIRE(a.t == b.t);
    }
    // in the lift charts commutation holds up to the deck transformation
    const auto a = reverse_involution(convert(p, Chart::LeviCivita, ctx));
    const auto b = convert(reverse_involution(p), Chart::LeviCivita, ctx);
    const double same = max_rel_diff(a.x, b.x);
    const double flipped =
        max_rel_diff({-a.x[0], -a.x[1], -a.x[2], -a.x[3]}, b.x);
    REQUIRE(std::min(same, flipped) < 1e-12);
}
