#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "nearcol/errors.hpp"
#include "nearcol/kepler.hpp"

using namespace nearcol;

namespace {

// Sidereal polar two-body field (r, theta, R, Theta), gravitational parameter 1.
std::array<double, 4> kepler_field(const std::array<double, 4>& x) {
    const double r = x[0], R = x[2], Th = x[3];
    return {R, Th / (r * r), Th * Th / (r * r * r) - 1.0 / (r * r), 0.0};
}

// Fixed-step RK4 oracle, independent of the closed-form solution under test.
std::array<double, 4> rk4_to(std::array<double, 4> x, double t_final, int steps) {
    const double dt = t_final / steps;
    for (int i = 0; i < steps; ++i) {
        const auto k1 = kepler_field(x);
        std::array<double, 4> x2{}, x3{}, x4{};
        for (int j = 0; j < 4; ++j) x2[j] = x[j] + 0.5 * dt * k1[j];
        const auto k2 = kepler_field(x2);
        for (int j = 0; j < 4; ++j) x3[j] = x[j] + 0.5 * dt * k2[j];
        const auto k3 = kepler_field(x3);
        for (int j = 0; j < 4; ++j) x4[j] = x[j] + dt * k3[j];
        const auto k4 = kepler_field(x4);
        for (int j = 0; j < 4; ++j)
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    return x;
}

} // namespace

TEST_CASE("conic classification follows the momentum/energy table") {
    const double s2 = std::sqrt(2.0);
    // parabolic boundary Theta = -h inside |h| <= sqrt(2)
    REQUIRE(classify_conic(0.0, 0.0) == ConicClass::Parabolic);
    REQUIRE(classify_conic(-1.0, 1.0) == ConicClass::Parabolic);
    REQUIRE(classify_conic(1.0, -1.0) == ConicClass::Parabolic);
    REQUIRE(classify_conic(s2, -s2) == ConicClass::Parabolic);
    // hyperbolic above the boundary
    REQUIRE(classify_conic(0.0, 1.0) == ConicClass::Hyperbolic);
    REQUIRE(classify_conic(-1.0, 1.1) == ConicClass::Hyperbolic);
    REQUIRE(classify_conic(5.0, -4.9) == ConicClass::Hyperbolic);
    // elliptic band, low-energy window
    REQUIRE(classify_conic(-1.45, 1.0) == ConicClass::Elliptic);
    REQUIRE(classify_conic(-1.45, 0.7) == ConicClass::Elliptic);
    REQUIRE(classify_conic(-1.45, 0.5) == ConicClass::OutOfTable);
    REQUIRE(classify_conic(-1.45, 1.4) == ConicClass::OutOfTable);
    // elliptic band, mid-energy window [1 - sqrt(2h+3), -h)
    REQUIRE(classify_conic(-1.0, 0.5) == ConicClass::Elliptic);
    REQUIRE(classify_conic(-1.0, 0.0) == ConicClass::Elliptic);
    REQUIRE(classify_conic(-1.0, -0.1) == ConicClass::OutOfTable);
    // outside the table entirely
    REQUIRE(classify_conic(-2.0, 1.0) == ConicClass::OutOfTable);
    REQUIRE(classify_conic(2.0, -3.0) == ConicClass::OutOfTable);
}

TEST_CASE("time law inverts the cubic for all momenta") {
    for (double Theta0 : {0.0, 1e-6, 1e-3, 0.3, 1.0, 1.4, std::sqrt(2.0)}) {
        for (double w : {-3.0, -1.0, -1e-4, 1e-8, 0.2, 1.0, 5.0}) {
            const double t = t_of_w(w, Theta0);
            const double back = w_of_t(t, Theta0);
            REQUIRE(back == Catch::Approx(w).margin(1e-13).epsilon(1e-12));
        }
    }
}

TEST_CASE("parabolic ejection state matches direct integration") {
    // Oracle-first check of the closed form, including the angle branch.
    for (double Theta0 : {0.3, 1.0, 1.4}) {
        const double theta0 = 0.25;
        const std::array<double, 4> x0{0.5 * Theta0 * Theta0, theta0, 0.0, Theta0};
        for (double t : {-2.5, -0.7, 0.4, 1.0, 3.0}) {
            const auto num = rk4_to(x0, t, 300000);
            const auto cf = parabolic_state(t, theta0, Theta0);
            REQUIRE(cf.r == Catch::Approx(num[0]).margin(1e-9));
            REQUIRE(cf.theta == Catch::Approx(num[1]).margin(1e-9));
            REQUIRE(cf.R == Catch::Approx(num[2]).margin(1e-9));
            REQUIRE(cf.Theta == Theta0);
        }
    }
}

TEST_CASE("parabolic states sit exactly on the zero-energy level") {
    for (double Theta0 : {1e-3, 0.3, 1.0, 1.4}) {
        for (double t : {-10.0, -0.3, 1e-7, 2.0, 10.0}) {
            const auto s = parabolic_state(t, 0.0, Theta0);
            const double E = 0.5 * (s.R * s.R + s.Theta * s.Theta / (s.r * s.r)) - 1.0 / s.r;
            // the defect is pure rounding of terms of size 1/r
            REQUIRE(std::abs(E) < 1e-13 * (1.0 + 1.0 / s.r));
        }
    }
}

TEST_CASE("radial ejection uses the two-thirds power law") {
    const double lam = lambda_parabolic;
    for (double t : {0.5, 1.0, 7.0}) {
        const auto s = parabolic_state(t, 0.7, 0.0);
        REQUIRE(s.r == Catch::Approx(lam * std::pow(t, 2.0 / 3.0)).epsilon(1e-14));
        REQUIRE(s.R ==
                Catch::Approx(std::sqrt(2.0 / lam) * std::pow(t, -1.0 / 3.0)).epsilon(1e-14));
        REQUIRE(s.theta == 0.7);
        const auto m = parabolic_state(-t, 0.7, 0.0);
        REQUIRE(m.r == s.r);
        REQUIRE(m.R == -s.R);
    }
    REQUIRE_THROWS_AS(parabolic_state(0.0, 0.7, 0.0), SingularAtZero);
}

TEST_CASE("long-time asymptotics approach the radial power law") {
    const double lam = lambda_parabolic;
    for (double Theta0 : {0.0, 0.3, 1.0, 1.4}) {
        for (double t : {1e6, -1e6}) {
            const auto s = parabolic_state(t, 0.0, Theta0);
            const double rexp = s.r * std::pow(std::abs(t), -2.0 / 3.0);
            const double Rexp = s.R * std::pow(std::abs(t), 1.0 / 3.0);
            REQUIRE(std::abs(rexp - lam) / lam < 1e-3);
            const double target = (t > 0 ? 1.0 : -1.0) * std::sqrt(2.0 / lam);
            REQUIRE(std::abs(Rexp - target) / std::abs(target) < 1e-3);
        }
    }
}

TEST_CASE("collision time and angle hit the unit circle") {
    const double s2 = std::sqrt(2.0);
    REQUIRE(collision_parameters(0.0).t_c == Catch::Approx(s2 / 3.0).epsilon(1e-15));
    REQUIRE(collision_parameters(1.0).t_c == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
    REQUIRE(collision_parameters(s2).t_c == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(collision_parameters(-1.0).t_c == Catch::Approx(2.0 / 3.0).epsilon(1e-15));

    for (double Theta0 : {0.0, 0.3, -0.3, 1.0, 1.4}) {
        const auto cp = collision_parameters(Theta0);
        // ejection at angle theta_c at t = 0 crosses r = 1 at angle t_c
        const auto fwd = parabolic_state(cp.t_c, cp.theta_c, Theta0);
        REQUIRE(fwd.r == Catch::Approx(1.0).margin(1e-13));
        REQUIRE(fwd.theta == Catch::Approx(cp.t_c).margin(1e-13));
        const auto bwd = parabolic_state(-cp.t_c, -cp.theta_c, Theta0);
        REQUIRE(bwd.r == Catch::Approx(1.0).margin(1e-13));
        REQUIRE(bwd.theta == Catch::Approx(-cp.t_c).margin(1e-13));
    }
    REQUIRE_THROWS_AS(collision_parameters(1.5), InvalidParameter);
}

TEST_CASE("radial momentum on the zero-energy graph over large radii") {
    auto [R1, Th1] = kepler_infinity_graph(1.0, 1.0, ManifoldBranch::Stable);
    REQUIRE(R1 == Catch::Approx(1.0).epsilon(1e-15));
    REQUIRE(Th1 == 1.0);
    auto [R2, Th2] = kepler_infinity_graph(1e4, 0.0, ManifoldBranch::Stable);
    REQUIRE(R2 == Catch::Approx(std::sqrt(2.0) * 1e-2).epsilon(1e-14));
    REQUIRE(Th2 == 0.0);
    auto [R3, Th3] = kepler_infinity_graph(2.0, 1.0, ManifoldBranch::Unstable);
    REQUIRE(R3 < 0.0);
    REQUIRE(R3 == Catch::Approx(-0.5 * std::sqrt(3.0)).epsilon(1e-14));
    REQUIRE(Th3 == 1.0);
    REQUIRE_THROWS_AS(kepler_infinity_graph(0.4, 1.0, ManifoldBranch::Stable), BelowPericenter);
}
