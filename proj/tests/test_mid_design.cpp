#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "middelay/mid_design.hpp"
#include "middelay/rootfinding.hpp"

using namespace middelay;
using Catch::Approx;

TEST_CASE("one-delay design formulas") {
    const auto d = design_one_delay(0.0, std::exp(-1.0));
    CHECK(d.s_star == Approx(-std::numbers::e).epsilon(1e-15));
    CHECK(d.a1 == Approx(-1.0).epsilon(1e-15));

    const auto unit = design_one_delay(0.0, 1.0);
    CHECK(unit.s_star == -1.0);
    CHECK(unit.a1 == Approx(-std::exp(-1.0)));

    const auto marginal = design_one_delay(-1.0, 1.0);
    CHECK(marginal.s_star == 0.0);
    CHECK(marginal.a1 == Approx(-1.0));

    CHECK_THROWS_AS(design_one_delay(0.0, 0.0), Error);
    CHECK_THROWS_AS(design_one_delay(0.0, -1.0), Error);
}

TEST_CASE("one-delay design has a double root") {
    const auto d = design_one_delay(0.4, 0.8);
    const auto rep = verify_multiplicity(d.quasipolynomial(), d.s_star, 2);
    CHECK(rep.passed);
}

TEST_CASE("two-delay design formulas") {
    const auto d = design_two_delay(0.0, 1.0, 2.0);
    CHECK(d.s0 == -1.5);
    CHECK(d.a1 == Approx(-2.0 * std::exp(-1.5)).epsilon(1e-15));
    CHECK(d.a2 == Approx(std::exp(-3.0) / 2.0).epsilon(1e-15));

    const auto swapped = design_two_delay(0.0, 2.0, 1.0);
    CHECK(swapped.tau1 == 1.0);
    CHECK(swapped.tau2 == 2.0);
    CHECK(swapped.a1 == d.a1);

    CHECK_THROWS_AS(design_two_delay(0.0, 1.0, 1.0), Error);
    CHECK_THROWS_AS(design_two_delay(0.0, -1.0, 1.0), Error);
}

TEST_CASE("two-delay design near the integrator optimum") {
    const auto d = design_two_delay(0.0, 0.4063, 1.122);
    CHECK(d.s0 == Approx(-3.3525).margin(1e-3));
    CHECK(d.a1 == Approx(-0.9882).margin(1e-3));
    CHECK(d.a2 == Approx(0.01176).margin(1e-4));
}

TEST_CASE("platelet-sized design abscissa") {
    const auto d = design_two_delay(3.0, 9.0, 19.0);
    CHECK(d.s0 == Approx(-3.0 - 1.0 / 9.0 - 1.0 / 19.0));
    CHECK(d.s0 == Approx(-3.1637).margin(1e-4));
}

TEST_CASE("two-delay design has a triple root") {
    const auto d = design_two_delay(0.0, 1.0, 2.0);
    const auto rep = verify_multiplicity(d.quasipolynomial(), d.s0, 3);
    CHECK(rep.passed);
    REQUIRE(rep.derivative_moduli.size() == 4);
    CHECK(rep.derivative_moduli[0] < 1e-10);
    CHECK(rep.derivative_moduli[1] < 1e-10);
    CHECK(rep.derivative_moduli[2] < 1e-10);
    CHECK(rep.derivative_moduli[3] > 1e-3);
    // Corollary-style bound: degree 3 forbids multiplicity 4
    try {
        (void)verify_multiplicity(d.quasipolynomial(), d.s0, 4);
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::multiplicity_exceeds_bound);
    }
    CHECK_FALSE(verify_multiplicity(d.quasipolynomial(), d.s0, 2).passed);
}

TEST_CASE("normalization of the (0, 1, 2) design") {
    const auto n = normalize(design_two_delay(0.0, 1.0, 2.0));
    CHECK(n.lambda == 0.5);
    CHECK(n.a0_t == Approx(-3.0));
    CHECK(n.a1_t == Approx(4.0));
    CHECK(n.a2_t == Approx(-1.0));
}

TEST_CASE("normalization matches the closed forms and the linear rows") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const double a0 = -2.0 + 4.0 * u(rng);
        const double t2 = 0.3 + 3.0 * u(rng);
        const double t1 = t2 * (0.02 + 0.96 * u(rng));
        const auto n = normalize(design_two_delay(a0, t1, t2));
        const double l = n.lambda;
        CHECK(n.a0_t == Approx(-(l + 1.0) / l).epsilon(1e-10));
        CHECK(n.a1_t == Approx(-1.0 / (l * (l - 1.0))).epsilon(1e-10));
        CHECK(n.a2_t == Approx(l / (l - 1.0)).epsilon(1e-10));
        CHECK(std::abs(n.a0_t + n.a1_t + n.a2_t) < 1e-9 * std::abs(n.a1_t));
        CHECK(std::abs(-l * n.a1_t - n.a2_t + 1.0) < 1e-9 * std::abs(n.a1_t));
    }
}

TEST_CASE("normalized Q has a triple root at the origin") {
    for (double l : {0.05, 0.2, 0.5, 0.8, 0.95}) {
        CHECK(std::abs(normalized_Q(0.0, l)) < 1e-12 / (l * (1.0 - l)));
        const auto q = normalized_quasipolynomial(l);
        CHECK(std::abs(derivative(q, 1)(0.0)) < 1e-12 / (l * (1.0 - l)));
        CHECK(std::abs(derivative(q, 2)(0.0)) < 1e-12 / (l * (1.0 - l)));
        CHECK(std::abs(derivative(q, 3)(0.0)) > 1e-3);
    }
    // second difference oracle at lambda = 1/2
    const double h = 1e-3;
    const complex f2 = (normalized_Q(h, 0.5) - 2.0 * normalized_Q(0.0, 0.5) + normalized_Q(-h, 0.5)) / (h * h);
    CHECK(std::abs(f2) < 1e-5);
    const complex f3 = (normalized_Q(2 * h, 0.5) - 2.0 * normalized_Q(h, 0.5) + 2.0 * normalized_Q(-h, 0.5) -
                        normalized_Q(-2 * h, 0.5)) /
                       (2 * h * h * h);
    // Q'''(0) = -a1_t lambda^3 - a2_t with a1_t = 4, a2_t = -1
    const complex exact = -4.0 * 0.125 + 1.0;
    CHECK(std::abs(f3 - exact) < 1e-4);
    CHECK_THROWS_AS(normalized_Q(0.0, 1.0), Error);
}

TEST_CASE("normalized Q agrees with the generic quasipolynomial") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const auto n = normalize(design_two_delay(0.0, 1.0, 2.0));
    const auto q = n.quasipolynomial();
    for (int i = 0; i < 20; ++i) {
        const complex s{u(rng), u(rng)};
        CHECK(std::abs(normalized_Q(s, 0.5) - q(s)) < 1e-12 * (1.0 + std::abs(q(s))));
    }
}

TEST_CASE("normalization maps roots onto roots") {
    const auto d = design_two_delay(0.5, 0.7, 1.6);
    const auto n = normalize(d);
    const auto roots = find_roots(n.quasipolynomial(), {-25.0, 1.0, 0.5, 60.0});
    REQUIRE(roots.roots.size() >= 3);
    const auto delta = d.quasipolynomial();
    for (const auto& r : roots.roots) {
        const complex s = d.s0 + r.value / d.tau2;
        CHECK(std::abs(delta(s)) < 1e-9 * std::max(1.0, delta.scale(s)));
    }
}

TEST_CASE("multiplicity system reproduces the closed forms") {
    const auto d2 = design_two_delay(0.3, 0.8, 1.7);
    const double delays2[] = {0.8, 1.7};
    const auto s2 = solve_multiplicity_system(0.3, delays2, d2.s0);
    CHECK(s2.gains[0] == Approx(d2.a1).epsilon(1e-10));
    CHECK(s2.gains[1] == Approx(d2.a2).epsilon(1e-10));

    const auto d1 = design_one_delay(-0.4, 1.3);
    const double delays1[] = {1.3};
    const auto s1 = solve_multiplicity_system(-0.4, delays1, d1.s_star);
    CHECK(s1.gains[0] == Approx(d1.a1).epsilon(1e-10));

    CHECK_THROWS_AS(solve_multiplicity_system(0.3, delays2, d2.s0 + 0.5), Error);
    try {
        (void)solve_multiplicity_system(0.3, delays2, d2.s0 + 0.5);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::inconsistent_target);
    }
    const double repeated[] = {1.0, 1.0};
    CHECK_THROWS_AS(solve_multiplicity_system(0.0, repeated, -1.0), Error);
}

TEST_CASE("three-delay quadruple root is not dominant") {
    const double delays[] = {0.917686, 1.0, 1.067836};
    const auto sol = solve_multiplicity_system(std::nullopt, delays, 0.0);
    const auto qp = sol.quasipolynomial();
    CHECK(verify_multiplicity(qp, 0.0, 4).passed);
    const auto right = find_roots(qp, {1e-6, 10.0, -50.0, 50.0});
    CHECK_FALSE(right.roots.empty());
    CHECK(right.roots.front().value.real() > 0.0);
}

TEST_CASE("the triple root is alone in its exclusion strip") {
    for (double t1 : {0.3, 1.0, 1.7}) {
        const auto d = design_two_delay(0.2, t1, 2.0);
        const double w = 2.0 * std::numbers::pi / d.tau2 - 1e-3;
        const auto r = find_roots(d.quasipolynomial(), {d.s0 - 5.0, d.s0 + 1.0, -w, w});
        REQUIRE(r.roots.size() == 1);
        CHECK(r.roots[0].multiplicity == 3);
        CHECK(r.roots[0].value.real() == Approx(d.s0).margin(1e-9));
    }
}

TEST_CASE("strict dominance over a grid of designs") {
    int designs = 0;
    for (double a0 : {-1.0, 0.0, 1.0}) {
        for (double l : {0.1, 0.25, 0.5, 0.75, 0.9}) {
            for (double t2 : {0.5, 1.0, 2.0}) {
                const auto d = design_two_delay(a0, l * t2, t2);
                const auto r = find_roots(d.quasipolynomial(), {d.s0 + 1e-6, d.s0 + 10.0, -200.0, 200.0});
                CHECK(r.roots.empty());
                ++designs;
            }
        }
    }
    CHECK(designs == 45);
}

TEST_CASE("two delays improve on one") {
    for (double t1 : {0.1, 1.0, 5.0}) {
        for (double t2 : {0.01, 1.0, 100.0}) {
            if (t1 == t2) {
                continue;
            }
            CHECK(design_two_delay(0.7, t1, t2).s0 < design_one_delay(0.7, t1).s_star);
        }
    }
}
