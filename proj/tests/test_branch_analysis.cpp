#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "middelay/branch_analysis.hpp"
#include "middelay/rootfinding.hpp"

using namespace middelay;
using Catch::Approx;

namespace {

// First positive solution of tan x = x (tabulated to 20 digits).
constexpr double zeta1 = 4.4934094579090641753;

// Newton on Q(., lambda) with a centered-difference derivative, independent
// of the library's analytic derivative.
complex newton_fd(complex s, double lambda) {
    for (int i = 0; i < 60; ++i) {
        const double h = 1e-6;
        const complex d = (normalized_Q(s + h, lambda) - normalized_Q(s - h, lambda)) / (2.0 * h);
        const complex step = normalized_Q(s, lambda) / d;
        s -= step;
        if (std::abs(step) < 1e-14) {
            break;
        }
    }
    return s;
}

complex upper_root(double lambda) {
    const auto r = find_roots(normalized_quasipolynomial(lambda), {-30.0, 1.0, 1.0, 40.0});
    REQUIRE_FALSE(r.roots.empty());
    return r.roots.front().value;
}

} // namespace

TEST_CASE("branch derivative matches a finite-difference continuation") {
    for (double lambda : {0.3, 0.5, 0.8}) {
        const complex s = upper_root(lambda);
        const double dl = 1e-5;
        const complex s_next = newton_fd(s, lambda + dl);
        const complex fd = (s_next - s) / dl;
        const complex analytic = branch_derivative(s, lambda);
        CHECK(std::abs(fd - analytic) < 1e-3 * (1.0 + std::abs(analytic)));
    }
}

TEST_CASE("branch derivative rejects lambda outside (0, 1)") {
    CHECK_THROWS_AS(branch_derivative({1.0, 1.0}, 1.0), Error);
    CHECK_THROWS_AS(branch_derivative({1.0, 1.0}, 0.0), Error);
}

TEST_CASE("branch derivative is finite at right half-plane test points") {
    // Q has no such roots, but the formula itself must be well defined there
    for (double w : {1.0, 7.0, 30.0}) {
        const complex d = branch_derivative({0.0, w}, 0.5);
        CHECK(std::isfinite(d.real()));
        CHECK(std::isfinite(d.imag()));
    }
}

TEST_CASE("vanishing denominator is reported") {
    // at s = 0 the denominator lambda (1 - lambda) + lambda^2 - lambda is exactly zero
    try {
        (void)branch_derivative(0.0, 0.4);
        FAIL("expected vanishing denominator");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::vanishing_denominator);
    }
}

TEST_CASE("continuation keeps residuals small and is step-count independent") {
    const complex s = upper_root(0.6);
    const auto coarse = continue_branch({0.6, s, 0.0}, 0.9);
    ContinuationOptions fine;
    fine.steps_per_unit = 2000;
    const auto dense = continue_branch({0.6, s, 0.0}, 0.9, fine);
    CHECK(coarse.size() == 301);
    CHECK(dense.size() == 601);
    for (const auto& p : coarse) {
        CHECK(p.residual <= 1e-9);
        CHECK(std::abs(normalized_Q(p.s, p.lambda)) <= 1e-9);
    }
    CHECK(std::abs(coarse.back().s - dense.back().s) < 1e-8);
    CHECK(coarse.back().lambda == 0.9);
}

TEST_CASE("continuation can run towards smaller lambda") {
    const complex s = upper_root(0.7);
    const auto path = continue_branch({0.7, s, 0.0}, 0.4);
    CHECK(path.back().lambda == 0.4);
    CHECK(std::abs(normalized_Q(path.back().s, 0.4)) <= 1e-9);
}

TEST_CASE("trivial branch is rejected") {
    try {
        (void)continue_branch({0.5, 0.0, 0.0}, 0.6);
        FAIL("expected trivial-branch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::trivial_branch);
    }
    CHECK_THROWS_AS(continue_branch({0.5, {1.0, 1.0}, 0.0}, 0.6), Error);
}

TEST_CASE("left half-plane branch approaches the limit root as lambda -> 1") {
    // near lambda = 1 the branch through 2 i zeta behaves like
    // 2 i zeta + i zeta (1 - lambda) - (zeta^2 / 6) (1 - lambda)^2
    const double l0 = 0.9;
    const double m0 = 1.0 - l0;
    const complex guess{-zeta1 * zeta1 / 6.0 * m0 * m0, 2.0 * zeta1 + zeta1 * m0};
    const complex s0 = newton_fd(guess, l0);
    REQUIRE(std::abs(s0 - guess) < 0.1);
    CHECK(s0.real() < 0.0);
    const auto path = continue_branch({l0, s0, 0.0}, 0.999);
    for (const auto& p : path) {
        CHECK(p.s.real() < 0.0);
    }
    const complex end = path.back().s;
    CHECK(std::abs(end - complex(0.0, 2.0 * zeta1)) < 0.01);
    CHECK(end.real() == Approx(-zeta1 * zeta1 / 6.0 * 1e-6).epsilon(0.05));
}

TEST_CASE("crossing lambda special values") {
    CHECK(crossing_lambda(2.0 * std::numbers::pi) == Approx(1.0).epsilon(1e-14));
    CHECK(crossing_lambda(-3.0) == crossing_lambda(3.0));
    CHECK_THROWS_AS(crossing_lambda(0.0), Error);
    // direct formula away from the origin
    const double w = 2.7;
    const double direct = (w * w + 2.0 * (std::cos(w) - 1.0)) /
                          ((w - std::sin(w)) * (w - std::sin(w)) + (1.0 - std::cos(w)) * (1.0 - std::cos(w)));
    CHECK(crossing_lambda(w) == Approx(direct).epsilon(1e-13));
}

TEST_CASE("crossing lambda tends to one third at the origin") {
    // series: numerator w^4/12 - w^6/360, denominator w^4/4 - w^6/72
    for (double w : {1e-2, 1e-4, 1e-7}) {
        const double series = (1.0 / 12.0 - w * w / 360.0) / (0.25 - w * w / 72.0);
        CHECK(crossing_lambda(w) == Approx(series).epsilon(1e-8));
    }
    CHECK(crossing_lambda(1e-7) == Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("crossing residuals vanish on the trivial sets") {
    for (double w : {0.3, 5.0, 42.0}) {
        const auto [r1, r2] = crossing_residuals(w, 1.0);
        CHECK(std::abs(r1) < 1e-12);
        CHECK(std::abs(r2) < 1e-12);
    }
    for (double l : {0.1, 0.5, 0.9}) {
        const auto [r1, r2] = crossing_residuals(0.0, l);
        CHECK(r1 == 0.0);
        CHECK(r2 == 0.0);
    }
}

TEST_CASE("crossing residuals are the parts of the scaled characteristic function") {
    for (double w : {0.7, 3.3, 11.0}) {
        for (double l : {0.2, 0.6}) {
            const complex s{0.0, w};
            const complex q = l * (1.0 - l) * normalized_Q(s, l);
            // the residual pair is a real rearrangement of q: compare moduli of both parts
            const auto [r1, r2] = crossing_residuals(w, l);
            const double re = std::cos(l * w) - l * l * std::cos(w) - (1.0 - l * l);
            const double im = -(std::sin(l * w) - l * l * std::sin(w)) + l * (1.0 - l) * w;
            CHECK(q.real() == Approx(re).margin(1e-12));
            CHECK(q.imag() == Approx(im).margin(1e-12));
            CHECK(r1 == Approx(re).margin(1e-12));
            CHECK(r2 == Approx(-im).margin(1e-12));
        }
    }
}

TEST_CASE("crossing direction matches its unreduced form and is nonnegative") {
    for (double w = -40.0; w <= 40.0; w += 0.37) {
        for (double l = 0.01; l < 1.0; l += 0.07) {
            const double r1 = l * l * (1 - l) * (std::cos(w) - 1);
            const double i1 = l * l * (1 - l) * (w - std::sin(w));
            const double r2 = 2 * l - 2 * l * std::cos(w) - w * l * l * std::sin(w) + l * l * w * w - l * w * w;
            const double i2 = 2 * l * (std::sin(w) - w) + l * l * w * (1 - std::cos(w));
            const double d = crossing_direction(w, l);
            CHECK(d >= 0.0);
            CHECK(-r1 * r2 - i1 * i2 == Approx(d).margin(1e-9 * std::max(1.0, std::abs(d))));
        }
    }
    CHECK(crossing_direction(2.0 * zeta1, 0.4) == Approx(0.0).margin(1e-20));
    CHECK(crossing_direction(3.0, 0.0) == 0.0);
    CHECK(crossing_direction(3.0, 1.0) == 0.0);
}

TEST_CASE("no imaginary-axis crossing in the sampled range") {
    const auto scan = crossing_scan(200.0, 10000);
    CHECK(scan.samples == 10000);
    CHECK(scan.in_range > 0);
    CHECK(scan.crossings.empty());
    CHECK(scan.min_direction >= 0.0);
    // unscaled near-zeros only occur where lambda0 -> 1 next to a limit root 2 i zeta_k,
    // which the branches approach from the left
    const auto limits = limit_roots(30);
    for (const auto& hit : scan.raw_hits) {
        CHECK(hit.lambda0 > 0.999);
        const bool explained = std::any_of(limits.begin(), limits.end(), [&](complex z) {
            return std::abs(z.imag() - hit.omega) < 0.05;
        });
        CHECK(explained);
    }
}

TEST_CASE("crossing direction is nonnegative over the sampled grid") {
    double lowest = 1.0;
    for (int i = 1; i <= 1000; ++i) {
        const double w = 0.1 * i;
        for (int j = 1; j < 100; ++j) {
            lowest = std::min(lowest, crossing_direction(w, 0.01 * j));
        }
    }
    CHECK(lowest >= 0.0);
}

TEST_CASE("limit quasipolynomial has a triple root at the origin") {
    const auto L = limit_quasipolynomial();
    CHECK(std::abs(limit_quasipolynomial(0.0)) == 0.0);
    CHECK(std::abs(L(0.0)) < 1e-15);
    CHECK(std::abs(derivative(L, 1)(0.0)) < 1e-15);
    CHECK(std::abs(derivative(L, 2)(0.0)) < 1e-15);
    CHECK(std::abs(derivative(L, 3)(0.0)) > 0.1);
    const complex s{0.3, -1.2};
    CHECK(std::abs(L(s) - limit_quasipolynomial(s)) < 1e-15);
}

TEST_CASE("limit roots come from tan x = x") {
    const auto roots = limit_roots(6);
    REQUIRE(roots.size() == 6);
    CHECK(roots[0].imag() / 2.0 == Approx(zeta1).epsilon(1e-15));
    for (std::size_t k = 0; k < roots.size(); ++k) {
        CHECK(roots[k].real() == 0.0);
        CHECK(roots[k].imag() > 0.0);
        const double z = roots[k].imag() / 2.0;
        CHECK(z > (k + 1) * std::numbers::pi);
        CHECK(z < (k + 1.5) * std::numbers::pi);
        CHECK(std::abs(std::tan(z) - z) < 1e-9 * z * z);
        CHECK(std::abs(limit_quasipolynomial(roots[k])) < 1e-9);
    }
    CHECK_THROWS_AS(limit_roots(0), Error);
}

TEST_CASE("scaled Q converges uniformly to the limit function") {
    // lambda (1 - lambda) Q(s, lambda) = (1 - lambda) L(s) + O((1 - lambda)^2) on compacts,
    // with next term (1 - lambda)^2 (s^2 e^{-s} / 2 - s + 1 - e^{-s}) from a symbolic expansion
    double previous = 0.0;
    for (double m : {1e-1, 1e-2, 1e-3}) {
        const double l = 1.0 - m;
        double worst = 0.0;
        for (double x = -5.0; x <= 5.0; x += 0.5) {
            for (double y = -5.0; y <= 5.0; y += 0.5) {
                const complex s{x, y};
                if (std::abs(s) > 5.0) {
                    continue;
                }
                const complex scaled = l * (1.0 - l) * normalized_Q(s, l);
                const complex next = (0.5 * s * s * std::exp(-s) - s + 1.0 - std::exp(-s)) * m * m;
                worst = std::max(worst, std::abs(scaled - m * limit_quasipolynomial(s) - next));
            }
        }
        if (previous > 0.0) {
            CHECK(worst < previous / 500.0);
        }
        previous = worst;
    }
}

TEST_CASE("dominance sweep of the normalized family") {
    for (int i = 1; i <= 19; ++i) {
        const double lambda = 0.05 * i;
        const auto r = find_roots(normalized_quasipolynomial(lambda), {-30.0, 1.0, 0.0, 200.0});
        REQUIRE_FALSE(r.roots.empty());
        CHECK(r.roots[0].multiplicity == 3);
        CHECK(std::abs(r.roots[0].value) < 1e-9);
        for (std::size_t k = 1; k < r.roots.size(); ++k) {
            CHECK(r.roots[k].value.real() < 0.0);
        }
    }
}
