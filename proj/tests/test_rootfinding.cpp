#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "middelay/rootfinding.hpp"

using namespace middelay;
using Catch::Approx;

namespace {

// Weierstrass / Durand-Kerner iteration for a monic polynomial (coefficients low to high).
std::vector<complex> durand_kerner(std::vector<double> c) {
    const std::size_t n = c.size() - 1;
    const double lead = c.back();
    for (double& v : c) {
        v /= lead;
    }
    auto p = [&](complex z) {
        complex acc = 0.0;
        for (std::size_t k = c.size(); k-- > 0;) {
            acc = acc * z + c[k];
        }
        return acc;
    };
    std::vector<complex> z(n);
    const complex seed{0.4, 0.9};
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = std::pow(seed, static_cast<double>(i));
    }
    for (int it = 0; it < 2000; ++it) {
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            complex den = 1.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    den *= z[i] - z[j];
                }
            }
            const complex step = p(z[i]) / den;
            z[i] -= step;
            change = std::max(change, std::abs(step));
        }
        if (change < 1e-15) {
            break;
        }
    }
    return z;
}

Quasipolynomial one_delay(double a, double tau) {
    const double g[] = {a};
    const double d[] = {tau};
    return feedback_system(0.0, g, d);
}

// Two-delay gains written out independently of the design module.
Quasipolynomial two_delay_mid(double a0, double t1, double t2, double& s0) {
    s0 = -a0 - 1.0 / t1 - 1.0 / t2;
    const double a1 = -t2 * std::exp(s0 * t1) / (t1 * (t2 - t1));
    const double a2 = t1 * std::exp(s0 * t2) / (t2 * (t2 - t1));
    return from_two_delay_system(a0, a1, a2, t1, t2);
}

} // namespace

TEST_CASE("single root of s - a") {
    const Quasipolynomial qp({{Polynomial{1.0, 1.0}, 0.0}});
    CHECK(count_roots(qp, {-2.0, 1.0, -1.0, 1.0}) == 1);
    CHECK(count_roots(qp, {0.0, 1.0, -1.0, 1.0}) == 0);
    CHECK(spectral_abscissa(qp, {-3.0, 2.5, -1.0, 1.0}) == Approx(-1.0).margin(1e-12));
}

TEST_CASE("Delta = s on the unit square") {
    const Quasipolynomial qp({{Polynomial{0.0, 1.0}, 0.0}});
    const auto r = find_roots(qp, {-1.0, 1.0, -1.0, 1.0});
    REQUIRE(r.roots.size() == 1);
    CHECK(std::abs(r.roots[0].value) < 1e-14);
    CHECK(r.roots[0].multiplicity == 1);
    CHECK(r.total_count == 1);
}

TEST_CASE("root on the boundary triggers dilation") {
    const Quasipolynomial qp({{Polynomial{0.0, 1.0}, 0.0}});
    const auto c = count_roots_detailed(qp, {0.0, 1.0, -1.0, 1.0});
    CHECK(c.count == 1);
    CHECK(c.region.re_low < 0.0);
    const auto r = find_roots(qp, {0.0, 1.0, -1.0, 1.0});
    REQUIRE(r.roots.size() == 1);
    CHECK(r.roots[0].value == complex{0.0, 0.0});
}

TEST_CASE("invalid rectangles are rejected") {
    const Quasipolynomial qp({{Polynomial{0.0, 1.0}, 0.0}});
    CHECK_THROWS_AS(count_roots(qp, {1.0, -1.0, -1.0, 1.0}), Error);
    CHECK_THROWS_AS(count_roots(qp, {-1.0, 1.0, 1.0, 1.0}), Error);
}

TEST_CASE("triple root of the two-delay design") {
    double s0 = 0.0;
    const auto qp = two_delay_mid(0.0, 1.0, 2.0, s0);
    CHECK(s0 == -1.5);
    const double h = 0.05;
    CHECK(count_roots(qp, {s0 - h, s0 + h, -h, h}) == 3);
    const auto r = find_roots(qp, {s0 - 0.5, s0 + 0.5, -0.5, 0.5});
    REQUIRE(r.roots.size() == 1);
    CHECK(r.roots[0].multiplicity == 3);
    CHECK(std::abs(r.roots[0].value - s0) < 1e-10);
    CHECK(count_roots_in_disk(qp, s0, r.roots[0].cluster_radius) == 3);
}

TEST_CASE("double root of the optimal one-delay feedback") {
    const auto qp = one_delay(-1.0, std::exp(-1.0));
    const double e = std::numbers::e;
    CHECK(count_roots(qp, {-e - 0.1, -e + 0.1, -0.1, 0.1}) == 2);
    const auto r = find_roots(qp, {-10.0, 2.0, -50.0, 50.0});
    REQUIRE_FALSE(r.roots.empty());
    CHECK(r.roots[0].multiplicity == 2);
    CHECK(r.roots[0].value.real() == Approx(-e).epsilon(1e-12));
    CHECK(r.roots[0].value.imag() == 0.0);
    for (std::size_t i = 1; i < r.roots.size(); ++i) {
        CHECK(r.roots[i].value.real() < -e);
    }
    CHECK(r.total_count == r.counted_total);
}

TEST_CASE("every certificate has a small residual and a consistent disk count") {
    const auto qp = from_two_delay_system(0.3, -0.8, 0.6, 0.7, 1.9);
    const auto r = find_roots(qp, {-6.0, 3.0, -40.0, 40.0});
    REQUIRE(r.roots.size() > 5);
    int total = 0;
    for (const auto& c : r.roots) {
        CHECK(c.residual <= 1e-10 * std::max(1.0, qp.scale(c.value)));
        CHECK(count_roots_in_disk(qp, c.value, c.cluster_radius) == c.multiplicity);
        total += c.multiplicity;
    }
    CHECK(total == r.total_count);
    CHECK(total == count_roots(qp, {-6.0, 3.0, -40.0, 40.0}));
    // conjugate symmetry of a real quasipolynomial
    for (const auto& c : r.roots) {
        const bool mirrored = std::any_of(r.roots.begin(), r.roots.end(), [&](const RootCertificate& o) {
            return std::abs(o.value - std::conj(c.value)) < 1e-8;
        });
        CHECK(mirrored);
    }
    // ordering: real part descending, imaginary ascending
    for (std::size_t i = 1; i < r.roots.size(); ++i) {
        const auto& a = r.roots[i - 1].value;
        const auto& b = r.roots[i].value;
        CHECK((a.real() > b.real() || (a.real() == b.real() && a.imag() < b.imag())));
    }
}

TEST_CASE("polynomial roots agree with Durand-Kerner") {
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> deg(1, 5);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = deg(rng);
        std::vector<double> c(static_cast<std::size_t>(d) + 1);
        for (double& v : c) {
            v = u(rng);
        }
        c.back() = 1.0;
        const Quasipolynomial qp({{Polynomial(c), 0.0}});
        const auto oracle = durand_kerner(c);
        const auto r = find_roots(qp, {-3.0, 3.0, -3.0, 3.0});
        REQUIRE(r.total_count == d);
        for (const auto& z : oracle) {
            const bool matched = std::any_of(r.roots.begin(), r.roots.end(), [&](const RootCertificate& cert) {
                return std::abs(cert.value - z) < 1e-8;
            });
            CHECK(matched);
        }
    }
}

TEST_CASE("subdivision additivity on random rectangles") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto qp = from_two_delay_system(0.2, -1.1, 0.5, 0.6, 1.4);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const double x0 = -5.0 + 4.0 * u(rng);
        const double y0 = -30.0 + 25.0 * u(rng);
        const Rectangle r{x0, x0 + 1.0 + 5.0 * u(rng), y0, y0 + 5.0 + 30.0 * u(rng)};
        const double xm = r.re_low + (0.2 + 0.6 * u(rng)) * r.width();
        const double ym = r.im_low + (0.2 + 0.6 * u(rng)) * r.height();
        const auto parent = count_roots_detailed(qp, r);
        int sum = 0;
        bool clean = parent.region == r;
        for (const Rectangle kid : {Rectangle{r.re_low, xm, r.im_low, ym}, Rectangle{xm, r.re_high, r.im_low, ym},
                                    Rectangle{r.re_low, xm, ym, r.im_high}, Rectangle{xm, r.re_high, ym, r.im_high}}) {
            const auto c = count_roots_detailed(qp, kid);
            clean = clean && c.region == kid;
            sum += c.count;
        }
        if (clean) {
            ++checked;
            CHECK(parent.count == sum);
        }
    }
    CHECK(checked >= 95);
}

TEST_CASE("default window follows the coefficient bound") {
    FeedbackForm f{1.0, {2.0, -0.5}, {0.5, 1.0}};
    const Rectangle w = default_window(f);
    CHECK(w.re_high == Approx(4.5));
    CHECK(w.re_low == Approx(-(3.5 + 6.0)));
    CHECK(w.im_low == -50.0);
}

TEST_CASE("abscissa needs a right edge beyond the bound") {
    const auto qp = one_delay(-1.0, 1.0);
    CHECK_THROWS_AS(spectral_abscissa(qp, {-5.0, 0.5, -5.0, 5.0}), Error);
    const Quasipolynomial stable({{Polynomial{5.0, 1.0}, 0.0}});
    try {
        (void)spectral_abscissa(stable, {-1.0, 6.0, -1.0, 1.0});
        FAIL("expected empty spectrum");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_spectrum);
    }
}

TEST_CASE("certified abscissa of the one-delay optimum") {
    const auto qp = one_delay(-1.0, std::exp(-1.0));
    const auto c = certify_spectral_abscissa(qp);
    CHECK(c.abscissa == Approx(-std::numbers::e).epsilon(1e-12));
    CHECK(c.spectrum.roots.front().multiplicity == 2);
}

TEST_CASE("certified abscissa of an unstable system") {
    // s - 2 exp(-s): real root where s e^s = 2, i.e. s = W(2) = 0.852606
    const auto qp = one_delay(2.0, 1.0);
    const auto c = certify_spectral_abscissa(qp);
    CHECK(c.abscissa == Approx(0.8526055020137255).epsilon(1e-12));
}
