#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "middelay/error.hpp"
#include "middelay/mid_design.hpp"
#include "middelay/quasipoly.hpp"

namespace middelay {

struct BranchPoint {
    double lambda = 0.0;
    complex s;
    double residual = 0.0; // |Q(s, lambda)|
};

struct CrossingCandidate {
    double omega = 0.0;
    double lambda0 = 0.0;
    double residual_re = 0.0;
    double residual_im = 0.0;
    double direction = 0.0;
};

namespace detail {

inline void require_open_unit(double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw Error(ErrorCode::invalid_input, "lambda must lie in (0, 1)", "lambda=" + std::to_string(lambda));
    }
}

// lambda (1 - lambda) Q(s, lambda); analytic in lambda across [0, 1].
inline complex scaled_Q(complex s, double l) {
    return l * (1.0 - l) * s - (1.0 - l * l) - l * l * std::exp(-s) + std::exp(-l * s);
}

inline complex scaled_Q_ds(complex s, double l) {
    return l * (1.0 - l) + l * l * std::exp(-s) - l * std::exp(-l * s);
}

inline complex scaled_Q_dlambda(complex s, double l) {
    return (1.0 - 2.0 * l) * s + 2.0 * l - 2.0 * l * std::exp(-s) - s * std::exp(-l * s);
}

// x - sin x without cancellation for small x
inline double x_minus_sin(double x) {
    if (std::abs(x) > 0.5) {
        return x - std::sin(x);
    }
    const double x2 = x * x;
    double term = x * x2 / 6.0;
    double sum = 0.0;
    for (int k = 1; k < 12 && term != 0.0; ++k) {
        sum += term;
        term *= -x2 / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
    }
    return sum;
}

} // namespace detail

/// ds/dlambda along a branch of roots of Q(., lambda), by implicit
/// differentiation of lambda (1 - lambda) Q(s, lambda) = 0.
[[nodiscard]] inline complex branch_derivative(complex s, double lambda) {
    detail::require_open_unit(lambda);
    const complex den = detail::scaled_Q_ds(s, lambda);
    const double size = lambda * (1.0 - lambda) + lambda * lambda * std::abs(std::exp(-s)) +
                        lambda * std::abs(std::exp(-lambda * s));
    if (!(std::abs(den) > 1e-14 * std::max(1.0, size))) {
        throw Error(ErrorCode::vanishing_denominator, "branch derivative denominator vanishes",
                    "denominator=" + std::to_string(std::abs(den)));
    }
    return -detail::scaled_Q_dlambda(s, lambda) / den;
}

struct ContinuationOptions {
    int steps_per_unit = 1000;
    double residual_tolerance = 1e-9;
    int max_corrector_iterations = 30;
};

namespace detail {

inline complex correct_root(complex s, double lambda, const ContinuationOptions& o, bool& ok) {
    ok = false;
    for (int it = 0; it < o.max_corrector_iterations; ++it) {
        const complex f = scaled_Q(s, lambda);
        const complex df = scaled_Q_ds(s, lambda);
        if (df == complex{}) {
            return s;
        }
        const complex step = f / df;
        s -= step;
        if (std::abs(step) < 1e-15 * (1.0 + std::abs(s))) {
            ok = true;
            break;
        }
    }
    if (!ok) {
        ok = std::abs(normalized_Q(s, lambda)) <= o.residual_tolerance;
    }
    return s;
}

} // namespace detail

/// Follows a nontrivial root branch of Q from start.lambda to lambda_end with
/// an RK4 predictor on ds/dlambda and a Newton corrector at every step.
[[nodiscard]] inline std::vector<BranchPoint> continue_branch(const BranchPoint& start, double lambda_end,
                                                              const ContinuationOptions& o = {}) {
    detail::require_open_unit(start.lambda);
    detail::require_open_unit(lambda_end);
    if (std::abs(start.s) < 1e-8) {
        throw Error(ErrorCode::trivial_branch, "the branch s = 0 is excluded");
    }
    if (o.steps_per_unit <= 0) {
        throw Error(ErrorCode::invalid_input, "steps_per_unit must be positive");
    }
    bool ok = false;
    complex s = detail::correct_root(start.s, start.lambda, o, ok);
    if (!ok || std::abs(s - start.s) > 1e-6 * (1.0 + std::abs(start.s))) {
        throw Error(ErrorCode::corrector_divergence, "start point is not a root of Q",
                    "residual=" + std::to_string(std::abs(normalized_Q(start.s, start.lambda))));
    }
    const double span = lambda_end - start.lambda;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(span) * o.steps_per_unit - 1e-9)));
    const double h = span / steps;

    std::vector<BranchPoint> path;
    path.reserve(static_cast<std::size_t>(steps) + 1);
    path.push_back({start.lambda, s, std::abs(normalized_Q(s, start.lambda))});
    double lambda = start.lambda;
    for (int i = 0; i < steps; ++i) {
        const complex k1 = branch_derivative(s, lambda);
        const complex k2 = branch_derivative(s + 0.5 * h * k1, lambda + 0.5 * h);
        const complex k3 = branch_derivative(s + 0.5 * h * k2, lambda + 0.5 * h);
        const double next = i + 1 == steps ? lambda_end : start.lambda + (i + 1) * h;
        const complex k4 = branch_derivative(s + h * k3, next);
        const complex predicted = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const complex corrected = detail::correct_root(predicted, next, o, ok);
        const double residual = std::abs(normalized_Q(corrected, next));
        const double drift = std::abs(corrected - predicted);
        if (!ok || residual > o.residual_tolerance ||
            drift > std::max(1e-6, 0.5 * std::abs(predicted - s))) {
            throw Error(ErrorCode::corrector_divergence, "corrector lost the branch",
                        "lambda=" + std::to_string(next) + " residual=" + std::to_string(residual));
        }
        if (std::abs(corrected) < 1e-8) {
            throw Error(ErrorCode::trivial_branch, "branch ran into the trivial root s = 0",
                        "lambda=" + std::to_string(next));
        }
        s = corrected;
        lambda = next;
        path.push_back({lambda, s, residual});
    }
    return path;
}

/// lambda at which Q(., lambda) could have the root i omega:
/// (omega^2 + 2 (cos omega - 1)) / ((omega - sin omega)^2 + (1 - cos omega)^2).
[[nodiscard]] inline double crossing_lambda(double omega) {
    if (omega == 0.0 || !std::isfinite(omega)) {
        throw Error(ErrorCode::invalid_input, "crossing_lambda needs a finite nonzero omega");
    }
    // written with 1 - cos w = 2 sin^2(w/2) and w^2 - 4 sin^2(w/2) = (w - 2 sin(w/2))(w + 2 sin(w/2))
    const double h = std::sin(0.5 * omega);
    const double num = 2.0 * detail::x_minus_sin(0.5 * omega) * (omega + 2.0 * h);
    const double a = detail::x_minus_sin(omega);
    const double b = 2.0 * h * h;
    return num / (a * a + b * b);
}

/// Real and imaginary parts of lambda (1 - lambda) Q(i omega, lambda), rearranged.
[[nodiscard]] inline std::pair<double, double> crossing_residuals(double omega, double lambda) {
    const double l2 = lambda * lambda;
    const double r1 = std::cos(lambda * omega) - l2 * std::cos(omega) + l2 - 1.0;
    const double r2 = std::sin(lambda * omega) - l2 * std::sin(omega) + l2 * omega - lambda * omega;
    return {r1, r2};
}

/// Sign-carrying numerator of Re s'(lambda0) at a crossing i omega.
[[nodiscard]] inline double crossing_direction(double omega, double lambda0) {
    const double q = omega * std::cos(0.5 * omega) - 2.0 * std::sin(0.5 * omega);
    return 2.0 * lambda0 * lambda0 * lambda0 * (1.0 - lambda0) * q * q;
}

struct CrossingScan {
    int samples = 0;
    int in_range = 0;                         // samples with crossing_lambda in (0, 1)
    std::vector<CrossingCandidate> crossings; // samples where Q(i omega, lambda0) vanishes within tolerance
    std::vector<CrossingCandidate> raw_hits;  // samples where the unscaled residual pair is below tolerance
    double smallest_residual = std::numeric_limits<double>::infinity(); // min over in-range samples, Q scale
    double min_direction = std::numeric_limits<double>::infinity();
};

/// Samples omega = k omega_max / samples, k = 1..samples, and records every
/// point where (omega, crossing_lambda(omega)) solves both residual equations.
/// The residual pair is lambda (1 - lambda) Q(i omega, lambda) rearranged, which
/// vanishes identically at lambda = 1, so detection divides it by
/// lambda (1 - lambda) and tests the parts of Q itself.
[[nodiscard]] inline CrossingScan crossing_scan(double omega_max, int samples, double tolerance = 1e-8) {
    if (!(omega_max > 0.0) || samples <= 0) {
        throw Error(ErrorCode::invalid_input, "crossing scan needs omega_max > 0 and a positive sample count");
    }
    CrossingScan out;
    out.samples = samples;
    for (int k = 1; k <= samples; ++k) {
        const double w = omega_max * k / samples;
        const double l = crossing_lambda(w);
        if (!(l > 0.0 && l < 1.0)) {
            continue;
        }
        ++out.in_range;
        const auto [r1, r2] = crossing_residuals(w, l);
        const double dir = crossing_direction(w, l);
        const double scale = l * (1.0 - l);
        const double q_residual = std::max(std::abs(r1), std::abs(r2)) / scale;
        out.smallest_residual = std::min(out.smallest_residual, q_residual);
        out.min_direction = std::min(out.min_direction, dir);
        const CrossingCandidate c{w, l, r1, r2, dir};
        if (std::abs(r1) < tolerance && std::abs(r2) < tolerance) {
            out.raw_hits.push_back(c);
        }
        if (q_residual < tolerance) {
            out.crossings.push_back(c);
        }
    }
    return out;
}

/// Uniform limit of lambda (1 - lambda) Q(s, lambda) / (1 - lambda) as lambda -> 1.
[[nodiscard]] inline complex limit_quasipolynomial(complex s) { return s - 2.0 + std::exp(-s) * (s + 2.0); }

[[nodiscard]] inline Quasipolynomial limit_quasipolynomial() {
    return Quasipolynomial({{Polynomial{-2.0, 1.0}, 0.0}, {Polynomial{2.0, 1.0}, 1.0}});
}

/// Positive solution of tan x = x in (k pi, (k + 1) pi), k >= 1, by bisection
/// on the pole-free form sin x - x cos x.
[[nodiscard]] inline double tan_fixed_point(int k) {
    if (k < 1) {
        throw Error(ErrorCode::invalid_input, "tan x = x bracket index must be at least 1");
    }
    auto f = [](double x) { return std::sin(x) - x * std::cos(x); };
    double lo = k * std::numbers::pi;
    double hi = (k + 1) * std::numbers::pi;
    double flo = f(lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// First `count` nontrivial roots 2 i zeta_k of the limit quasipolynomial
/// (upper half-plane members only).
[[nodiscard]] inline std::vector<complex> limit_roots(int count) {
    if (count <= 0) {
        throw Error(ErrorCode::invalid_input, "count must be positive");
    }
    std::vector<complex> roots;
    for (int k = 1; k <= count; ++k) {
        roots.emplace_back(0.0, 2.0 * tan_fixed_point(k));
    }
    return roots;
}

} // namespace middelay
