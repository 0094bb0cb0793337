#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "middelay/error.hpp"
#include "middelay/quasipoly.hpp"

namespace middelay {

/// Double root s_star for s + a0 - a1 exp(-s tau1).
struct OneDelayDesign {
    double a0 = 0.0;
    double tau1 = 0.0;
    double s_star = 0.0;
    double a1 = 0.0;

    [[nodiscard]] Quasipolynomial quasipolynomial() const {
        const double g[] = {a1};
        const double d[] = {tau1};
        return feedback_system(a0, g, d);
    }
};

/// Triple root s0 for s + a0 - a1 exp(-s tau1) - a2 exp(-s tau2), tau1 < tau2.
struct TwoDelayDesign {
    double a0 = 0.0;
    double tau1 = 0.0;
    double tau2 = 0.0;
    double s0 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;

    [[nodiscard]] Quasipolynomial quasipolynomial() const { return from_two_delay_system(a0, a1, a2, tau1, tau2); }
};

/// Q(s) = s + a0_t + a1_t exp(-lambda s) + a2_t exp(-s), obtained from a
/// two-delay system by s = s0 + z / tau2.
struct NormalizedSystem {
    double lambda = 0.0;
    double a0_t = 0.0;
    double a1_t = 0.0;
    double a2_t = 0.0;

    [[nodiscard]] Quasipolynomial quasipolynomial() const {
        const double g[] = {a1_t, a2_t};
        const double d[] = {lambda, 1.0};
        return feedback_system(a0_t, g, d, GainSign::plus);
    }
};

namespace detail {
inline void require_positive_delay(double tau, const char* name) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorCode::invalid_system, std::string(name) + " must be positive and finite",
                    std::string(name) + "=" + std::to_string(tau));
    }
}
} // namespace detail

[[nodiscard]] inline OneDelayDesign design_one_delay(double a0, double tau1) {
    detail::require_positive_delay(tau1, "tau1");
    return {a0, tau1, -a0 - 1.0 / tau1, -std::exp(-1.0 - tau1 * a0) / tau1};
}

[[nodiscard]] inline TwoDelayDesign design_two_delay(double a0, double tau1, double tau2) {
    detail::require_positive_delay(tau1, "tau1");
    detail::require_positive_delay(tau2, "tau2");
    if (tau1 == tau2) {
        throw Error(ErrorCode::invalid_system, "the two delays must differ", "tau=" + std::to_string(tau1));
    }
    if (tau1 > tau2) {
        std::swap(tau1, tau2);
    }
    TwoDelayDesign d{a0, tau1, tau2, 0.0, 0.0, 0.0};
    d.s0 = -a0 - 1.0 / tau1 - 1.0 / tau2;
    d.a1 = -tau2 * std::exp(d.s0 * tau1) / (tau1 * (tau2 - tau1));
    d.a2 = tau1 * std::exp(d.s0 * tau2) / (tau2 * (tau2 - tau1));
    return d;
}

[[nodiscard]] inline NormalizedSystem normalize(const TwoDelayDesign& d) {
    detail::require_positive_delay(d.tau1, "tau1");
    if (!(d.tau1 < d.tau2)) {
        throw Error(ErrorCode::invalid_system, "normalization needs tau1 < tau2");
    }
    return {d.tau1 / d.tau2, (d.s0 + d.a0) * d.tau2, -d.a1 * d.tau2 * std::exp(-d.s0 * d.tau1),
            -d.a2 * d.tau2 * std::exp(-d.s0 * d.tau2)};
}

/// Closed-form normalized coefficients of a maximal-multiplicity design.
[[nodiscard]] inline NormalizedSystem normalized_mid_system(double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw Error(ErrorCode::invalid_input, "lambda must lie in (0, 1)", "lambda=" + std::to_string(lambda));
    }
    return {lambda, -(lambda + 1.0) / lambda, -1.0 / (lambda * (lambda - 1.0)), lambda / (lambda - 1.0)};
}

/// Q(s, lambda) = s - (lambda+1)/lambda - lambda/(1-lambda) e^{-s} + e^{-lambda s} / (lambda (1-lambda)).
[[nodiscard]] inline complex normalized_Q(complex s, double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw Error(ErrorCode::invalid_input, "lambda must lie in (0, 1)", "lambda=" + std::to_string(lambda));
    }
    return s - (lambda + 1.0) / lambda - (lambda / (1.0 - lambda)) * std::exp(-s) +
           std::exp(-lambda * s) / (lambda * (1.0 - lambda));
}

[[nodiscard]] inline Quasipolynomial normalized_quasipolynomial(double lambda) {
    return normalized_mid_system(lambda).quasipolynomial();
}

struct MultiplicitySolution {
    double a0 = 0.0;
    std::vector<double> gains;
    std::vector<double> delays;
    double s0 = 0.0;
    double residual = 0.0; // scaled least-squares residual

    [[nodiscard]] Quasipolynomial quasipolynomial() const { return feedback_system(a0, gains, delays); }
};

/// Gains a_1..a_N making s0 a root of multiplicity N + 1 of
/// s + a0 - sum a_i exp(-s tau_i). With b_i = a_i exp(-s0 tau_i) the
/// conditions are sum_i b_i (-tau_i)^k = [k = 0](s0 + a0) + [k = 1], k = 0..N.
/// With a0 given the system is overdetermined by one row and solved in the
/// least-squares sense; an inconsistent (a0, s0) pair is rejected. Without
/// a0 it is square and a0 is returned as part of the solution.
[[nodiscard]] inline MultiplicitySolution solve_multiplicity_system(std::optional<double> a0,
                                                                    std::span<const double> delays, double s0) {
    const std::size_t n = delays.size();
    if (n == 0) {
        throw Error(ErrorCode::invalid_system, "at least one delay is required");
    }
    for (std::size_t i = 0; i < n; ++i) {
        detail::require_positive_delay(delays[i], "delay");
        for (std::size_t j = 0; j < i; ++j) {
            if (delays[i] == delays[j]) {
                throw Error(ErrorCode::invalid_system, "delays must be pairwise distinct");
            }
        }
    }
    const bool free_a0 = !a0.has_value();
    const auto rows = static_cast<Eigen::Index>(n + 1);
    const auto cols = static_cast<Eigen::Index>(free_a0 ? n + 1 : n);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, cols);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows);
    double tmax = 0.0;
    for (double t : delays) {
        tmax = std::max(tmax, t);
    }
    for (Eigen::Index k = 0; k < rows; ++k) {
        const double scale = std::pow(tmax, static_cast<double>(k));
        for (std::size_t i = 0; i < n; ++i) {
            A(k, static_cast<Eigen::Index>(i)) = std::pow(-delays[i], static_cast<double>(k)) / scale;
        }
    }
    if (free_a0) {
        A(0, cols - 1) = -1.0;
        rhs(0) = s0;
    } else {
        rhs(0) = s0 + *a0;
    }
    rhs(1) += 1.0 / tmax;

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < cols) {
        throw Error(ErrorCode::singular_system, "multiplicity system is rank deficient");
    }
    Eigen::VectorXd x = qr.solve(rhs);
    // one step of iterative refinement against the clustered-delay conditioning
    x += qr.solve(rhs - A * x);
    const double residual = (A * x - rhs).norm() / std::max(1.0, rhs.norm());
    if (!(residual <= 1e-9)) {
        throw Error(ErrorCode::inconsistent_target, "no gains give the requested root with this a0",
                    "residual=" + std::to_string(residual));
    }
    MultiplicitySolution out;
    out.a0 = free_a0 ? x(cols - 1) : *a0;
    out.s0 = s0;
    out.residual = residual;
    out.delays.assign(delays.begin(), delays.end());
    for (std::size_t i = 0; i < n; ++i) {
        out.gains.push_back(x(static_cast<Eigen::Index>(i)) * std::exp(s0 * delays[i]));
    }
    return out;
}

struct MultiplicityReport {
    complex s0;
    unsigned multiplicity = 0;
    std::vector<double> derivative_moduli; // |Delta^(k)(s0)|, k = 0..multiplicity
    std::vector<double> tolerances;        // 1e-9 (1 + |s0|^k)
    bool passed = false;
};

/// Checks that s0 is a root of multiplicity exactly m: the first m
/// derivatives vanish within tolerance and the m-th does not.
[[nodiscard]] inline MultiplicityReport verify_multiplicity(const Quasipolynomial& qp, complex s0, unsigned m) {
    if (m == 0) {
        throw Error(ErrorCode::invalid_input, "multiplicity must be positive");
    }
    const std::size_t bound = degree(qp);
    if (m > bound) {
        throw Error(ErrorCode::multiplicity_exceeds_bound, "requested multiplicity exceeds the degree bound",
                    "m=" + std::to_string(m) + " degree=" + std::to_string(bound));
    }
    MultiplicityReport r;
    r.s0 = s0;
    r.multiplicity = m;
    r.passed = true;
    Quasipolynomial d = qp;
    for (unsigned k = 0; k <= m; ++k) {
        const double value = std::abs(d(s0));
        const double tol = 1e-9 * (1.0 + std::pow(std::abs(s0), static_cast<double>(k)));
        r.derivative_moduli.push_back(value);
        r.tolerances.push_back(tol);
        r.passed = r.passed && (k < m ? value <= tol : value > tol);
        d = derivative(d);
    }
    return r;
}

} // namespace middelay
