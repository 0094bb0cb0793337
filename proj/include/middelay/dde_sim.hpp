#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "middelay/error.hpp"
#include "middelay/mid_design.hpp"
#include "middelay/quasipoly.hpp"

namespace middelay {

/// y'(t) = -a0 y(t) + a1 y(t - tau1) + a2 y(t - tau2), tau1 < tau2.
struct LinearTwoDelaySystem {
    double a0 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double tau1 = 0.0;
    double tau2 = 0.0;

    void validate() const {
        if (!(tau1 > 0.0) || !(tau2 > tau1) || !std::isfinite(tau2)) {
            throw Error(ErrorCode::invalid_system, "delays must satisfy 0 < tau1 < tau2",
                        "tau1=" + std::to_string(tau1) + " tau2=" + std::to_string(tau2));
        }
        if (!std::isfinite(a0) || !std::isfinite(a1) || !std::isfinite(a2)) {
            throw Error(ErrorCode::invalid_system, "coefficients must be finite");
        }
    }

    [[nodiscard]] Quasipolynomial quasipolynomial() const {
        validate();
        return from_two_delay_system(a0, a1, a2, tau1, tau2);
    }
};

[[nodiscard]] inline LinearTwoDelaySystem to_linear_system(const TwoDelayDesign& d) {
    return {d.a0, d.a1, d.a2, d.tau1, d.tau2};
}

/// Hill-type production term g(y) = g0 theta^n y / (theta^n + y^n) with
/// maturation delay tau1 and lifespan T; the second delay is tau1 + T.
struct PlateletModel {
    double n = 0.0;
    double theta = 0.0;
    double gamma = 0.0;
    double g0 = 0.0;
    double tau1 = 0.0;
    double T = 0.0;

    [[nodiscard]] double tau2() const { return tau1 + T; }

    void validate() const {
        const double p[] = {n, theta, gamma, g0, tau1, T};
        for (double v : p) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw Error(ErrorCode::invalid_system, "platelet parameters must be positive and finite");
            }
        }
    }
};

/// Initial data on [-tau_max, 0].
struct HistoryFunction {
    std::function<double(double)> f;
    double tau_max = 0.0;

    [[nodiscard]] double operator()(double t) const { return f(t); }

    [[nodiscard]] static HistoryFunction constant(double value, double tau_max) {
        return {[value](double) { return value; }, tau_max};
    }

    /// Piecewise-cubic Hermite interpolation of samples with finite-difference slopes.
    [[nodiscard]] static HistoryFunction sampled(std::vector<double> times, std::vector<double> values) {
        if (times.size() != values.size() || times.size() < 2) {
            throw Error(ErrorCode::invalid_input, "sampled history needs at least two (t, y) pairs");
        }
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) {
                throw Error(ErrorCode::invalid_input, "history sample times must increase");
            }
        }
        if (times.back() != 0.0) {
            throw Error(ErrorCode::invalid_input, "history samples must end at t = 0");
        }
        const std::size_t m = times.size();
        std::vector<double> slopes(m);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = i + 1 == m ? m - 1 : i + 1;
            slopes[i] = (values[hi] - values[lo]) / (times[hi] - times[lo]);
        }
        if (m >= 3) {
            // second-order one-sided slopes at both ends
            auto one_sided = [&](std::size_t a, std::size_t b, std::size_t c) {
                const double h1 = times[b] - times[a];
                const double h2 = times[c] - times[b];
                return -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * values[a] + (h1 + h2) / (h1 * h2) * values[b] -
                       h1 / (h2 * (h1 + h2)) * values[c];
            };
            slopes[0] = one_sided(0, 1, 2);
            // mirrored: step backwards from the last sample
            const double h1 = times[m - 1] - times[m - 2];
            const double h2 = times[m - 2] - times[m - 3];
            slopes[m - 1] = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * values[m - 1] - (h1 + h2) / (h1 * h2) * values[m - 2] +
                            h1 / (h2 * (h1 + h2)) * values[m - 3];
        }
        const double tau_max = -times.front();
        auto f = [t = std::move(times), y = std::move(values), d = std::move(slopes)](double x) {
            if (x <= t.front()) {
                return y.front();
            }
            if (x >= t.back()) {
                return y.back();
            }
            const auto it = std::upper_bound(t.begin(), t.end(), x);
            const std::size_t j = static_cast<std::size_t>(it - t.begin()) - 1;
            const double h = t[j + 1] - t[j];
            const double u = (x - t[j]) / h;
            const double u2 = u * u;
            const double u3 = u2 * u;
            return (2 * u3 - 3 * u2 + 1) * y[j] + (u3 - 2 * u2 + u) * h * d[j] + (-2 * u3 + 3 * u2) * y[j + 1] +
                   (u3 - u2) * h * d[j + 1];
        };
        return {std::move(f), tau_max};
    }
};

/// Uniformly sampled solution. `deviations` holds y - reference with full
/// relative precision, which matters once the state has converged to the
/// reference beyond the resolution of y itself.
struct Trajectory {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> deviations;
    double dt = 0.0;
    double reference = 0.0;
    bool left_domain = false; // the state went negative (nonlinear model only)

    void write_csv(std::ostream& out) const {
        out << "t,y\n";
        char buf[64];
        for (std::size_t i = 0; i < times.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", times[i], values[i]);
            out << buf;
        }
    }
};

namespace detail {

// Step that divides tau1 exactly and, when tau2 / tau1 is rational with a
// small denominator, tau2 as well, so both breakpoint families are grid points.
inline double aligned_step(double dt, double tau1, double tau2) {
    const auto m0 = static_cast<long>(std::ceil(tau1 / dt - 1e-9));
    for (long m = m0; m <= 4 * m0; ++m) {
        const double k = tau2 * static_cast<double>(m) / tau1;
        if (std::abs(k - std::round(k)) <= 1e-9 * k) {
            return tau1 / static_cast<double>(m);
        }
    }
    return tau1 / static_cast<double>(m0);
}

inline void check_step(double tau1, double t_end, double dt) {
    if (!(t_end > 0.0) || !std::isfinite(t_end)) {
        throw Error(ErrorCode::invalid_input, "t_end must be positive", "t_end=" + std::to_string(t_end));
    }
    if (!(dt > 0.0) || dt > tau1 / 10.0 * (1.0 + 1e-12)) {
        throw Error(ErrorCode::invalid_input, "dt must lie in (0, tau1 / 10]",
                    "dt=" + std::to_string(dt) + " tau1=" + std::to_string(tau1));
    }
}

// Classical RK4 for z' = rhs(z, z(t - tau1), z(t - tau2)); delayed values come
// from the history for t <= 0 and from cubic Hermite interpolation of the
// computed samples and their derivatives otherwise.
template <class Rhs>
Trajectory integrate(Rhs&& rhs, const std::function<double(double)>& history, double tau1, double tau2, double t_end,
                     double dt) {
    const double h = aligned_step(dt, tau1, tau2);
    const auto steps = static_cast<std::size_t>(std::ceil(t_end / h - 1e-9));
    Trajectory out;
    out.dt = h;
    out.times.reserve(steps + 1);
    out.deviations.reserve(steps + 1);
    std::vector<double> slope;
    slope.reserve(steps + 1);

    auto delayed = [&](double t) {
        if (t <= 0.0) {
            return history(t);
        }
        auto j = static_cast<std::size_t>(t / h);
        j = std::min(j, out.deviations.size() - 2);
        const double u = (t - static_cast<double>(j) * h) / h;
        const double u2 = u * u;
        const double u3 = u2 * u;
        return (2 * u3 - 3 * u2 + 1) * out.deviations[j] + (u3 - 2 * u2 + u) * h * slope[j] +
               (-2 * u3 + 3 * u2) * out.deviations[j + 1] + (u3 - u2) * h * slope[j + 1];
    };
    auto f = [&](double t, double z) { return rhs(z, delayed(t - tau1), delayed(t - tau2)); };

    double z = history(0.0);
    out.times.push_back(0.0);
    out.deviations.push_back(z);
    slope.push_back(f(0.0, z));
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * h;
        const double k1 = slope.back();
        const double k2 = f(t + 0.5 * h, z + 0.5 * h * k1);
        const double k3 = f(t + 0.5 * h, z + 0.5 * h * k2);
        const double k4 = f(t + h, z + h * k3);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(z)) {
            throw Error(ErrorCode::evaluation_overflow, "solution overflowed", "t=" + std::to_string(t + h));
        }
        const double t_next = static_cast<double>(k + 1) * h;
        out.times.push_back(t_next);
        out.deviations.push_back(z);
        slope.push_back(f(t_next, z));
    }
    return out;
}

} // namespace detail

[[nodiscard]] inline Trajectory simulate_linear(const LinearTwoDelaySystem& sys, const HistoryFunction& history,
                                                double t_end, double dt) {
    sys.validate();
    detail::check_step(sys.tau1, t_end, dt);
    auto rhs = [&](double z, double z1, double z2) { return -sys.a0 * z + sys.a1 * z1 + sys.a2 * z2; };
    Trajectory out = detail::integrate(rhs, history.f, sys.tau1, sys.tau2, t_end, dt);
    out.values = out.deviations;
    return out;
}

[[nodiscard]] inline double hill_g(const PlateletModel& m, double y) {
    if (!(y >= 0.0)) {
        throw Error(ErrorCode::invalid_input, "g needs y >= 0", "y=" + std::to_string(y));
    }
    const double q = std::pow(y / m.theta, m.n);
    return m.g0 * y / (1.0 + q);
}

[[nodiscard]] inline double hill_g_prime(const PlateletModel& m, double y) {
    if (!(y > 0.0)) {
        throw Error(ErrorCode::invalid_input, "g' needs y > 0", "y=" + std::to_string(y));
    }
    const double q = std::pow(y / m.theta, m.n);
    return m.g0 * (1.0 + (1.0 - m.n) * q) / ((1.0 + q) * (1.0 + q));
}

/// Nonzero constant equilibrium of the uncontrolled model.
[[nodiscard]] inline double equilibrium(const PlateletModel& m) {
    m.validate();
    const double threshold = m.gamma / -std::expm1(-m.gamma * m.T);
    if (!(m.g0 > threshold)) {
        throw Error(ErrorCode::no_equilibrium, "g0 does not exceed gamma / (1 - exp(-gamma T))",
                    "g0=" + std::to_string(m.g0) + " threshold=" + std::to_string(threshold));
    }
    return m.theta * std::pow(m.g0 / threshold - 1.0, 1.0 / m.n);
}

/// Exact equilibrium y of the controlled model and the linear coefficients
/// of the delayed deviations there.
struct EquilibriumReference {
    double y = 0.0;
    double k1 = 0.0;
    double k2 = 0.0;
};

/// u(t) = u0 + alpha1 y(t - tau1) + alpha2 y(t - tau2). With a reference the
/// integration runs in deviation coordinates around it.
struct PlateletControl {
    double u0 = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    std::optional<EquilibriumReference> reference;
};

struct PlateletFeedback {
    double y_star = 0.0;
    double s0 = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double u0 = 0.0;
    double g_prime = 0.0;
    TwoDelayDesign design; // the pure MID gains that alpha1, alpha2 add to the linearization

    [[nodiscard]] PlateletControl control() const {
        return {u0, alpha1, alpha2, EquilibriumReference{y_star, design.a1, design.a2}};
    }
};

[[nodiscard]] inline PlateletFeedback design_platelet_feedback(const PlateletModel& m, double y_star) {
    m.validate();
    const double gp = hill_g_prime(m, y_star);
    const double decay = std::exp(-m.gamma * m.T);
    PlateletFeedback fb;
    fb.y_star = y_star;
    fb.g_prime = gp;
    fb.design = design_two_delay(m.gamma, m.tau1, m.tau2());
    fb.s0 = fb.design.s0;
    fb.alpha1 = -gp + fb.design.a1;
    fb.alpha2 = gp * decay + fb.design.a2;
    fb.u0 = (m.gamma - fb.alpha1 - fb.alpha2) * y_star + std::expm1(-m.gamma * m.T) * hill_g(m, y_star);
    return fb;
}

/// Linearization at y_star for arbitrary feedback gains.
[[nodiscard]] inline LinearTwoDelaySystem linearize_platelet(const PlateletModel& m, double y_star, double alpha1,
                                                             double alpha2) {
    m.validate();
    const double gp = hill_g_prime(m, y_star);
    return {m.gamma, alpha1 + gp, alpha2 - gp * std::exp(-m.gamma * m.T), m.tau1, m.tau2()};
}

/// Linearization under the designed feedback, using the MID gains directly:
/// alpha2 - g'(y*) exp(-gamma T) cancels to about 1e-28 for the reference
/// model, far below the rounding error of the subtraction.
[[nodiscard]] inline LinearTwoDelaySystem linearize_platelet(const PlateletModel& m, const PlateletFeedback& fb) {
    m.validate();
    return {m.gamma, fb.design.a1, fb.design.a2, m.tau1, m.tau2()};
}

namespace detail {

// (1 + u)^n - 1 - n u without cancellation.
inline double binomial_tail(double u, double n) {
    if (std::abs(u) > 0.1) {
        return std::expm1(n * std::log1p(u)) - n * u;
    }
    double term = n * (n - 1.0) / 2.0 * u * u;
    double sum = 0.0;
    for (int k = 2; k < 60 && std::abs(term) > 1e-18 * std::abs(sum); ++k) {
        sum += term;
        term *= (n - k) / (k + 1.0) * u;
    }
    return sum;
}

// g(r + z) - g(r) - g'(r) z with small relative error for small z; arguments
// below zero are clamped to zero.
inline double hill_remainder(const PlateletModel& m, double r, double z) {
    if (r + z <= 0.0) {
        return -hill_g(m, r) - (r > 0.0 ? hill_g_prime(m, r) : m.g0) * z;
    }
    if (r == 0.0) {
        const double q = std::pow(z / m.theta, m.n);
        return -m.g0 * z * q / (1.0 + q);
    }
    const double u = z / r;
    const double qr = std::pow(r / m.theta, m.n);
    const double e1 = binomial_tail(u, m.n);
    const double e = m.n * u + e1;
    const double d0 = 1.0 + qr;
    const double d1 = d0 + qr * e;
    return -m.g0 * qr / (d1 * d0) * (z * (1.0 + qr - m.n * qr) * e / d0 + r * e1);
}

} // namespace detail

/// Integrates y' = -gamma y + g(y(t - tau1)) - g(y(t - tau2)) exp(-gamma T) + u(t).
/// Negative delayed states enter g as zero and set `left_domain`.
[[nodiscard]] inline Trajectory simulate_platelet(const PlateletModel& m, const PlateletControl& c,
                                                  const HistoryFunction& history, double t_end, double dt) {
    m.validate();
    detail::check_step(m.tau1, t_end, dt);
    const double decay = std::exp(-m.gamma * m.T);
    const double tol = 1e-12;
    bool left = false;

    const double r = c.reference ? c.reference->y : 0.0;
    double k1 = 0.0;
    double k2 = 0.0;
    double constant = 0.0;
    if (c.reference) {
        if (!(r > 0.0)) {
            throw Error(ErrorCode::invalid_input, "reference equilibrium must be positive");
        }
        k1 = c.reference->k1;
        k2 = c.reference->k2;
    } else {
        k1 = m.g0 + c.alpha1;
        k2 = c.alpha2 - m.g0 * decay;
        constant = c.u0;
    }
    auto rhs = [&](double z, double z1, double z2) {
        if (r + z < -tol || r + z1 < -tol || r + z2 < -tol) {
            left = true;
        }
        return constant - m.gamma * z + k1 * z1 + k2 * z2 + detail::hill_remainder(m, r, z1) -
               detail::hill_remainder(m, r, z2) * decay;
    };
    auto shifted = [&](double t) {
        const double y = history(t);
        if (!(y >= 0.0)) {
            throw Error(ErrorCode::invalid_input, "history must be nonnegative", "t=" + std::to_string(t));
        }
        return y - r;
    };
    Trajectory out = detail::integrate(rhs, shifted, m.tau1, m.tau2(), t_end, dt);
    out.reference = r;
    out.left_domain = left;
    out.values.reserve(out.deviations.size());
    for (double z : out.deviations) {
        out.values.push_back(r + z);
    }
    return out;
}

struct DecayFitOptions {
    std::optional<double> t_begin; // default: start of the last 60% of the trajectory
    std::optional<double> t_end;
    double envelope_power = 0.0; // fits log|y - target| - p log t, for a root of multiplicity p + 1
};

/// Least-squares exponential rate of |y - target|: fitted through the local
/// maxima when the tail oscillates, through every sample when it is monotone.
[[nodiscard]] inline double estimate_decay_rate(const Trajectory& traj, double target, const DecayFitOptions& o = {}) {
    if (traj.times.size() < 3) {
        throw Error(ErrorCode::insufficient_extrema, "trajectory too short");
    }
    const double t_last = traj.times.back();
    const double lo = o.t_begin.value_or(0.4 * t_last);
    const double hi = o.t_end.value_or(t_last);
    const bool use_deviation = target == traj.reference;

    std::vector<double> ts;
    std::vector<double> logs;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const double t = traj.times[i];
        if (t < lo || t > hi) {
            continue;
        }
        const double d = std::abs(use_deviation ? traj.deviations[i] : traj.values[i] - target);
        if (d < 1e-300) {
            break; // underflow: drop the rest of the window
        }
        ts.push_back(t);
        logs.push_back(std::log(d) - (o.envelope_power != 0.0 ? o.envelope_power * std::log(t) : 0.0));
    }
    if (ts.size() < 5) {
        throw Error(ErrorCode::insufficient_extrema, "fewer than five usable samples in the fit window");
    }

    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 1; i + 1 < ts.size(); ++i) {
        if (logs[i] > logs[i - 1] && logs[i] >= logs[i + 1]) {
            xs.push_back(ts[i]);
            ys.push_back(logs[i]);
        }
    }
    if (xs.size() < 5) {
        const bool falling = std::adjacent_find(logs.begin(), logs.end(), std::less<>()) == logs.end();
        const bool rising = std::adjacent_find(logs.begin(), logs.end(), std::greater<>()) == logs.end();
        if (!falling && !rising) {
            throw Error(ErrorCode::insufficient_extrema, "fewer than five extrema and a non-monotone tail",
                        "extrema=" + std::to_string(xs.size()));
        }
        xs = ts;
        ys = logs;
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    return sxy / sxx;
}

} // namespace middelay
