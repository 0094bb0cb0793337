#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_min.h>
#include <gsl/gsl_multimin.h>

#include "middelay/error.hpp"
#include "middelay/mid_design.hpp"
#include "middelay/quasipoly.hpp"
#include "middelay/rootfinding.hpp"

namespace middelay {

/// l1 budget on the feedback gains.
struct GainBudget {
    double bound = 1.0;

    void validate() const {
        if (!(bound > 0.0) || !std::isfinite(bound)) {
            throw Error(ErrorCode::invalid_input, "gain budget must be positive", "bound=" + std::to_string(bound));
        }
    }
};

enum class Family { no_delay, one_delay, two_delay_mid, free_gains_scan };

[[nodiscard]] constexpr std::string_view to_string(Family f) noexcept {
    switch (f) {
    case Family::no_delay: return "no_delay";
    case Family::one_delay: return "one_delay";
    case Family::two_delay_mid: return "two_delay_mid";
    case Family::free_gains_scan: return "free_gains_scan";
    }
    return "unknown";
}

struct OptimizationResult {
    Family family = Family::no_delay;
    std::map<std::string, double> parameters;
    double abscissa = 0.0;
    double certified_abscissa = std::numeric_limits<double>::quiet_NaN(); // from rootfinding
    bool feasible = false;
    long evaluations = 0;
    bool counterexample = false; // conjecture scan only
};

/// One line of optimizer progress, for streaming front ends.
struct ProgressEvent {
    std::string stage;
    long index = 0;
    long total = 0;
    std::map<std::string, double> values;
};

using ProgressSink = std::function<void(const ProgressEvent&)>;

namespace detail {

inline double certified(const Quasipolynomial& qp) { return certify_spectral_abscissa(qp).abscissa; }

// Gains of the two-delay design with a0 = 0 for an unordered delay pair.
struct MidPoint {
    double s0 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double total = std::numeric_limits<double>::infinity();
};

inline MidPoint mid_point(double t1, double t2) {
    if (!(t1 > 0.0) || !(t2 > 0.0) || t1 == t2 || !std::isfinite(t1) || !std::isfinite(t2)) {
        return {};
    }
    const auto d = design_two_delay(0.0, t1, t2);
    return {d.s0, d.a1, d.a2, std::abs(d.a1) + std::abs(d.a2)};
}

// Runs body(i) for i in [0, n) on all hardware threads; the first exception is rethrown.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                             static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex lock;
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                const std::lock_guard<std::mutex> guard(lock);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) {
        pool.emplace_back(run);
    }
    run();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

struct GslErrorHandlerGuard {
    gsl_error_handler_t* previous = gsl_set_error_handler_off();
    ~GslErrorHandlerGuard() { gsl_set_error_handler(previous); }
};

} // namespace detail

/// u = a y without delay: the closed loop is s - a, so a = -bound.
[[nodiscard]] inline OptimizationResult optimize_no_delay(const GainBudget& budget) {
    budget.validate();
    OptimizationResult r;
    r.family = Family::no_delay;
    r.parameters["a"] = -budget.bound;
    r.abscissa = -budget.bound;
    r.feasible = true;
    r.evaluations = 1;
    r.certified_abscissa = detail::certified(feedback_system(budget.bound, {}, {}));
    return r;
}

/// u = a y(t - tau): the double-root design with a0 = 0 has abscissa -1/tau and
/// gain e^{-1}/tau, so the budget is active at tau = 1/(e bound). The closed
/// form is cross-checked by a log-grid scan and golden-section refinement.
[[nodiscard]] inline OptimizationResult optimize_one_delay(const GainBudget& budget) {
    budget.validate();
    const double b = budget.bound;
    const double inv_e = std::exp(-1.0);
    long evaluations = 0;
    auto objective = [&](double tau) {
        ++evaluations;
        return -1.0 / tau + 1e6 * std::max(0.0, inv_e / tau - b);
    };

    const int n = 200;
    const double lo = std::log(1e-3 / b);
    const double hi = std::log(1e2 / b);
    std::vector<double> taus(n);
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) {
        taus[i] = std::exp(lo + (hi - lo) * i / (n - 1));
        values[i] = objective(taus[i]);
    }
    const auto best = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
    double tau_numeric = taus[best];
    if (best > 0 && best < n - 1) {
        const detail::GslErrorHandlerGuard guard;
        gsl_function fn;
        fn.function = [](double x, void* p) { return (*static_cast<decltype(objective)*>(p))(x); };
        fn.params = &objective;
        std::unique_ptr<gsl_min_fminimizer, decltype(&gsl_min_fminimizer_free)> m(
            gsl_min_fminimizer_alloc(gsl_min_fminimizer_goldensection), gsl_min_fminimizer_free);
        if (gsl_min_fminimizer_set_with_values(m.get(), &fn, taus[best], values[best], taus[best - 1],
                                               values[best - 1], taus[best + 1], values[best + 1]) == GSL_SUCCESS) {
            for (int it = 0; it < 200; ++it) {
                if (gsl_min_fminimizer_iterate(m.get()) != GSL_SUCCESS) {
                    break;
                }
                const double a = gsl_min_fminimizer_x_lower(m.get());
                const double c = gsl_min_fminimizer_x_upper(m.get());
                if (gsl_min_test_interval(a, c, 1e-14, 0.0) == GSL_SUCCESS) {
                    break;
                }
            }
            tau_numeric = gsl_min_fminimizer_x_minimum(m.get());
        }
    }

    const double tau = 1.0 / (std::numbers::e * b);
    OptimizationResult r;
    r.family = Family::one_delay;
    r.parameters["a"] = -b;
    r.parameters["tau"] = tau;
    r.parameters["tau_numeric"] = tau_numeric;
    r.abscissa = -std::numbers::e * b;
    r.feasible = true;
    r.evaluations = evaluations;
    r.certified_abscissa = detail::certified(design_one_delay(0.0, tau).quasipolynomial());
    return r;
}

struct TwoDelayOptions {
    int grid_points = 60;          // per axis over (0.05, 3]
    double residual_gate = 1e-9;   // constraint violation accepted from the penalty loop
    double initial_penalty = 1e2;
    int max_penalty_doublings = 60;
    int max_simplex_iterations = 4000;
};

/// Minimizes s0 = -1/tau1 - 1/tau2 over MID designs with a0 = 0 subject to
/// |a1| + |a2| <= bound.
[[nodiscard]] inline OptimizationResult optimize_two_delay_mid(const GainBudget& budget, const TwoDelayOptions& o = {},
                                                               const ProgressSink& progress = {}) {
    budget.validate();
    const double b = budget.bound;
    long evaluations = 0;

    // coarse grid; ties keep the lexicographically first pair
    double best_t1 = 0.0;
    double best_t2 = 0.0;
    double best = std::numeric_limits<double>::infinity();
    const long total = static_cast<long>(o.grid_points) * o.grid_points;
    for (int i = 0; i < o.grid_points; ++i) {
        const double t1 = 0.05 + (3.0 - 0.05) * (i + 1) / o.grid_points;
        for (int j = 0; j < o.grid_points; ++j) {
            const double t2 = 0.05 + (3.0 - 0.05) * (j + 1) / o.grid_points;
            ++evaluations;
            if (t1 >= t2) {
                continue;
            }
            const auto p = detail::mid_point(t1, t2);
            if (p.total <= b && p.s0 < best) {
                best = p.s0;
                best_t1 = t1;
                best_t2 = t2;
            }
            if (progress) {
                progress({"grid", static_cast<long>(i) * o.grid_points + j, total,
                          {{"tau1", t1}, {"tau2", t2}, {"s0", p.s0}, {"gain_l1", p.total}}});
            }
        }
    }
    if (!std::isfinite(best)) {
        // every grid pair violates the budget; delays grow until one fits
        best_t1 = 1.0;
        best_t2 = 2.0;
        const auto p = detail::mid_point(best_t1, best_t2);
        const double k = std::max(1.0, p.total / b) * 1.01;
        best_t1 *= k;
        best_t2 *= k;
    }

    // penalized Nelder-Mead in log-delay coordinates
    struct Ctx {
        double bound;
        double weight;
        long* evaluations;
    } ctx{b, o.initial_penalty, &evaluations};
    gsl_multimin_function fn;
    fn.n = 2;
    fn.params = &ctx;
    fn.f = [](const gsl_vector* x, void* params) {
        auto* c = static_cast<Ctx*>(params);
        ++*c->evaluations;
        const auto p = detail::mid_point(std::exp(gsl_vector_get(x, 0)), std::exp(gsl_vector_get(x, 1)));
        if (!std::isfinite(p.total)) {
            return 1e300;
        }
        const double v = std::max(0.0, p.total - c->bound);
        return p.s0 + c->weight * v * v;
    };
    const detail::GslErrorHandlerGuard guard;
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(2), gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(2), gsl_vector_free);
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> nm(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2), gsl_multimin_fminimizer_free);
    gsl_vector_set(x.get(), 0, std::log(best_t1));
    gsl_vector_set(x.get(), 1, std::log(best_t2));

    double t1 = best_t1;
    double t2 = best_t2;
    double violation = std::numeric_limits<double>::infinity();
    for (int round = 0; round <= o.max_penalty_doublings; ++round, ctx.weight *= 2.0) {
        gsl_vector_set_all(step.get(), round == 0 ? 0.05 : 1e-3);
        gsl_multimin_fminimizer_set(nm.get(), &fn, x.get(), step.get());
        for (int it = 0; it < o.max_simplex_iterations; ++it) {
            if (gsl_multimin_fminimizer_iterate(nm.get()) != GSL_SUCCESS) {
                break;
            }
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(nm.get()), 1e-13) == GSL_SUCCESS) {
                break;
            }
        }
        gsl_vector_memcpy(x.get(), gsl_multimin_fminimizer_x(nm.get()));
        t1 = std::exp(gsl_vector_get(x.get(), 0));
        t2 = std::exp(gsl_vector_get(x.get(), 1));
        const auto p = detail::mid_point(t1, t2);
        violation = std::max(0.0, p.total - b);
        if (progress) {
            progress({"penalty", round, o.max_penalty_doublings + 1,
                      {{"tau1", std::min(t1, t2)}, {"tau2", std::max(t1, t2)}, {"s0", p.s0}, {"weight", ctx.weight},
                       {"violation", violation}}});
        }
        if (violation < o.residual_gate) {
            break;
        }
    }
    if (t1 > t2) {
        std::swap(t1, t2);
    }

    // Scaling both delays by k divides every gain by k (a0 = 0), so the ray
    // k >= 1 leads back into the feasible set; bisect to the boundary.
    auto p = detail::mid_point(t1, t2);
    if (p.total > b) {
        double lo = 1.0;
        double hi = p.total / b * (1.0 + 1e-12);
        for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            ++evaluations;
            (detail::mid_point(mid * t1, mid * t2).total <= b ? hi : lo) = mid;
        }
        t1 *= hi;
        t2 *= hi;
        p = detail::mid_point(t1, t2);
    }

    OptimizationResult r;
    r.family = Family::two_delay_mid;
    r.parameters = {{"tau1", t1}, {"tau2", t2}, {"a1", p.a1}, {"a2", p.a2}, {"gain_l1", p.total}};
    r.abscissa = p.s0;
    r.feasible = p.total <= b * (1.0 + 1e-9);
    r.evaluations = evaluations;
    r.certified_abscissa = detail::certified(design_two_delay(0.0, t1, t2).quasipolynomial());
    return r;
}

/// Spectral abscissa of s - a1 exp(-s tau1) - a2 exp(-s tau2) over a square
/// gain grid centred on the MID gains. Reports, never asserts: the flag
/// `counterexample` marks a grid point beating s0 by more than `tolerance`.
[[nodiscard]] inline OptimizationResult conjecture_scan(double tau1, double tau2, double halfwidth, int grid_points,
                                                        double tolerance = 1e-6, const ProgressSink& progress = {}) {
    if (!(tau1 > 0.0) || !(tau2 > tau1)) {
        throw Error(ErrorCode::invalid_input, "conjecture scan needs 0 < tau1 < tau2");
    }
    if (!(halfwidth >= 0.0) || grid_points < 3) {
        throw Error(ErrorCode::invalid_input, "conjecture scan needs halfwidth >= 0 and at least 3 points per axis");
    }
    const auto mid = design_two_delay(0.0, tau1, tau2);
    const auto n = static_cast<std::size_t>(grid_points);
    std::vector<double> values(n * n);
    std::vector<double> g1(n);
    std::vector<double> g2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double offset = halfwidth * (2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0);
        g1[i] = mid.a1 + offset;
        g2[i] = mid.a2 + offset;
    }
    std::mutex report;
    std::atomic<long> done{0};
    detail::parallel_for(n * n, [&](std::size_t k) {
        const std::size_t i = k / n;
        const std::size_t j = k % n;
        values[k] = detail::certified(from_two_delay_system(0.0, g1[i], g2[j], tau1, tau2));
        const long finished = ++done;
        if (progress) {
            const std::lock_guard<std::mutex> guard(report);
            progress({"scan", finished, static_cast<long>(n * n), {{"a1", g1[i]}, {"a2", g2[j]}, {"abscissa", values[k]}}});
        }
    });

    // minimum with ties broken by (a1, a2) order, independent of thread timing
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] < values[best]) {
            best = k;
        }
    }
    OptimizationResult r;
    r.family = Family::free_gains_scan;
    r.parameters = {{"tau1", tau1},
                    {"tau2", tau2},
                    {"a1", g1[best / n]},
                    {"a2", g2[best % n]},
                    {"mid_a1", mid.a1},
                    {"mid_a2", mid.a2},
                    {"mid_s0", mid.s0},
                    {"halfwidth", halfwidth}};
    r.abscissa = values[best];
    r.certified_abscissa = values[best];
    r.feasible = true;
    r.evaluations = static_cast<long>(values.size());
    r.counterexample = values[best] < mid.s0 - tolerance;
    return r;
}

} // namespace middelay
