#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "middelay/error.hpp"

namespace middelay {

using complex = std::complex<double>;

/// Real polynomial, coefficient k multiplies s^k. Trailing zeros are trimmed
/// on construction so `degree()` is the index of the last nonzero coefficient.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<double> coefficients) : coeffs_(std::move(coefficients)) { trim(); }
    Polynomial(std::initializer_list<double> coefficients) : coeffs_(coefficients) { trim(); }

    [[nodiscard]] bool is_zero() const noexcept { return coeffs_.empty(); }

    /// Degree of the zero polynomial is reported as 0; callers that care test is_zero().
    [[nodiscard]] std::size_t degree() const noexcept { return coeffs_.empty() ? 0 : coeffs_.size() - 1; }

    [[nodiscard]] std::span<const double> coefficients() const noexcept { return coeffs_; }
    [[nodiscard]] double operator[](std::size_t k) const noexcept { return k < coeffs_.size() ? coeffs_[k] : 0.0; }

    template <typename T>
    [[nodiscard]] T operator()(const T& s) const {
        T acc{0.0};
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) {
            acc = acc * s + *it;
        }
        return acc;
    }

    [[nodiscard]] Polynomial derivative() const {
        if (coeffs_.size() <= 1) {
            return {};
        }
        std::vector<double> d(coeffs_.size() - 1);
        for (std::size_t k = 1; k < coeffs_.size(); ++k) {
            d[k - 1] = static_cast<double>(k) * coeffs_[k];
        }
        return Polynomial(std::move(d));
    }

    friend Polynomial operator-(const Polynomial& a, const Polynomial& b) {
        std::vector<double> r(std::max(a.coeffs_.size(), b.coeffs_.size()), 0.0);
        for (std::size_t k = 0; k < r.size(); ++k) {
            r[k] = a[k] - b[k];
        }
        return Polynomial(std::move(r));
    }

    friend Polynomial operator*(double c, const Polynomial& p) {
        std::vector<double> r(p.coeffs_);
        for (double& v : r) {
            v *= c;
        }
        return Polynomial(std::move(r));
    }

    friend bool operator==(const Polynomial&, const Polynomial&) = default;

private:
    void trim() {
        while (!coeffs_.empty() && coeffs_.back() == 0.0) {
            coeffs_.pop_back();
        }
    }

    std::vector<double> coeffs_;
};

struct QuasiTerm {
    Polynomial poly;
    double delay = 0.0;

    friend bool operator==(const QuasiTerm&, const QuasiTerm&) = default;
};

/// Horizontal strip {s : im_low <= Im(s) <= im_high}.
struct HorizontalStrip {
    double im_low = 0.0;
    double im_high = 0.0;
};

/// Value and first derivative of a quasipolynomial at one point, plus the sum
/// of term magnitudes (the natural scale for residual tests).
struct QuasiSample {
    complex value;
    complex derivative;
    double scale = 0.0;
};

/// Delta(s) = sum_j p_j(s) exp(-s tau_j) with pairwise distinct delays tau_j >= 0,
/// stored in increasing delay order. Terms whose polynomial is zero are dropped.
class Quasipolynomial {
public:
    Quasipolynomial() = default;

    explicit Quasipolynomial(std::vector<QuasiTerm> terms) : terms_(std::move(terms)) {
        std::erase_if(terms_, [](const QuasiTerm& t) { return t.poly.is_zero(); });
        for (const auto& t : terms_) {
            if (!std::isfinite(t.delay) || t.delay < 0.0) {
                throw Error(ErrorCode::invalid_input, "quasipolynomial delays must be finite and nonnegative",
                            "delay=" + std::to_string(t.delay));
            }
            for (double c : t.poly.coefficients()) {
                if (!std::isfinite(c)) {
                    throw Error(ErrorCode::invalid_input, "quasipolynomial coefficients must be finite");
                }
            }
        }
        std::sort(terms_.begin(), terms_.end(),
                  [](const QuasiTerm& a, const QuasiTerm& b) { return a.delay < b.delay; });
        for (std::size_t j = 1; j < terms_.size(); ++j) {
            if (terms_[j].delay == terms_[j - 1].delay) {
                throw Error(ErrorCode::invalid_input, "quasipolynomial delays must be pairwise distinct",
                            "delay=" + std::to_string(terms_[j].delay));
            }
        }
    }

    [[nodiscard]] std::span<const QuasiTerm> terms() const noexcept { return terms_; }
    [[nodiscard]] bool is_zero() const noexcept { return terms_.empty(); }

    [[nodiscard]] complex operator()(complex s) const {
        complex acc{0.0, 0.0};
        for (const auto& t : terms_) {
            acc += t.poly(s) * exp_delay(s, t.delay);
        }
        return acc;
    }

    /// Evaluates Delta and Delta' together, sharing the exponentials.
    [[nodiscard]] QuasiSample sample(complex s) const {
        QuasiSample out{};
        for (const auto& t : terms_) {
            const complex e = exp_delay(s, t.delay);
            const complex p = t.poly(s);
            const complex dp = derivative_at(t.poly, s);
            const complex term = p * e;
            out.value += term;
            out.derivative += (dp - t.delay * p) * e;
            out.scale += std::abs(term);
        }
        return out;
    }

    /// Sum of |p_j(s) exp(-s tau_j)|.
    [[nodiscard]] double scale(complex s) const {
        double acc = 0.0;
        for (const auto& t : terms_) {
            acc += std::abs(t.poly(s) * exp_delay(s, t.delay));
        }
        return acc;
    }

    friend bool operator==(const Quasipolynomial&, const Quasipolynomial&) = default;

private:
    static complex exp_delay(complex s, double delay) {
        if (delay == 0.0) {
            return {1.0, 0.0};
        }
        return std::exp(-s * delay);
    }

    static complex derivative_at(const Polynomial& p, complex s) {
        const auto c = p.coefficients();
        complex acc{0.0, 0.0};
        for (std::size_t k = c.size(); k-- > 1;) {
            acc = acc * s + static_cast<double>(k) * c[k];
        }
        return acc;
    }

    std::vector<QuasiTerm> terms_;
};

[[nodiscard]] inline complex evaluate(const Quasipolynomial& qp, complex s) { return qp(s); }

/// Order-th derivative; each differentiation maps (p, tau) to (p' - tau p, tau).
[[nodiscard]] inline Quasipolynomial derivative(const Quasipolynomial& qp, unsigned order = 1) {
    std::vector<QuasiTerm> terms(qp.terms().begin(), qp.terms().end());
    for (unsigned k = 0; k < order; ++k) {
        for (auto& t : terms) {
            t.poly = t.poly.derivative() - t.delay * t.poly;
        }
        std::erase_if(terms, [](const QuasiTerm& t) { return t.poly.is_zero(); });
    }
    return Quasipolynomial(std::move(terms));
}

/// D = N + sum_j deg(p_j), N = number of terms - 1.
[[nodiscard]] inline std::size_t degree(const Quasipolynomial& qp) {
    if (qp.is_zero()) {
        throw Error(ErrorCode::invalid_input, "degree of the zero quasipolynomial is undefined");
    }
    std::size_t d = qp.terms().size() - 1;
    for (const auto& t : qp.terms()) {
        d += t.poly.degree();
    }
    return d;
}

/// Largest minus smallest delay.
[[nodiscard]] inline double delay_spread(const Quasipolynomial& qp) {
    if (qp.is_zero()) {
        return 0.0;
    }
    return qp.terms().back().delay - qp.terms().front().delay;
}

struct RootCountBounds {
    long lower = 0;
    long upper = 0;
};

/// Bounds on the number of roots (with multiplicity) whose imaginary part lies
/// in the strip: r (beta - alpha) / 2 pi -/+ D.
[[nodiscard]] inline RootCountBounds polya_szego_bounds(const Quasipolynomial& qp, HorizontalStrip strip) {
    if (!(strip.im_low <= strip.im_high)) {
        throw Error(ErrorCode::invalid_input, "strip requires im_low <= im_high");
    }
    const double d = static_cast<double>(degree(qp));
    const double base = delay_spread(qp) * (strip.im_high - strip.im_low) / (2.0 * std::numbers::pi);
    return {static_cast<long>(std::ceil(base - d)), static_cast<long>(std::floor(base + d))};
}

/// Half-width 2 pi / r of the strip around a root of multiplicity D that holds no other root.
[[nodiscard]] inline double exclusion_strip_halfwidth(const Quasipolynomial& qp) {
    const double spread = delay_spread(qp);
    if (spread <= 0.0) {
        throw Error(ErrorCode::no_exclusion_strip, "a single exponential has no exclusion strip");
    }
    return 2.0 * std::numbers::pi / spread;
}

/// How builder gains are signed. `feedback` is the stored convention
/// Delta(s) = s + a0 - sum a_i exp(-s tau_i); `plus` accepts
/// s + a0 + sum a_i exp(-s tau_i) and negates the gains.
enum class GainSign { feedback, plus };

/// s + a0 - sum_i gains[i] exp(-s delays[i]) for an arbitrary number of positive, distinct delays.
[[nodiscard]] inline Quasipolynomial feedback_system(double a0, std::span<const double> gains,
                                                     std::span<const double> delays,
                                                     GainSign sign = GainSign::feedback) {
    if (gains.size() != delays.size()) {
        throw Error(ErrorCode::invalid_system, "gains and delays must have the same length");
    }
    std::vector<QuasiTerm> terms;
    terms.push_back({Polynomial{a0, 1.0}, 0.0});
    for (std::size_t i = 0; i < delays.size(); ++i) {
        if (!(delays[i] > 0.0) || !std::isfinite(delays[i])) {
            throw Error(ErrorCode::invalid_system, "delays must be positive", "delay=" + std::to_string(delays[i]));
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (delays[j] == delays[i]) {
                throw Error(ErrorCode::invalid_system, "delays must be pairwise distinct",
                            "delay=" + std::to_string(delays[i]));
            }
        }
        const double g = sign == GainSign::feedback ? -gains[i] : gains[i];
        terms.push_back({Polynomial{g}, delays[i]});
    }
    return Quasipolynomial(std::move(terms));
}

/// Delta(s) = s + a0 - a1 exp(-s tau1) - a2 exp(-s tau2).
[[nodiscard]] inline Quasipolynomial from_two_delay_system(double a0, double a1, double a2, double tau1, double tau2,
                                                           GainSign sign = GainSign::feedback) {
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) {
        throw Error(ErrorCode::invalid_system, "delays must be positive");
    }
    if (tau1 == tau2) {
        throw Error(ErrorCode::invalid_system, "the two delays must differ", "tau=" + std::to_string(tau1));
    }
    const double gains[] = {a1, a2};
    const double delays[] = {tau1, tau2};
    return feedback_system(a0, gains, delays, sign);
}

/// Coefficients of a quasipolynomial of the form s + a0 - sum a_i exp(-s tau_i)
/// (after dividing by the leading coefficient), with tau_i > 0.
struct FeedbackForm {
    double a0 = 0.0;
    std::vector<double> gains;
    std::vector<double> delays;

    /// Every root satisfies Re(s) <= |a0| + sum |a_i|.
    [[nodiscard]] double real_part_bound() const {
        double b = std::abs(a0);
        for (double g : gains) {
            b += std::abs(g);
        }
        return b;
    }

    /// Every root with Re(s) >= left satisfies |Im(s)| <= |s + a0| <= sum |a_i| exp(-left tau_i).
    [[nodiscard]] double imag_part_bound(double left) const {
        double b = 0.0;
        for (std::size_t i = 0; i < gains.size(); ++i) {
            b += std::abs(gains[i]) * std::exp(-std::min(left, 0.0) * delays[i]);
        }
        return b;
    }
};

[[nodiscard]] inline std::optional<FeedbackForm> as_feedback_form(const Quasipolynomial& qp) {
    const auto terms = qp.terms();
    if (terms.empty() || terms.front().delay != 0.0 || terms.front().poly.degree() != 1) {
        return std::nullopt;
    }
    const double lead = terms.front().poly[1];
    FeedbackForm form;
    form.a0 = terms.front().poly[0] / lead;
    for (std::size_t j = 1; j < terms.size(); ++j) {
        if (terms[j].poly.degree() != 0) {
            return std::nullopt;
        }
        form.gains.push_back(-terms[j].poly[0] / lead);
        form.delays.push_back(terms[j].delay);
    }
    return form;
}

} // namespace middelay
