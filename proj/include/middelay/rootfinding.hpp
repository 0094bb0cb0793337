#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "middelay/error.hpp"
#include "middelay/quasipoly.hpp"

namespace middelay {

struct Rectangle {
    double re_low = 0.0;
    double re_high = 0.0;
    double im_low = 0.0;
    double im_high = 0.0;

    void validate() const {
        if (!(re_low < re_high) || !(im_low < im_high) || !std::isfinite(re_low) || !std::isfinite(re_high) ||
            !std::isfinite(im_low) || !std::isfinite(im_high)) {
            throw Error(ErrorCode::invalid_window, "rectangle requires re_low < re_high and im_low < im_high",
                        describe());
        }
    }

    [[nodiscard]] double width() const noexcept { return re_high - re_low; }
    [[nodiscard]] double height() const noexcept { return im_high - im_low; }
    [[nodiscard]] double diameter() const noexcept { return std::hypot(width(), height()); }
    [[nodiscard]] complex center() const noexcept { return {0.5 * (re_low + re_high), 0.5 * (im_low + im_high)}; }

    [[nodiscard]] bool contains(complex s, double slack = 0.0) const noexcept {
        return s.real() >= re_low - slack && s.real() <= re_high + slack && s.imag() >= im_low - slack &&
               s.imag() <= im_high + slack;
    }

    [[nodiscard]] Rectangle dilated(double by) const noexcept {
        return {re_low - by, re_high + by, im_low - by, im_high + by};
    }

    [[nodiscard]] std::string describe() const {
        return "[" + std::to_string(re_low) + "," + std::to_string(re_high) + "]x[" + std::to_string(im_low) + "," +
               std::to_string(im_high) + "]";
    }

    friend bool operator==(const Rectangle&, const Rectangle&) = default;
};

struct RootCertificate {
    complex value;
    int multiplicity = 1;
    double residual = 0.0;
    double cluster_radius = 0.0;
};

struct SpectrumResult {
    std::vector<RootCertificate> roots; // Re descending, then Im ascending
    Rectangle region;                   // the rectangle that was asked for
    int total_count = 0;                // sum of multiplicities of `roots`
    Rectangle counted_region;           // rectangle actually integrated over (after any dilation)
    int counted_total = 0;              // argument-principle count over counted_region
};

struct RootFinderOptions {
    // Contour points with |Delta/Delta'| < boundary_threshold (1 + |s|) count as boundary roots.
    double boundary_threshold = 1e-10;
    double dilation_fraction = 1e-6;
    double dilation_growth = 10.0;
    int max_dilations = 5;
    // Residuals are accepted when |Delta| <= residual_tolerance * max(1, sum of term magnitudes).
    double residual_tolerance = 1e-10;
    double newton_step_tolerance = 1e-13;
    int max_newton_iterations = 100;
    double certification_radius = 1e-2;
    int max_certification_shrinks = 20;
    int max_subdivision_depth = 60;
    int max_quadrature_passes = 6;
    long max_path_steps = 2'000'000;
};

namespace detail {

// Gauss-Kronrod 15 point rule: Kronrod abscissae (nonnegative half), Kronrod
// weights, and the embedded 7 point Gauss weights for the odd-indexed nodes.
inline constexpr std::array<double, 8> gk_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> gk_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss7_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780, 0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct ContourSums {
    complex log_integral{};  // integral of Delta'/Delta dz
    complex moment_integral{}; // integral of z Delta'/Delta dz

    ContourSums& operator+=(const ContourSums& o) {
        log_integral += o.log_integral;
        moment_integral += o.moment_integral;
        return *this;
    }
};

struct PathPoint {
    complex z;
    complex dz; // dz/dt
};

inline QuasiSample checked_sample(const Quasipolynomial& qp, complex z, const RootFinderOptions& o) {
    QuasiSample f = qp.sample(z);
    if (!std::isfinite(f.value.real()) || !std::isfinite(f.value.imag()) || !std::isfinite(f.derivative.real()) ||
        !std::isfinite(f.derivative.imag())) {
        throw Error(ErrorCode::evaluation_overflow, "quasipolynomial evaluation overflowed on the contour",
                    "z=(" + std::to_string(z.real()) + "," + std::to_string(z.imag()) + ")");
    }
    // A root is suspected on the contour when the Newton distance estimate
    // |Delta/Delta'| is tiny, or when |Delta| is lost in rounding noise.
    const double mag = std::abs(f.value);
    const double noise = 80.0 * std::numeric_limits<double>::epsilon() * f.scale;
    if (mag < o.boundary_threshold * (1.0 + std::abs(z)) * std::abs(f.derivative) || mag <= noise) {
        throw Error(ErrorCode::boundary_root_suspected, "a root lies on or next to the contour",
                    "z=(" + std::to_string(z.real()) + "," + std::to_string(z.imag()) + ")");
    }
    return f;
}

inline double relative_noise(const QuasiSample& f) {
    return 8.0 * std::numeric_limits<double>::epsilon() * f.scale / std::abs(f.value);
}

/// Integrates Delta'/Delta and z Delta'/Delta along a smooth path t in [0,1].
/// Steps are limited to kappa times the local root-distance estimate
/// |Delta|/|Delta'| and each step must pass both the Gauss-Kronrod error test
/// and agreement between the integrated and the directly observed change of
/// log Delta, so no winding can be skipped.
template <typename Path>
ContourSums integrate_path(const Quasipolynomial& qp, Path&& path, double kappa, const RootFinderOptions& o) {
    ContourSums sums;
    double t = 0.0;
    PathPoint p0 = path(0.0);
    QuasiSample f0 = checked_sample(qp, p0.z, o);
    long steps = 0;
    while (t < 1.0) {
        const double speed = std::abs(p0.dz);
        const double dmag = std::abs(f0.derivative);
        const double rho = dmag > 0.0 ? std::abs(f0.value) / dmag : std::numeric_limits<double>::infinity();
        double h = std::min({1.0 - t, 0.125, kappa * rho / speed});
        for (;;) {
            if (h * speed < 1e-13 * (1.0 + std::abs(p0.z))) {
                throw Error(ErrorCode::boundary_root_suspected, "contour step underflow near a root",
                            "z=(" + std::to_string(p0.z.real()) + "," + std::to_string(p0.z.imag()) + ")");
            }
            const double half = 0.5 * h;
            const double mid = t + half;
            complex k_log{}, g_log{}, k_mom{};
            // relative rounding noise of Delta, which bounds how well the
            // integrand and log Delta are known on this step
            double noise = 0.0;
            double mass = 0.0;
            for (std::size_t i = 0; i < gk_nodes.size(); ++i) {
                const int signs = gk_nodes[i] == 0.0 ? 1 : 2;
                for (int sgn = 0; sgn < signs; ++sgn) {
                    const double x = sgn == 0 ? gk_nodes[i] : -gk_nodes[i];
                    const PathPoint pp = path(mid + half * x);
                    const QuasiSample fs = checked_sample(qp, pp.z, o);
                    const complex g = fs.derivative / fs.value * pp.dz;
                    k_log += gk_weights[i] * g;
                    k_mom += gk_weights[i] * g * pp.z;
                    mass += gk_weights[i] * std::abs(g);
                    noise = std::max(noise, relative_noise(fs));
                    if (i % 2 == 1) {
                        g_log += gauss7_weights[i / 2] * g;
                    }
                }
            }
            k_log *= half;
            k_mom *= half;
            g_log *= half;
            mass *= half;
            const double t1 = std::min(1.0, t + h);
            const PathPoint p1 = path(t1);
            const QuasiSample f1 = checked_sample(qp, p1.z, o);
            noise = std::max({noise, relative_noise(f0), relative_noise(f1)});
            const complex ratio = f1.value / f0.value;
            const double darg = std::arg(ratio);
            const double dlog = std::log(std::abs(f1.value)) - std::log(std::abs(f0.value));
            const double err = std::abs(k_log - g_log);
            const double agree = 1e-7 + 4.0 * noise;
            const bool ok = err <= 1e-10 + 1e-8 * std::abs(k_log) + noise * mass &&
                            std::abs(k_log.imag() - darg) < agree &&
                            std::abs(k_log.real() - dlog) < agree + 1e-9 * std::abs(dlog);
            if (ok) {
                sums.log_integral += k_log;
                sums.moment_integral += k_mom;
                t = t1;
                p0 = p1;
                f0 = f1;
                break;
            }
            h *= 0.5;
        }
        if (++steps > o.max_path_steps) {
            throw Error(ErrorCode::quadrature_non_convergent, "contour integration exceeded its step budget");
        }
    }
    return sums;
}

template <typename Contour>
std::pair<int, complex> count_with_moment(Contour&& contour, const RootFinderOptions& o) {
    double kappa = 0.5;
    for (int pass = 0; pass < o.max_quadrature_passes; ++pass, kappa *= 0.5) {
        const ContourSums sums = contour(kappa);
        const complex n = sums.log_integral / complex(0.0, 2.0 * std::numbers::pi);
        const double rounded = std::round(n.real());
        if (std::abs(n.real() - rounded) < 0.25 && std::abs(n.imag()) < 0.25 && rounded >= 0.0) {
            return {static_cast<int>(rounded), sums.moment_integral / complex(0.0, 2.0 * std::numbers::pi)};
        }
    }
    throw Error(ErrorCode::quadrature_non_convergent, "argument-principle count did not settle near an integer");
}

inline std::pair<int, complex> count_rectangle(const Quasipolynomial& qp, const Rectangle& r,
                                               const RootFinderOptions& o) {
    const complex corners[4] = {{r.re_low, r.im_low}, {r.re_high, r.im_low}, {r.re_high, r.im_high},
                                {r.re_low, r.im_high}};
    return count_with_moment(
        [&](double kappa) {
            ContourSums total;
            for (int e = 0; e < 4; ++e) {
                const complex a = corners[e];
                const complex d = corners[(e + 1) % 4] - a;
                total += integrate_path(
                    qp, [&](double t) { return PathPoint{a + t * d, d}; }, kappa, o);
            }
            return total;
        },
        o);
}

inline std::pair<int, complex> count_disk(const Quasipolynomial& qp, complex center, double radius,
                                          const RootFinderOptions& o) {
    return count_with_moment(
        [&](double kappa) {
            return integrate_path(
                qp,
                [&](double t) {
                    const complex e = std::polar(1.0, 2.0 * std::numbers::pi * t);
                    return PathPoint{center + radius * e, complex(0.0, 2.0 * std::numbers::pi * radius) * e};
                },
                kappa, o);
        },
        o);
}

inline double residual_bound(const Quasipolynomial& qp, complex s, const RootFinderOptions& o) {
    return o.residual_tolerance * std::max(1.0, qp.scale(s));
}

/// Newton iteration on f, falling back to a secant step when f' vanishes.
inline std::optional<complex> newton(const Quasipolynomial& f, complex s, const RootFinderOptions& o,
                                     double max_travel) {
    const complex start = s;
    complex prev_s = s;
    complex prev_f{};
    bool have_prev = false;
    for (int it = 0; it < o.max_newton_iterations; ++it) {
        const QuasiSample fs = f.sample(s);
        if (!std::isfinite(std::abs(fs.value))) {
            return std::nullopt;
        }
        if (fs.value == complex{}) {
            return s;
        }
        complex step;
        const double dmag = std::abs(fs.derivative);
        if (dmag > 1e-300 && std::isfinite(dmag)) {
            step = fs.value / fs.derivative;
        } else if (have_prev && fs.value != prev_f) {
            step = fs.value * (s - prev_s) / (fs.value - prev_f);
        } else {
            return std::nullopt;
        }
        prev_s = s;
        prev_f = fs.value;
        have_prev = true;
        s -= step;
        if (std::abs(s - start) > max_travel) {
            return std::nullopt;
        }
        if (std::abs(step) < o.newton_step_tolerance * (1.0 + std::abs(s))) {
            return s;
        }
    }
    return std::nullopt;
}

class RootSearch {
public:
    RootSearch(const Quasipolynomial& qp, const RootFinderOptions& o) : qp_(qp), o_(o) {}

    void process(const Rectangle& box, int k, complex moment, int depth) {
        if (k == 0) {
            return;
        }
        if (depth > o_.max_subdivision_depth) {
            throw Error(ErrorCode::refinement_stagnation, "subdivision depth limit reached", box.describe());
        }
        if (try_cluster(box, k, moment)) {
            return;
        }
        quadrisect(box, k, depth);
    }

    std::vector<RootCertificate> take() { return std::move(found_); }

private:
    const Quasipolynomial& derivative_of_order(int order) {
        while (static_cast<int>(derivatives_.size()) <= order) {
            derivatives_.push_back(derivatives_.empty() ? qp_ : derivative(derivatives_.back()));
        }
        return derivatives_[static_cast<std::size_t>(order)];
    }

    bool try_cluster(const Rectangle& box, int k, complex moment) {
        const complex guess = moment / static_cast<double>(k);
        const double diam = box.diameter();
        const Quasipolynomial& target = derivative_of_order(k - 1);
        if (target.is_zero()) {
            return false;
        }
        auto root = newton(target, guess, o_, 2.0 * diam + 1e-3);
        if (!root) {
            return false;
        }
        complex s = *root;
        if (std::abs(s.imag()) < 1e-10 * (1.0 + std::abs(s))) {
            const complex snapped{s.real(), 0.0};
            if (std::abs(target(snapped)) <= std::abs(target(s)) * (1.0 + 1e-6) + 1e-300) {
                s = snapped;
            }
        }
        if (!box.contains(s, 1e-9 * (1.0 + diam))) {
            return false;
        }
        const double residual = std::abs(qp_(s));
        if (!(residual <= residual_bound(qp_, s, o_))) {
            return false;
        }
        const auto radius = certify(s, k);
        if (!radius) {
            return false;
        }
        found_.push_back({s, k, residual, *radius});
        return true;
    }

    // Shrinks a disk around s until two consecutive radii give the same
    // count; succeeds when that stable count equals k.
    std::optional<double> certify(complex s, int k) {
        double r = o_.certification_radius;
        std::optional<int> previous;
        for (int shrink = 0; shrink <= o_.max_certification_shrinks; ++shrink, r *= 0.5) {
            std::optional<int> current;
            try {
                current = count_disk(qp_, s, r, o_).first;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::boundary_root_suspected &&
                    e.code() != ErrorCode::quadrature_non_convergent) {
                    throw;
                }
            }
            if (current && previous && *current == *previous && *current >= 1 && *current <= k) {
                return *current == k ? std::optional<double>(r) : std::nullopt;
            }
            previous = current;
        }
        return std::nullopt;
    }

    void quadrisect(const Rectangle& box, int k, int depth) {
        static constexpr std::array<double, 7> fractions = {0.51234, 0.4629, 0.5613, 0.4171, 0.6137, 0.3579, 0.5};
        for (double fx : fractions) {
            for (double fy : {fx, 1.0 - fx}) {
                const double xm = box.re_low + fx * box.width();
                const double ym = box.im_low + fy * box.height();
                const std::array<Rectangle, 4> kids = {Rectangle{box.re_low, xm, box.im_low, ym},
                                                       Rectangle{xm, box.re_high, box.im_low, ym},
                                                       Rectangle{box.re_low, xm, ym, box.im_high},
                                                       Rectangle{xm, box.re_high, ym, box.im_high}};
                std::array<std::pair<int, complex>, 4> counts;
                bool ok = true;
                int sum = 0;
                for (std::size_t i = 0; i < kids.size() && ok; ++i) {
                    try {
                        counts[i] = count_rectangle(qp_, kids[i], o_);
                        sum += counts[i].first;
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::boundary_root_suspected) {
                            throw;
                        }
                        ok = false;
                    }
                }
                if (!ok || sum != k) {
                    continue;
                }
                for (std::size_t i = 0; i < kids.size(); ++i) {
                    process(kids[i], counts[i].first, counts[i].second, depth + 1);
                }
                return;
            }
        }
        throw Error(ErrorCode::refinement_stagnation, "no admissible subdivision of a root cluster", box.describe());
    }

    const Quasipolynomial& qp_;
    const RootFinderOptions& o_;
    std::vector<Quasipolynomial> derivatives_;
    std::vector<RootCertificate> found_;
};

inline void sort_roots(std::vector<RootCertificate>& roots) {
    std::sort(roots.begin(), roots.end(), [](const RootCertificate& a, const RootCertificate& b) {
        if (a.value.real() != b.value.real()) {
            return a.value.real() > b.value.real();
        }
        return a.value.imag() < b.value.imag();
    });
}

} // namespace detail

struct RootCount {
    int count = 0;
    complex moment; // sum of the enclosed roots, counted with multiplicity
    Rectangle region;
};

/// Argument-principle count over `rect`. When a root sits on or next to the
/// boundary the rectangle is dilated (the first dilation is a fraction of the
/// diameter and grows geometrically) and the dilated region is reported.
[[nodiscard]] inline RootCount count_roots_detailed(const Quasipolynomial& qp, const Rectangle& rect,
                                                    const RootFinderOptions& o = {}) {
    rect.validate();
    if (qp.is_zero()) {
        throw Error(ErrorCode::invalid_input, "cannot count roots of the zero quasipolynomial");
    }
    Rectangle work = rect;
    double by = o.dilation_fraction * rect.diameter();
    for (int attempt = 0;; ++attempt) {
        try {
            const auto [n, m] = detail::count_rectangle(qp, work, o);
            return {n, m, work};
        } catch (const Error& e) {
            if (e.code() != ErrorCode::boundary_root_suspected || attempt >= o.max_dilations) {
                throw;
            }
        }
        work = rect.dilated(by);
        by *= o.dilation_growth;
    }
}

[[nodiscard]] inline int count_roots(const Quasipolynomial& qp, const Rectangle& rect,
                                     const RootFinderOptions& o = {}) {
    return count_roots_detailed(qp, rect, o).count;
}

/// Argument-principle count over the disk |s - center| < radius (no dilation).
[[nodiscard]] inline int count_roots_in_disk(const Quasipolynomial& qp, complex center, double radius,
                                             const RootFinderOptions& o = {}) {
    if (!(radius > 0.0)) {
        throw Error(ErrorCode::invalid_window, "disk radius must be positive");
    }
    return detail::count_disk(qp, center, radius, o).first;
}

/// Every root in the closed rectangle, with certified multiplicities.
[[nodiscard]] inline SpectrumResult find_roots(const Quasipolynomial& qp, const Rectangle& rect,
                                               const RootFinderOptions& o = {}) {
    const RootCount counted = count_roots_detailed(qp, rect, o);
    detail::RootSearch search(qp, o);
    search.process(counted.region, counted.count, counted.moment, 0);
    SpectrumResult out;
    out.region = rect;
    out.counted_region = counted.region;
    out.counted_total = counted.count;
    for (auto& c : search.take()) {
        if (rect.contains(c.value)) {
            out.total_count += c.multiplicity;
            out.roots.push_back(c);
        }
    }
    detail::sort_roots(out.roots);
    return out;
}

/// Search window used when none is given, for systems s + a0 - sum a_i exp(-s tau_i).
[[nodiscard]] inline Rectangle default_window(const FeedbackForm& form) {
    const double bound = form.real_part_bound();
    double reach = 3.0;
    if (!form.delays.empty()) {
        reach = 3.0 / *std::min_element(form.delays.begin(), form.delays.end());
    }
    return {-(bound + reach), bound + 1.0, -50.0, 50.0};
}

/// Largest real part among the roots found in `rect`. For feedback-form
/// systems the right edge must clear the a-priori bound |a0| + sum |a_i|.
[[nodiscard]] inline double spectral_abscissa(const Quasipolynomial& qp, const Rectangle& rect,
                                              const RootFinderOptions& o = {}) {
    if (const auto form = as_feedback_form(qp)) {
        if (!(rect.re_high > form->real_part_bound())) {
            throw Error(ErrorCode::invalid_window, "right edge does not clear the real-part bound",
                        "bound=" + std::to_string(form->real_part_bound()));
        }
    }
    const SpectrumResult spectrum = find_roots(qp, rect, o);
    if (spectrum.roots.empty()) {
        throw Error(ErrorCode::empty_spectrum, "no root in the search window", rect.describe());
    }
    return spectrum.roots.front().value.real();
}

struct CertifiedAbscissa {
    double abscissa = 0.0;
    SpectrumResult spectrum;
};

/// Spectral abscissa of a feedback-form system without a caller-supplied
/// window. Every root with Re(s) >= L satisfies |Im(s)| <= sum |a_i| exp(-L tau_i),
/// so the window [L, bound + 1] x [-H(L), H(L)] is exhaustive to the right of L;
/// L moves left until that window holds a root. Each move at most roughly
/// quadruples the window height, so tiny gains on long delays cannot blow
/// the window up past the roots.
[[nodiscard]] inline CertifiedAbscissa certify_spectral_abscissa(const Quasipolynomial& qp,
                                                                 const RootFinderOptions& o = {}) {
    const auto form = as_feedback_form(qp);
    if (!form) {
        throw Error(ErrorCode::invalid_input, "abscissa certification needs the form s + a0 - sum a_i exp(-s tau_i)");
    }
    const double right = form->real_part_bound() + 1.0;
    double step = 1.0;
    double left = right - 2.0;
    for (int attempt = 0; attempt < 400; ++attempt) {
        if (attempt > 0) {
            const double limit = 4.0 * form->imag_part_bound(left) + 64.0;
            while (step > 1e-3 && form->imag_part_bound(left - step) > limit) {
                step *= 0.5;
            }
            left -= step;
            step *= 2.0;
        }
        const double h = form->imag_part_bound(left) + 1.0;
        const Rectangle window{left, right, -h, h};
        if (count_roots(qp, window, o) == 0) {
            continue;
        }
        SpectrumResult spectrum = find_roots(qp, window, o);
        if (spectrum.roots.empty()) {
            continue; // only roots on the dilated margin
        }
        const double a = spectrum.roots.front().value.real();
        return {a, std::move(spectrum)};
    }
    throw Error(ErrorCode::empty_spectrum, "no root found while extending the window to the left");
}

} // namespace middelay
