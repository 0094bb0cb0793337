#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "middelay/branch_analysis.hpp"
#include "middelay/dde_sim.hpp"
#include "middelay/error.hpp"
#include "middelay/gain_opt.hpp"
#include "middelay/io.hpp"
#include "middelay/mid_design.hpp"
#include "middelay/rootfinding.hpp"

namespace middelay::cli {

using io::json;

/// Environment variable overriding the relative residual tolerance of the root finder.
inline constexpr const char* residual_tolerance_env = "MIDDELAY_RESIDUAL_TOL";

namespace detail {

struct Options {
    std::string output;
    std::string format;
    std::optional<double> residual_tol;
    long seed = 0; // reserved; every algorithm is deterministic

    // spectrum, verify, simulate
    std::string input;
    std::vector<double> window;

    // design
    bool one_delay = false;
    bool two_delay = false;
    bool platelet = false;
    bool multiplicity = false;
    std::optional<double> a0_opt;
    std::optional<double> tau1;
    std::optional<double> tau2;
    std::vector<double> delays;
    std::optional<double> s0;
    std::optional<unsigned> mult;

    // platelet model
    double n = 2.2;
    double theta = 0.04;
    double gamma = 3.0;
    double g0 = 4.0;
    double T = 10.0;
    double y_star = 0.01;

    // simulate
    std::optional<double> history;
    double t_end = 0.0;
    double dt = 0.01;
    std::string feedback = "designed";
    bool linearized = false;

    // optimize
    std::string family = "all";
    double bound = 1.0;
    bool stream = false;

    // branch
    double lambda_start = 0.5;
    double lambda_end = 0.9;
    double s_re = 0.0;
    double s_im = 0.0;
    int steps_per_unit = 1000;
    bool scan = false;
    double omega_max = 200.0;
    int samples = 10000;
    double scan_tolerance = 1e-8;

    // probe-conjecture
    double halfwidth = 0.5;
    int points = 21;
    double tolerance = 1e-6;
};

inline void require_unit_interval(double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw Error(ErrorCode::invalid_input, "lambda must lie in (0, 1)", "lambda=" + std::to_string(lambda));
    }
}

inline RootFinderOptions finder_options(const Options& o) {
    RootFinderOptions r;
    if (const char* env = std::getenv(residual_tolerance_env)) {
        char* end = nullptr;
        const double v = std::strtod(env, &end);
        if (end == env || *end != '\0' || !(v > 0.0)) {
            throw Error(ErrorCode::invalid_input, std::string(residual_tolerance_env) + " must be a positive number",
                        env);
        }
        r.residual_tolerance = v;
    }
    if (o.residual_tol) {
        if (!(*o.residual_tol > 0.0)) {
            throw Error(ErrorCode::invalid_input, "--residual-tol must be positive");
        }
        r.residual_tolerance = *o.residual_tol;
    }
    return r;
}

inline std::optional<Rectangle> window_of(const Options& o) {
    if (o.window.empty()) {
        return std::nullopt;
    }
    if (o.window.size() != 4) {
        throw Error(ErrorCode::invalid_window, "--window takes re_low,re_high,im_low,im_high");
    }
    Rectangle r{o.window[0], o.window[1], o.window[2], o.window[3]};
    r.validate();
    return r;
}

inline PlateletModel platelet_model(const Options& o) {
    PlateletModel m{o.n, o.theta, o.gamma, o.g0, o.tau1.value_or(9.0), o.T};
    m.validate();
    return m;
}

inline std::string format_or(const Options& o, const char* fallback) { return o.format.empty() ? fallback : o.format; }

inline void require_format(const std::string& format, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
        if (format == a) {
            return;
        }
    }
    throw Error(ErrorCode::invalid_input, "unsupported output format for this subcommand", format);
}

inline void spectrum(const Options& o, std::ostream& out) {
    const auto qp = io::system_from_json(io::load_json(o.input));
    const auto format = format_or(o, "csv");
    require_format(format, {"csv", "json"});
    Rectangle window;
    if (const auto w = window_of(o)) {
        window = *w;
    } else if (const auto form = as_feedback_form(qp)) {
        window = default_window(*form);
    } else {
        throw Error(ErrorCode::invalid_window, "a --window is required for systems not in feedback form");
    }
    const auto result = find_roots(qp, window, finder_options(o));
    if (format == "csv") {
        io::write_spectrum_csv(out, result);
    } else {
        out << io::to_json(result).dump(2) << '\n';
    }
}

inline void design(const Options& o, std::ostream& out) {
    require_format(format_or(o, "json"), {"json"});
    const int chosen = int(o.one_delay) + int(o.two_delay) + int(o.platelet) + int(o.multiplicity);
    if (chosen != 1) {
        throw Error(ErrorCode::invalid_input,
                    "choose exactly one of --one-delay, --two-delay, --platelet, --multiplicity");
    }
    json result;
    if (o.one_delay) {
        if (!o.tau1) {
            throw Error(ErrorCode::invalid_input, "--one-delay needs --tau1");
        }
        result = io::to_json(design_one_delay(o.a0_opt.value_or(0.0), *o.tau1));
    } else if (o.two_delay) {
        if (!o.tau1 || !o.tau2) {
            throw Error(ErrorCode::invalid_input, "--two-delay needs --tau1 and --tau2");
        }
        result = io::to_json(design_two_delay(o.a0_opt.value_or(0.0), *o.tau1, *o.tau2));
    } else if (o.platelet) {
        const auto m = platelet_model(o);
        result = io::platelet_json(m, design_platelet_feedback(m, o.y_star));
        if (o.feedback == "none") {
            // the uncontrolled linearization, for comparing spectra
            result["feedback"] = "none";
            result["system"] = io::to_json(linearize_platelet(m, o.y_star, 0.0, 0.0).quasipolynomial());
        } else if (o.feedback != "designed") {
            throw Error(ErrorCode::invalid_input, "--feedback must be 'designed' or 'none'", o.feedback);
        }
    } else {
        if (o.delays.empty() || !o.s0) {
            throw Error(ErrorCode::invalid_input, "--multiplicity needs --delays and --s0");
        }
        result = io::to_json(solve_multiplicity_system(o.a0_opt, o.delays, *o.s0));
    }
    out << result.dump(2) << '\n';
}

inline void verify(const Options& o, std::ostream& out) {
    require_format(format_or(o, "json"), {"json"});
    const auto input = io::load_json(o.input);
    const auto qp = io::system_from_json(input);
    const auto form = as_feedback_form(qp);
    if (!form) {
        throw Error(ErrorCode::invalid_input, "verify needs a system of the form s + a0 - sum a_i exp(-s tau_i)");
    }
    double s0 = 0.0;
    if (o.s0) {
        s0 = *o.s0;
    } else if (input.contains("s0") && input.at("s0").is_number()) {
        s0 = input.at("s0").get<double>();
    } else {
        throw Error(ErrorCode::invalid_input, "no s0 in the input and no --s0 given");
    }
    unsigned m = static_cast<unsigned>(form->delays.size() + 1);
    if (o.mult) {
        m = *o.mult;
    } else if (input.contains("multiplicity") && input.at("multiplicity").is_number_unsigned()) {
        m = input.at("multiplicity").get<unsigned>();
    }
    const auto report = verify_multiplicity(qp, s0, m);

    // every root right of s0 lies in this window
    const double left = s0 + 1e-6;
    const double h = form->imag_part_bound(left) + 1.0;
    const Rectangle window{left, std::max(form->real_part_bound(), left) + 1.0, -h, h};
    const auto right = find_roots(qp, window, finder_options(o));
    json roots = json::array();
    for (const auto& r : right.roots) {
        roots.push_back(io::to_json(r));
    }
    const bool dominant = right.roots.empty();
    json result = {{"multiplicity", io::to_json(report)},
                   {"dominance", {{"window", io::to_json(window)}, {"roots_right_of_s0", roots}, {"passed", dominant}}},
                   {"passed", report.passed && dominant}};
    out << result.dump(2) << '\n';
}

inline void write_trajectory(const Options& o, const Trajectory& t, std::ostream& out) {
    const auto format = format_or(o, "csv");
    require_format(format, {"csv", "json"});
    if (format == "csv") {
        t.write_csv(out);
    } else {
        out << io::to_json(t).dump() << '\n';
    }
}

inline void simulate(const Options& o, std::ostream& out) {
    if (!(o.t_end > 0.0)) {
        throw Error(ErrorCode::invalid_input, "--t-end must be positive");
    }
    if (o.platelet) {
        const auto m = platelet_model(o);
        const auto fb = design_platelet_feedback(m, o.y_star);
        const double y0 = o.history.value_or(0.5 * o.y_star);
        if (o.linearized) {
            const auto lin = o.feedback == "designed" ? linearize_platelet(m, fb) : linearize_platelet(m, o.y_star, 0, 0);
            auto t = simulate_linear(lin, HistoryFunction::constant(y0 - o.y_star, m.tau2()), o.t_end, o.dt);
            for (double& v : t.values) {
                v += o.y_star;
            }
            write_trajectory(o, t, out);
            return;
        }
        PlateletControl control;
        if (o.feedback == "designed") {
            control = fb.control();
        } else if (o.feedback != "none") {
            throw Error(ErrorCode::invalid_input, "--feedback must be 'designed' or 'none'", o.feedback);
        }
        write_trajectory(o, simulate_platelet(m, control, HistoryFunction::constant(y0, m.tau2()), o.t_end, o.dt), out);
        return;
    }
    const auto form = as_feedback_form(io::system_from_json(io::load_json(o.input)));
    if (!form || form->delays.empty() || form->delays.size() > 2) {
        throw Error(ErrorCode::invalid_input, "simulate needs a feedback-form system with one or two delays");
    }
    LinearTwoDelaySystem sys{form->a0, form->gains[0], 0.0, form->delays[0], 2.0 * form->delays[0]};
    if (form->delays.size() == 2) {
        sys.a2 = form->gains[1];
        sys.tau2 = form->delays[1];
    }
    write_trajectory(o, simulate_linear(sys, HistoryFunction::constant(o.history.value_or(1.0), sys.tau2), o.t_end, o.dt),
                     out);
}

inline void optimize(const Options& o, std::ostream& out) {
    require_format(format_or(o, "json"), {"json"});
    const GainBudget budget{o.bound};
    budget.validate();
    ProgressSink sink;
    if (o.stream) {
        sink = [&out](const ProgressEvent& e) { out << io::to_json(e).dump() << '\n'; };
    }
    json results = json::array();
    const bool all = o.family == "all";
    if (!all && o.family != "no-delay" && o.family != "one-delay" && o.family != "two-delay") {
        throw Error(ErrorCode::invalid_input, "--family must be no-delay, one-delay, two-delay or all", o.family);
    }
    if (all || o.family == "no-delay") {
        results.push_back(io::to_json(optimize_no_delay(budget)));
    }
    if (all || o.family == "one-delay") {
        results.push_back(io::to_json(optimize_one_delay(budget)));
    }
    if (all || o.family == "two-delay") {
        results.push_back(io::to_json(optimize_two_delay_mid(budget, {}, sink)));
    }
    json result = {{"bound", o.bound}, {"results", results}};
    out << (o.stream ? result.dump() : result.dump(2)) << '\n';
}

inline void branch(const Options& o, std::ostream& out) {
    if (o.scan) {
        require_format(format_or(o, "json"), {"json"});
        const auto s = crossing_scan(o.omega_max, o.samples, o.scan_tolerance);
        auto candidates = [](const std::vector<CrossingCandidate>& v) {
            json a = json::array();
            for (const auto& c : v) {
                a.push_back({{"omega", c.omega},
                             {"lambda0", c.lambda0},
                             {"residual_re", c.residual_re},
                             {"residual_im", c.residual_im},
                             {"direction", c.direction}});
            }
            return a;
        };
        json result = {{"samples", s.samples},
                       {"in_range", s.in_range},
                       {"crossings", candidates(s.crossings)},
                       {"raw_hits", candidates(s.raw_hits)},
                       {"smallest_residual", s.smallest_residual},
                       {"min_direction", s.min_direction}};
        out << result.dump(2) << '\n';
        return;
    }
    require_format(format_or(o, "csv"), {"csv"});
    ContinuationOptions c;
    c.steps_per_unit = o.steps_per_unit;
    // the start guess snaps to the nearest nontrivial root of Q(., lambda_start)
    require_unit_interval(o.lambda_start);
    const complex guess{o.s_re, o.s_im};
    const auto near = find_roots(normalized_quasipolynomial(o.lambda_start),
                                 {guess.real() - 2.0, guess.real() + 2.0, guess.imag() - 2.0, guess.imag() + 2.0},
                                 finder_options(o));
    std::optional<complex> start;
    for (const auto& r : near.roots) {
        if (std::abs(r.value) > 1e-6 && (!start || std::abs(r.value - guess) < std::abs(*start - guess))) {
            start = r.value;
        }
    }
    if (!start) {
        throw Error(ErrorCode::invalid_input, "no nontrivial root of Q within 2 of the start guess");
    }
    const auto path = continue_branch({o.lambda_start, *start, 0.0}, o.lambda_end, c);
    io::write_branch_csv(out, path);
}

inline void probe_conjecture(const Options& o, std::ostream& out) {
    require_format(format_or(o, "json"), {"json"});
    const auto r = conjecture_scan(o.tau1.value_or(1.0), o.tau2.value_or(2.0), o.halfwidth, o.points, o.tolerance);
    json result = io::to_json(r);
    result["note"] = "evidence only: the conjecture is open and a counterexample does not fail the run";
    out << result.dump(2) << '\n';
}

inline void add_platelet_options(CLI::App* sub, Options& o) {
    sub->add_option("--n", o.n, "Hill exponent")->capture_default_str();
    sub->add_option("--theta", o.theta, "Hill threshold")->capture_default_str();
    sub->add_option("--gamma", o.gamma, "destruction rate")->capture_default_str();
    sub->add_option("--g0", o.g0, "maximal production rate")->capture_default_str();
    sub->add_option("--T", o.T, "lifespan; the second delay is tau1 + T")->capture_default_str();
    sub->add_option("--y-star", o.y_star, "target equilibrium")->capture_default_str();
}

} // namespace detail

/// Runs the command line; returns the process exit code (0 success, 2 invalid
/// input, 3 numerical failure). Errors go to `err` as one JSON object.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    detail::Options o;
    CLI::App app{"Multiplicity-induced-dominancy design and analysis for scalar delay equations", "middelay"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--output,-o", o.output, "write the result to this file instead of standard output");
    app.add_option("--format", o.format, "csv or json (subcommand dependent)");
    app.add_option("--residual-tol", o.residual_tol, "relative residual tolerance of the root finder");
    app.add_option("--seed", o.seed, "reserved; all algorithms are deterministic");

    auto* spectrum = app.add_subcommand("spectrum", "characteristic roots in a window");
    spectrum->add_option("--input,-i", o.input, "system JSON (inline or file)")->required();
    spectrum->add_option("--window", o.window, "re_low,re_high,im_low,im_high")->delimiter(',')->expected(4);

    auto* design = app.add_subcommand("design", "synthesize gains of maximal multiplicity");
    design->add_flag("--one-delay", o.one_delay, "double root with one delay");
    design->add_flag("--two-delay", o.two_delay, "triple root with two delays");
    design->add_flag("--platelet", o.platelet, "platelet feedback design");
    design->add_flag("--multiplicity", o.multiplicity, "solve the multiplicity system for --delays");
    design->add_option("--a0", o.a0_opt, "plant coefficient (free in --multiplicity when omitted)");
    design->add_option("--tau1", o.tau1, "first delay (platelet: maturation age, default 9)");
    design->add_option("--tau2", o.tau2, "second delay");
    design->add_option("--delays", o.delays, "comma-separated delays")->delimiter(',');
    design->add_option("--s0", o.s0, "target root");
    design->add_option("--feedback", o.feedback, "platelet: designed, or none for the open-loop system")
        ->capture_default_str();
    detail::add_platelet_options(design, o);

    auto* simulate = app.add_subcommand("simulate", "integrate a delay equation by the method of steps");
    simulate->add_option("--input,-i", o.input, "linear system JSON with one or two delays");
    simulate->add_flag("--platelet", o.platelet, "simulate the platelet model");
    simulate->add_flag("--linearized", o.linearized, "platelet: integrate the linearization at y*");
    simulate->add_option("--feedback", o.feedback, "platelet: designed or none")->capture_default_str();
    simulate->add_option("--tau1", o.tau1, "platelet maturation age (default 9)");
    simulate->add_option("--history", o.history, "constant initial value (default 1, platelet y*/2)");
    simulate->add_option("--t-end", o.t_end, "final time")->required();
    simulate->add_option("--dt", o.dt, "step size")->capture_default_str();
    detail::add_platelet_options(simulate, o);

    auto* optimize = app.add_subcommand("optimize", "spectral abscissa minimization under an l1 gain budget");
    optimize->add_option("--family", o.family, "no-delay, one-delay, two-delay or all")->capture_default_str();
    optimize->add_option("--bound", o.bound, "gain budget")->capture_default_str();
    optimize->add_flag("--stream", o.stream, "emit progress as line-delimited JSON before the result");

    auto* verify = app.add_subcommand("verify", "check multiplicity and dominance of a design");
    verify->add_option("--input,-i", o.input, "design or system JSON")->required();
    verify->add_option("--s0", o.s0, "root to check (default: the input's s0)");
    verify->add_option("--multiplicity", o.mult, "expected multiplicity (default: the input's, else N + 1)");

    auto* branch = app.add_subcommand("branch", "follow a root branch of the normalized family");
    branch->add_option("--lambda-start", o.lambda_start)->capture_default_str();
    branch->add_option("--lambda-end", o.lambda_end)->capture_default_str();
    branch->add_option("--s-re", o.s_re, "start root, real part");
    branch->add_option("--s-im", o.s_im, "start root, imaginary part");
    branch->add_option("--steps-per-unit", o.steps_per_unit)->capture_default_str();
    branch->add_flag("--crossing-scan", o.scan, "scan candidate imaginary-axis crossings instead");
    branch->add_option("--omega-max", o.omega_max)->capture_default_str();
    branch->add_option("--samples", o.samples)->capture_default_str();
    branch->add_option("--scan-tolerance", o.scan_tolerance, "residual level counted as a crossing")
        ->capture_default_str();

    auto* probe = app.add_subcommand("probe-conjecture", "free-gain abscissa grid around a two-delay design");
    probe->add_option("--tau1", o.tau1, "first delay (default 1)");
    probe->add_option("--tau2", o.tau2, "second delay (default 2)");
    probe->add_option("--halfwidth", o.halfwidth)->capture_default_str();
    probe->add_option("--points", o.points, "grid points per axis")->capture_default_str();
    probe->add_option("--tolerance", o.tolerance, "margin before a grid point counts as beating s0")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << json{{"code", "invalid-input"}, {"message", e.what()}, {"context", ""}}.dump() << '\n';
        return 2;
    }

    try {
        std::ofstream file;
        if (!o.output.empty()) {
            file.open(o.output);
            if (!file) {
                throw Error(ErrorCode::invalid_input, "cannot open output file", o.output);
            }
        }
        std::ostream& target = o.output.empty() ? out : file;
        if (*spectrum) {
            detail::spectrum(o, target);
        } else if (*design) {
            detail::design(o, target);
        } else if (*simulate) {
            detail::simulate(o, target);
        } else if (*optimize) {
            detail::optimize(o, target);
        } else if (*verify) {
            detail::verify(o, target);
        } else if (*branch) {
            detail::branch(o, target);
        } else if (*probe) {
            detail::probe_conjecture(o, target);
        }
        if (!target) {
            throw Error(ErrorCode::invalid_input, "failed to write output", o.output);
        }
        return 0;
    } catch (const Error& e) {
        err << io::to_json(e).dump() << '\n';
        return is_input_error(e.code()) ? 2 : 3;
    } catch (const std::exception& e) {
        err << json{{"code", "internal"}, {"message", e.what()}, {"context", ""}}.dump() << '\n';
        return 3;
    }
}

} // namespace middelay::cli
