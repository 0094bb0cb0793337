#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "middelay/branch_analysis.hpp"
#include "middelay/dde_sim.hpp"
#include "middelay/error.hpp"
#include "middelay/gain_opt.hpp"
#include "middelay/mid_design.hpp"
#include "middelay/quasipoly.hpp"
#include "middelay/rootfinding.hpp"

namespace middelay::io {

using json = nlohmann::ordered_json;

/// Inline JSON (first non-blank character '{') or a path to a JSON file.
[[nodiscard]] inline json load_json(const std::string& source) {
    const auto first = source.find_first_not_of(" \t\r\n");
    std::string text;
    if (first != std::string::npos && source[first] == '{') {
        text = source;
    } else {
        std::ifstream in(source);
        if (!in) {
            throw Error(ErrorCode::invalid_input, "cannot open input file", source);
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_input, "input is not valid JSON", e.what());
    }
}

namespace detail {

inline double number(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw Error(ErrorCode::invalid_input, std::string("expected a number field '") + key + "'");
    }
    return j.at(key).get<double>();
}

inline std::vector<double> numbers(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) {
        throw Error(ErrorCode::invalid_input, std::string("expected an array field '") + key + "'");
    }
    std::vector<double> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_number()) {
            throw Error(ErrorCode::invalid_input, std::string("non-numeric entry in '") + key + "'");
        }
        out.push_back(v.get<double>());
    }
    return out;
}

} // namespace detail

/// A system is either {"terms": [{"coefficients": [c0, c1, ...], "delay": tau}, ...]}
/// or the feedback form {"a0": a0, "gains": [...], "delays": [...]} meaning
/// s + a0 - sum gains[i] exp(-s delays[i]). Design outputs nest it under "system".
[[nodiscard]] inline Quasipolynomial system_from_json(const json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::invalid_input, "system must be a JSON object");
    }
    if (j.contains("system")) {
        return system_from_json(j.at("system"));
    }
    if (j.contains("terms")) {
        if (!j.at("terms").is_array()) {
            throw Error(ErrorCode::invalid_input, "'terms' must be an array");
        }
        std::vector<QuasiTerm> terms;
        for (const auto& t : j.at("terms")) {
            terms.push_back({Polynomial(detail::numbers(t, "coefficients")), detail::number(t, "delay")});
        }
        return Quasipolynomial(std::move(terms));
    }
    const auto gains = detail::numbers(j, "gains");
    const auto delays = detail::numbers(j, "delays");
    return feedback_system(detail::number(j, "a0"), gains, delays);
}

[[nodiscard]] inline json to_json(const Quasipolynomial& qp) {
    if (const auto form = as_feedback_form(qp)) {
        return {{"a0", form->a0}, {"gains", form->gains}, {"delays", form->delays}};
    }
    json terms = json::array();
    for (const auto& t : qp.terms()) {
        const auto c = t.poly.coefficients();
        terms.push_back({{"coefficients", std::vector<double>(c.begin(), c.end())}, {"delay", t.delay}});
    }
    return {{"terms", terms}};
}

[[nodiscard]] inline json to_json(const Rectangle& r) {
    return {{"re_low", r.re_low}, {"re_high", r.re_high}, {"im_low", r.im_low}, {"im_high", r.im_high}};
}

[[nodiscard]] inline json to_json(const RootCertificate& c) {
    return {{"re", c.value.real()},
            {"im", c.value.imag()},
            {"multiplicity", c.multiplicity},
            {"residual", c.residual},
            {"cluster_radius", c.cluster_radius}};
}

[[nodiscard]] inline json to_json(const SpectrumResult& s) {
    json roots = json::array();
    for (const auto& r : s.roots) {
        roots.push_back(to_json(r));
    }
    return {{"window", to_json(s.region)}, {"count", s.total_count}, {"roots", roots}};
}

[[nodiscard]] inline json to_json(const OneDelayDesign& d) {
    return {{"design", "one-delay"}, {"a0", d.a0},       {"tau1", d.tau1},
            {"s0", d.s_star},        {"a1", d.a1},       {"multiplicity", 2},
            {"system", to_json(d.quasipolynomial())}};
}

[[nodiscard]] inline json to_json(const TwoDelayDesign& d) {
    return {{"design", "two-delay"},
            {"a0", d.a0},
            {"tau1", d.tau1},
            {"tau2", d.tau2},
            {"s0", d.s0},
            {"a1", d.a1},
            {"a2", d.a2},
            {"multiplicity", 3},
            {"system", to_json(d.quasipolynomial())}};
}

[[nodiscard]] inline json to_json(const MultiplicitySolution& m) {
    return {{"design", "multiplicity"},
            {"a0", m.a0},
            {"s0", m.s0},
            {"gains", m.gains},
            {"delays", m.delays},
            {"residual", m.residual},
            {"multiplicity", m.delays.size() + 1},
            {"system", to_json(m.quasipolynomial())}};
}

[[nodiscard]] inline json to_json(const PlateletModel& m) {
    return {{"n", m.n}, {"theta", m.theta}, {"gamma", m.gamma}, {"g0", m.g0}, {"tau1", m.tau1}, {"T", m.T}};
}

[[nodiscard]] inline json platelet_json(const PlateletModel& m, const PlateletFeedback& fb) {
    const auto lin = linearize_platelet(m, fb);
    json out = {{"design", "platelet"},
                {"model", to_json(m)},
                {"tau2", m.tau2()},
                {"y_star", fb.y_star},
                {"g_prime", fb.g_prime},
                {"s0", fb.s0},
                {"alpha1", fb.alpha1},
                {"alpha2", fb.alpha2},
                {"u0", fb.u0},
                {"mid_a1", fb.design.a1},
                {"mid_a2", fb.design.a2},
                {"multiplicity", 3},
                {"system", to_json(lin.quasipolynomial())}};
    try {
        out["y_eq"] = equilibrium(m);
    } catch (const Error&) {
        out["y_eq"] = nullptr;
    }
    return out;
}

[[nodiscard]] inline json to_json(const MultiplicityReport& r) {
    return {{"s0_re", r.s0.real()},
            {"s0_im", r.s0.imag()},
            {"multiplicity", r.multiplicity},
            {"derivative_moduli", r.derivative_moduli},
            {"tolerances", r.tolerances},
            {"passed", r.passed}};
}

[[nodiscard]] inline json to_json(const OptimizationResult& r) {
    json params = json::object();
    for (const auto& [k, v] : r.parameters) {
        params[k] = v;
    }
    json out = {{"family", std::string(to_string(r.family))},
                {"parameters", params},
                {"abscissa", r.abscissa},
                {"certified_abscissa", r.certified_abscissa},
                {"feasible", r.feasible},
                {"evaluations", r.evaluations}};
    if (r.family == Family::free_gains_scan) {
        out["counterexample"] = r.counterexample;
    }
    return out;
}

[[nodiscard]] inline json to_json(const ProgressEvent& e) {
    json values = json::object();
    for (const auto& [k, v] : e.values) {
        values[k] = v;
    }
    return {{"stage", e.stage}, {"index", e.index}, {"total", e.total}, {"values", values}};
}

[[nodiscard]] inline json to_json(const Error& e) {
    return {{"code", std::string(to_string(e.code()))}, {"message", e.what()}, {"context", e.context()}};
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_spectrum_csv(std::ostream& out, const SpectrumResult& s) {
    out << "re,im,multiplicity,residual\n";
    for (const auto& r : s.roots) {
        out << format_double(r.value.real()) << ',' << format_double(r.value.imag()) << ',' << r.multiplicity << ','
            << format_double(r.residual) << '\n';
    }
}

inline void write_branch_csv(std::ostream& out, const std::vector<BranchPoint>& path) {
    out << "lambda,re,im,residual\n";
    for (const auto& p : path) {
        out << format_double(p.lambda) << ',' << format_double(p.s.real()) << ',' << format_double(p.s.imag()) << ','
            << format_double(p.residual) << '\n';
    }
}

[[nodiscard]] inline json to_json(const Trajectory& t) {
    return {{"dt", t.dt}, {"left_domain", t.left_domain}, {"t", t.times}, {"y", t.values}};
}

} // namespace middelay::io
