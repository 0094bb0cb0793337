#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace middelay {

/// Failure categories. The first group describes bad input (CLI exit code 2),
/// the second numerical failure on valid input (CLI exit code 3).
enum class ErrorCode {
    invalid_input,
    invalid_system,
    invalid_window,
    multiplicity_exceeds_bound,
    no_exclusion_strip,
    no_equilibrium,
    trivial_branch,

    boundary_root_suspected,
    quadrature_non_convergent,
    refinement_stagnation,
    empty_spectrum,
    singular_system,
    inconsistent_target,
    vanishing_denominator,
    corrector_divergence,
    insufficient_extrema,
    evaluation_overflow,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::invalid_system: return "invalid-system";
    case ErrorCode::invalid_window: return "invalid-window";
    case ErrorCode::multiplicity_exceeds_bound: return "multiplicity-exceeds-bound";
    case ErrorCode::no_exclusion_strip: return "no-exclusion-strip";
    case ErrorCode::no_equilibrium: return "no-nonzero-equilibrium";
    case ErrorCode::trivial_branch: return "trivial-branch";
    case ErrorCode::boundary_root_suspected: return "boundary-root-suspected";
    case ErrorCode::quadrature_non_convergent: return "quadrature-non-convergent";
    case ErrorCode::refinement_stagnation: return "refinement-stagnation";
    case ErrorCode::empty_spectrum: return "empty-spectrum-in-window";
    case ErrorCode::singular_system: return "singular-system";
    case ErrorCode::inconsistent_target: return "inconsistent-target";
    case ErrorCode::vanishing_denominator: return "vanishing-denominator";
    case ErrorCode::corrector_divergence: return "corrector-divergence";
    case ErrorCode::insufficient_extrema: return "insufficient-extrema";
    case ErrorCode::evaluation_overflow: return "evaluation-overflow";
    }
    return "unknown";
}

[[nodiscard]] constexpr bool is_input_error(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::invalid_input:
    case ErrorCode::invalid_system:
    case ErrorCode::invalid_window:
    case ErrorCode::multiplicity_exceeds_bound:
    case ErrorCode::no_exclusion_strip:
    case ErrorCode::no_equilibrium:
    case ErrorCode::trivial_branch:
        return true;
    default:
        return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string context = {})
        : std::runtime_error(message), code_(code), context_(std::move(context)) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] const std::string& context() const noexcept { return context_; }

private:
    ErrorCode code_;
    std::string context_;
};

} // namespace middelay
