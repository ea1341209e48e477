#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ergolab {

enum class ErrorCode {
    InvalidArgument,
    NonDissipative,
    SingularG,
    LipschitzViolation,
    GrowthViolation,
    UnknownPreset,
    BudgetExceeded,
    NonFiniteState,
    IllConditionedRegression,
    NonFiniteY,
    NonMonotoneAlpha,
    DiscountedDiverged,
    FitDiverged,
    ParseError,
    UnknownKey,
    MissingRequired,
    TypeMismatch,
    IoError,
    FormatError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code. Every failure the library
/// reports through exceptions uses this type.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonDissipative: return "NonDissipative";
        case ErrorCode::SingularG: return "SingularG";
        case ErrorCode::LipschitzViolation: return "LipschitzViolation";
        case ErrorCode::GrowthViolation: return "GrowthViolation";
        case ErrorCode::UnknownPreset: return "UnknownPreset";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::NonFiniteState: return "NonFiniteState";
        case ErrorCode::IllConditionedRegression: return "IllConditionedRegression";
        case ErrorCode::NonFiniteY: return "NonFiniteY";
        case ErrorCode::NonMonotoneAlpha: return "NonMonotoneAlpha";
        case ErrorCode::DiscountedDiverged: return "DiscountedDiverged";
        case ErrorCode::FitDiverged: return "FitDiverged";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnknownKey: return "UnknownKey";
        case ErrorCode::MissingRequired: return "MissingRequired";
        case ErrorCode::TypeMismatch: return "TypeMismatch";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::FormatError: return "FormatError";
    }
    return "Unknown";
}

}  // namespace ergolab
