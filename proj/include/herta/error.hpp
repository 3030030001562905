#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace herta {

enum class ErrorCode {
    EmptyGraph,
    ParseError,
    NonPositiveLambda,
    BadDistribution,
    NotPositiveDefinite,
    DimensionMismatch,
    NoConvergence,
    DegenerateScores,
    TooLargeForDense,
    NotOneHot,
    BadParams,
    Io,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::NonPositiveLambda: return "NonPositiveLambda";
        case ErrorCode::BadDistribution: return "BadDistribution";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::DegenerateScores: return "DegenerateScores";
        case ErrorCode::TooLargeForDense: return "TooLargeForDense";
        case ErrorCode::NotOneHot: return "NotOneHot";
        case ErrorCode::BadParams: return "BadParams";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

} // namespace detail

} // namespace herta
