#pragma once

#include <stdexcept>
#include <string>

namespace synthforge {

// Failure categories; the CLI maps these onto its exit-code contract.
enum class ErrorKind {
    InvalidInput,
    Format,
    InsufficientData,
    OutOfRange,
    NotFound,
    DegenerateSignal,
    DegenerateGeometry,
    DegenerateTransform,
    EmptyForeground,
    Io,
    Integrity,
    Capacity,
    StrategyUnavailable,
    GenerationFailure,
    UndefinedMetric,
    RegionOutOfBounds,
    Config,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::Format: return "format";
        case ErrorKind::InsufficientData: return "insufficient-data";
        case ErrorKind::OutOfRange: return "out-of-range";
        case ErrorKind::NotFound: return "not-found";
        case ErrorKind::DegenerateSignal: return "degenerate-signal";
        case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
        case ErrorKind::DegenerateTransform: return "degenerate-transform";
        case ErrorKind::EmptyForeground: return "empty-foreground";
        case ErrorKind::Io: return "io";
        case ErrorKind::Integrity: return "integrity";
        case ErrorKind::Capacity: return "capacity";
        case ErrorKind::StrategyUnavailable: return "strategy-unavailable";
        case ErrorKind::GenerationFailure: return "generation-failure";
        case ErrorKind::UndefinedMetric: return "undefined-metric";
        case ErrorKind::RegionOutOfBounds: return "region-out-of-bounds";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, std::string(error_kind_name(kind)) + ": " + message);
}

}  // namespace synthforge
