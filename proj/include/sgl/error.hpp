#pragma once

#include <stdexcept>
#include <string>

namespace sgl {

enum class ErrorCode {
    DuplicateId,
    UnknownId,
    SelfEdge,
    DuplicateEdge,
    InvalidArgument,
    Parse,
    Backend,
    Timeout,
    Replay,
    Io,
    Conflict,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DuplicateId: return "duplicate-id";
    case ErrorCode::UnknownId: return "unknown-id";
    case ErrorCode::SelfEdge: return "self-edge";
    case ErrorCode::DuplicateEdge: return "duplicate-edge";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Backend: return "backend";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::Replay: return "replay";
    case ErrorCode::Io: return "io";
    case ErrorCode::Conflict: return "conflict";
    }
    return "unknown";
}

/// Every recoverable failure in the engine is reported as an sgl::Error;
/// callers branch on code() (the CLI maps codes to exit statuses).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace sgl
