#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prior_refine {

enum class ErrorKind {
    invalid_argument,
    numerical_instability,
    sampling_diverged,
    version_mismatch,
    truncated_blob,
    shape_mismatch,
    degenerate_scaler,
    configuration,
    precondition,
    lineage_mismatch,
    io,
    internal,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and tests)
/// can tell a truncated blob from a version mismatch without parsing text.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace prior_refine
