#include "prior_refine/error.hpp"

namespace prior_refine {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::numerical_instability: return "numerical-instability";
        case ErrorKind::sampling_diverged: return "sampling-diverged";
        case ErrorKind::version_mismatch: return "version-mismatch";
        case ErrorKind::truncated_blob: return "truncated-blob";
        case ErrorKind::shape_mismatch: return "shape-mismatch";
        case ErrorKind::degenerate_scaler: return "degenerate-scaler";
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::precondition: return "precondition";
        case ErrorKind::lineage_mismatch: return "lineage-mismatch";
        case ErrorKind::io: return "io";
        case ErrorKind::internal: return "internal";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace prior_refine
