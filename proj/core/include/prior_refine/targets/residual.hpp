#pragma once

#include <span>

#include "prior_refine/fields.hpp"

namespace prior_refine::targets {

/// Affine map of [lo, hi] onto [-1, 1] and back.
double to_unit_range(double x, double lo, double hi);
double from_unit_range(double y, double lo, double hi);

/// Global residual extrema of the training split, in field units.
struct ResidualScaler {
    double r_min = -1.0;
    double r_max = 1.0;

    double normalize(double r) const { return to_unit_range(r, r_min, r_max); }
    double denormalize(double r) const { return from_unit_range(r, r_min, r_max); }

    /// Throws degenerate_scaler unless r_min < r_max and both finite.
    void validate() const;
};

/// Dataset-wide min/max normalization of full fields onto [-1, 1]; the
/// default is the identity.
struct FieldNormalizer {
    double lo = -1.0;
    double hi = 1.0;

    double normalize(double x) const { return to_unit_range(x, lo, hi); }
    double denormalize(double y) const { return from_unit_range(y, lo, hi); }

    /// Extrema over the given videos; a constant set is widened by +-1.
    static FieldNormalizer fit(std::span<const FieldVideo> videos);
};

/// gt - prior, elementwise.
FieldVideo make_residual(const FieldVideo& gt, const FieldVideo& prior);

/// Extrema over every element of every residual. Callers pass the training
/// split only.
ResidualScaler fit_scaler(std::span<const FieldVideo> residuals);

FieldVideo normalize(const FieldVideo& residual, const ResidualScaler& scaler);

/// Not clamped: values outside [-1, 1] map beyond [r_min, r_max]. Logs a
/// warning when any |value| exceeds 1.05.
FieldVideo denormalize(const FieldVideo& normalized, const ResidualScaler& scaler);

/// prior + denormalize(normalized).
FieldVideo reconstruct(const FieldVideo& normalized, const FieldVideo& prior, const ResidualScaler& scaler);

}  // namespace prior_refine::targets
