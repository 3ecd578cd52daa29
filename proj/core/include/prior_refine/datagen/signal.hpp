#pragma once

#include <cstdint>
#include <vector>

#include "prior_refine/fields.hpp"

namespace prior_refine::datagen {

struct ControlPoint {
    double t = 0.0;
    double v = 0.0;
};

/// Knots of a loading history. Endpoints sit at t = 0 and t = 1; interior
/// times lie in (0.1, 0.9).
struct ControlPoints {
    std::vector<ControlPoint> points;
};

/// Draws `n_points` knots: interior times uniform on (0.1, 0.9) with no two
/// interior knots closer than half the mean spacing, values uniform on
/// [0, value_bound].
ControlPoints sample_control_points(std::uint64_t seed, int n_points, double value_bound);

/// Gaussian radial-basis interpolant through the knots, kernel width equal to
/// the mean knot spacing, evaluated at `l` uniform times on [0, 1].
InputSignal interpolate_control_points(const ControlPoints& knots, int l);

/// Evaluates the same interpolant at arbitrary times.
std::vector<double> evaluate_interpolant(const ControlPoints& knots, const std::vector<double>& times);

InputSignal sample_control_signal(std::uint64_t seed, int n_points, double value_bound, int l);

}  // namespace prior_refine::datagen
