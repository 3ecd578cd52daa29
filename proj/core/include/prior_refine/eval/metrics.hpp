#pragma once

#include <cstddef>
#include <vector>

#include "prior_refine/fields.hpp"

namespace prior_refine::eval {

/// Frame-averaged relative error. Frames whose ground truth has zero norm
/// are counted in `zero_frames`; with `exclude_zero_frames` they are left out
/// of the average, otherwise the value is +inf.
struct RelativeError {
    double value = 0.0;
    std::size_t zero_frames = 0;

    bool flagged() const noexcept { return zero_frames > 0; }
};

/// (1/T) sum_t ||true_t - pred_t||_2 / ||true_t||_2
RelativeError rel_l2(const FieldVideo& truth, const FieldVideo& pred, bool exclude_zero_frames = true);

/// Same with 1-norms.
RelativeError rmae(const FieldVideo& truth, const FieldVideo& pred, bool exclude_zero_frames = true);

/// Mean absolute elementwise deviation, in field units.
double mae(const FieldVideo& truth, const FieldVideo& pred);

struct Percentiles {
    double best = 0.0;
    double p25 = 0.0;
    double p50 = 0.0;
    double p75 = 0.0;
    double worst = 0.0;
};

/// Min, quartiles and max; quartiles interpolate linearly between order
/// statistics at rank q (n - 1).
Percentiles percentile_report(std::vector<double> values);

}  // namespace prior_refine::eval
