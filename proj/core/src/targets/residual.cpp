#include "prior_refine/targets/residual.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <limits>

#include "prior_refine/error.hpp"
#include "prior_refine/log.hpp"

namespace prior_refine::targets {

double to_unit_range(double x, double lo, double hi) { return (x - lo) / (hi - lo) * 2.0 - 1.0; }

double from_unit_range(double y, double lo, double hi) { return (y + 1.0) / 2.0 * (hi - lo) + lo; }

void ResidualScaler::validate() const {
    require(std::isfinite(r_min) && std::isfinite(r_max), ErrorKind::degenerate_scaler, "scaler bounds must be finite");
    require(r_min < r_max, ErrorKind::degenerate_scaler,
            "degenerate residual scaler: r_min (" + std::to_string(r_min) + ") >= r_max (" + std::to_string(r_max) + ")");
}

FieldNormalizer FieldNormalizer::fit(std::span<const FieldVideo> videos) {
    require(!videos.empty(), ErrorKind::invalid_argument, "cannot fit a normalizer on no videos");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const FieldVideo& v : videos) {
        for (float x : v.data) {
            lo = std::min(lo, static_cast<double>(x));
            hi = std::max(hi, static_cast<double>(x));
        }
    }
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    return {lo, hi};
}

FieldVideo make_residual(const FieldVideo& gt, const FieldVideo& prior) {
    require(gt.same_shape(prior), ErrorKind::invalid_argument, "ground truth and prior shapes differ");
    FieldVideo out = gt;
    out.kind = FieldKind::synthetic;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = gt.data[i] - prior.data[i];
    return out;
}

ResidualScaler fit_scaler(std::span<const FieldVideo> residuals) {
    require(!residuals.empty(), ErrorKind::invalid_argument, "cannot fit a scaler on no residuals");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const FieldVideo& r : residuals) {
        for (float v : r.data) {
            lo = std::min(lo, static_cast<double>(v));
            hi = std::max(hi, static_cast<double>(v));
        }
    }
    ResidualScaler scaler{lo, hi};
    scaler.validate();
    return scaler;
}

FieldVideo normalize(const FieldVideo& residual, const ResidualScaler& scaler) {
    scaler.validate();
    FieldVideo out = residual;
    for (float& v : out.data) v = static_cast<float>(scaler.normalize(v));
    return out;
}

FieldVideo denormalize(const FieldVideo& normalized, const ResidualScaler& scaler) {
    scaler.validate();
    FieldVideo out = normalized;
    std::size_t outside = 0;
    for (float& v : out.data) {
        if (std::abs(v) > 1.05f) ++outside;
        v = static_cast<float>(scaler.denormalize(v));
    }
    if (outside > 0) {
        log::warn(std::to_string(outside) + " of " + std::to_string(out.data.size()) +
                  " residual values lie outside [-1.05, 1.05]; denormalized without clamping");
    }
    return out;
}

FieldVideo reconstruct(const FieldVideo& normalized, const FieldVideo& prior, const ResidualScaler& scaler) {
    require(normalized.same_shape(prior), ErrorKind::invalid_argument, "residual and prior shapes differ");
    scaler.validate();
    FieldVideo out = normalized;
    std::size_t outside = 0;
    // denormalize and add in double so the result is rounded to float once
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (std::abs(out.data[i]) > 1.05f) ++outside;
        out.data[i] = static_cast<float>(scaler.denormalize(out.data[i]) + static_cast<double>(prior.data[i]));
    }
    if (outside > 0) {
        log::warn(std::to_string(outside) + " of " + std::to_string(out.data.size()) +
                  " residual values lie outside [-1.05, 1.05]; denormalized without clamping");
    }
    out.kind = prior.kind;
    out.units = prior.units;
    out.dt = prior.dt;
    return out;
}

}  // namespace prior_refine::targets
