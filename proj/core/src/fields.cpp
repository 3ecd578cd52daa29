#include "prior_refine/fields.hpp"

#include <algorithm>
#include <cmath>

#include "prior_refine/error.hpp"

namespace prior_refine {

double InputSignal::at(double t) const {
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto hi = static_cast<std::size_t>(it - times.begin());
    const auto lo = hi - 1;
    const double w = (t - times[lo]) / (times[hi] - times[lo]);
    return (1.0 - w) * values[lo] + w * values[hi];
}

void InputSignal::validate() const {
    require(values.size() >= 2, ErrorKind::invalid_argument, "signal needs at least 2 samples");
    require(times.size() == values.size(), ErrorKind::invalid_argument, "signal times/values length differ");
    for (std::size_t i = 0; i < values.size(); ++i) {
        require(std::isfinite(values[i]) && std::isfinite(times[i]), ErrorKind::invalid_argument,
                "signal sample " + std::to_string(i) + " is not finite");
        if (i > 0) {
            require(times[i] > times[i - 1], ErrorKind::invalid_argument, "signal times must strictly increase");
        }
    }
}

InputSignal InputSignal::uniform(std::vector<double> values) {
    InputSignal s;
    const std::size_t l = values.size();
    s.times.resize(l);
    for (std::size_t i = 0; i < l; ++i) s.times[i] = l > 1 ? static_cast<double>(i) / static_cast<double>(l - 1) : 0.0;
    s.values = std::move(values);
    return s;
}

std::string_view to_string(FieldKind kind) {
    switch (kind) {
        case FieldKind::streamfunction: return "streamfunction";
        case FieldKind::von_mises: return "von_mises";
        case FieldKind::synthetic: return "synthetic";
    }
    return "synthetic";
}

FieldKind field_kind_from_string(std::string_view name) {
    if (name == "streamfunction") return FieldKind::streamfunction;
    if (name == "von_mises") return FieldKind::von_mises;
    if (name == "synthetic") return FieldKind::synthetic;
    fail(ErrorKind::invalid_argument, "unknown field kind '" + std::string(name) + "'");
}

void FieldVideo::validate() const {
    require(frames >= 1 && height >= 1 && width >= 1, ErrorKind::invalid_argument, "field video has an empty extent");
    require(data.size() == frames * height * width, ErrorKind::shape_mismatch, "field video data size does not match shape");
    for (float v : data) require(std::isfinite(v), ErrorKind::invalid_argument, "field video has non-finite entries");
    if (kind != FieldKind::streamfunction) return;
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t w = 0; w < width; ++w) {
            require(at(t, 0, w) == 0.0f && at(t, height - 1, w) == 0.0f, ErrorKind::invalid_argument,
                    "streamfunction is nonzero on a horizontal wall");
        }
        for (std::size_t h = 0; h < height; ++h) {
            require(at(t, h, 0) == 0.0f && at(t, h, width - 1) == 0.0f, ErrorKind::invalid_argument,
                    "streamfunction is nonzero on a vertical wall");
        }
    }
}

void DomainMask::validate() const {
    require(data.size() == height * width && height > 0 && width > 0, ErrorKind::shape_mismatch,
            "mask data size does not match shape");
    bool interior = false;
    for (std::size_t h = 0; h < height; ++h) {
        for (std::size_t w = 0; w < width; ++w) {
            const auto v = at(h, w);
            require(v == 0 || v == 1, ErrorKind::invalid_argument, "mask values must be 0 or 1");
            if (v == 1 && h > 0 && w > 0 && h + 1 < height && w + 1 < width) interior = true;
        }
    }
    require(interior, ErrorKind::invalid_argument, "mask has no interior material");
}

}  // namespace prior_refine
