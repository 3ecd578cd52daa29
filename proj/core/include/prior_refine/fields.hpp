#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prior_refine {

/// Boundary/loading history driving one case: lid velocity (m/s) or end
/// displacement (mm), sampled on a uniform grid over [0, 1] s.
struct InputSignal {
    std::vector<double> times;
    std::vector<double> values;

    std::size_t length() const noexcept { return values.size(); }

    /// Linear interpolation, clamped to the end values outside [t0, tn].
    double at(double t) const;

    /// Throws invalid_argument unless times are strictly increasing, values
    /// finite, and length >= 2.
    void validate() const;

    static InputSignal uniform(std::vector<double> values);
};

enum class FieldKind { streamfunction, von_mises, synthetic };

std::string_view to_string(FieldKind kind);
FieldKind field_kind_from_string(std::string_view name);

/// Dense row-major 2-D grid. Row 0 is y = 0 (bottom wall), column 0 is x = 0.
struct Grid2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Grid2D() = default;
    Grid2D(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool same_shape(const Grid2D& o) const { return rows == o.rows && cols == o.cols; }
};

/// Scalar solution field on a regular grid, shape (T, H, W), C-order.
struct FieldVideo {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;
    FieldKind kind = FieldKind::synthetic;
    std::string units;
    double dt = 0.0;

    FieldVideo() = default;
    FieldVideo(std::size_t t, std::size_t h, std::size_t w, float fill = 0.0f)
        : frames(t), height(h), width(w), data(t * h * w, fill) {}

    std::size_t frame_size() const noexcept { return height * width; }
    std::size_t size() const noexcept { return data.size(); }

    float& at(std::size_t t, std::size_t h, std::size_t w) { return data[(t * height + h) * width + w]; }
    float at(std::size_t t, std::size_t h, std::size_t w) const { return data[(t * height + h) * width + w]; }

    std::span<float> frame(std::size_t t) { return {data.data() + t * frame_size(), frame_size()}; }
    std::span<const float> frame(std::size_t t) const { return {data.data() + t * frame_size(), frame_size()}; }

    bool same_shape(const FieldVideo& o) const {
        return frames == o.frames && height == o.height && width == o.width;
    }

    /// Finite entries, nonzero extents, and zero walls for streamfunctions.
    void validate() const;
};

/// Binary material/void map, shape (H, W).
struct DomainMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(std::size_t h, std::size_t w) const { return data[h * width + w]; }

    /// Values in {0,1} and at least one 1 away from the border.
    void validate() const;
};

}  // namespace prior_refine
