#include "prior_refine/datagen/stress.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "prior_refine/error.hpp"

namespace prior_refine::datagen {

Grid2D von_mises_field(const Grid2D& s11, const Grid2D& s22, const Grid2D& s12) {
    require(s11.same_shape(s22) && s11.same_shape(s12), ErrorKind::invalid_argument, "stress component shapes differ");
    Grid2D out(s11.rows, s11.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double a = s11.data[i];
        const double b = s22.data[i];
        const double c = s12.data[i];
        require(std::isfinite(a) && std::isfinite(b) && std::isfinite(c), ErrorKind::invalid_argument,
                "stress components must be finite");
        out.data[i] = std::sqrt(std::max(0.0, a * a + b * b - a * b + 3.0 * c * c));
    }
    return out;
}

double DogboneGeometry::width_at(double x) const {
    // Distance into the specimen from the nearer grip end.
    const double from_end = std::min(x, length - x);
    const double s = (from_end - grip_length) / fillet;
    const double blend = 0.5 * (1.0 + std::tanh(2.0 * s));
    return grip_width + (gauge_width - grip_width) * blend;
}

DomainMask dogbone_mask(int height, int width, const DogboneGeometry& geometry) {
    require(height >= 8 && width >= 8, ErrorKind::invalid_argument, "mask grid too small");
    DomainMask mask;
    mask.height = static_cast<std::size_t>(height);
    mask.width = static_cast<std::size_t>(width);
    mask.data.assign(mask.height * mask.width, 0);
    const double pixel = geometry.length / width;
    for (int h = 0; h < height; ++h) {
        const double y = (h + 0.5) * geometry.length / height - 0.5 * geometry.length;
        for (int w = 0; w < width; ++w) {
            const double x = (w + 0.5) * pixel;
            if (std::abs(y) <= 0.5 * geometry.width_at(x)) mask.data[static_cast<std::size_t>(h * width + w)] = 1;
        }
    }
    return mask;
}

double axial_amplitude(double x) { return x / (1.0 + 0.25 * x); }
double shear_amplitude(double x) { return x / (1.0 + 0.1 * x); }

FieldVideo synth_masked_stress(const InputSignal& signal, const DomainMask& mask, std::uint64_t seed, int frames,
                               const StressConfig& config) {
    signal.validate();
    require(frames >= 2, ErrorKind::invalid_argument, "need at least 2 frames");
    require(mask.data.size() == mask.height * mask.width, ErrorKind::shape_mismatch, "mask data size mismatch");
    require(std::any_of(mask.data.begin(), mask.data.end(), [](auto v) { return v != 0; }),
            ErrorKind::invalid_argument, "mask is all zero");
    mask.validate();

    const auto H = mask.height;
    const auto W = mask.width;
    const DogboneGeometry& geo = config.geometry;

    // Seeded smooth spatial modes.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(-0.15, 0.15);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    constexpr int kModes = 3;
    std::array<double, kModes> a11{}, a12{}, px{}, py{};
    for (int k = 0; k < kModes; ++k) {
        a11[k] = amp(rng);
        a12[k] = amp(rng);
        px[k] = phase(rng);
        py[k] = phase(rng);
    }

    Grid2D axial(H, W), lateral(H, W), shear(H, W);
    for (std::size_t h = 0; h < H; ++h) {
        const double y = (static_cast<double>(h) + 0.5) / static_cast<double>(H) - 0.5;
        for (std::size_t w = 0; w < W; ++w) {
            const double xn = (static_cast<double>(w) + 0.5) / static_cast<double>(W);
            const double width = geo.width_at(xn * geo.length);
            const double concentration = geo.gauge_width / width;
            double m11 = 1.0, m12 = 0.0;
            for (int k = 0; k < kModes; ++k) {
                const double kx = std::numbers::pi * (k + 1) * xn + px[k];
                const double ky = std::numbers::pi * (k + 1) * y + py[k];
                m11 += a11[k] * std::cos(kx) * std::cos(ky);
                m12 += a12[k] * std::sin(kx) * std::cos(ky);
            }
            // Width gradient drives lateral and shear stress near the fillets.
            const double dx = 1e-3 * geo.length;
            const double slope = (geo.width_at(xn * geo.length + dx) - geo.width_at(xn * geo.length - dx)) / (2.0 * dx);
            axial(h, w) = concentration * m11;
            lateral(h, w) = 0.3 * std::abs(slope) * concentration;
            shear(h, w) = (0.25 + std::abs(slope)) * concentration * (m12 + 2.0 * y);
        }
    }

    FieldVideo video(static_cast<std::size_t>(frames), H, W);
    video.kind = FieldKind::von_mises;
    video.units = "MPa";
    video.dt = 1.0 / frames;

    // Running maximum of |signal| over the signal's own samples up to each frame.
    const double scale = config.stress_scale;
    Grid2D s11(H, W), s22(H, W), s12(H, W);
    for (int t = 0; t < frames; ++t) {
        const double time = static_cast<double>(t + 1) / frames;
        const double now = std::abs(signal.at(time)) / config.displacement_bound;
        double peak = now;
        for (std::size_t i = 0; i < signal.length() && signal.times[i] <= time; ++i) {
            peak = std::max(peak, std::abs(signal.values[i]) / config.displacement_bound);
        }
        const double ga = scale * axial_amplitude(now);
        const double gs = scale * shear_amplitude(peak) * 0.2;
        for (std::size_t i = 0; i < s11.data.size(); ++i) {
            s11.data[i] = ga * axial.data[i];
            s22.data[i] = ga * lateral.data[i];
            s12.data[i] = gs * shear.data[i];
        }
        const Grid2D vm = von_mises_field(s11, s22, s12);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t w = 0; w < W; ++w) {
                video.at(static_cast<std::size_t>(t), h, w) = mask.at(h, w) ? static_cast<float>(vm(h, w)) : 0.0f;
            }
        }
    }
    return video;
}

}  // namespace prior_refine::datagen
