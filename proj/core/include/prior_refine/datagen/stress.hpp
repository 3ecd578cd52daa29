#pragma once

#include <cstdint>

#include "prior_refine/fields.hpp"

namespace prior_refine::datagen {

/// Pointwise equivalent stress sqrt(s11^2 + s22^2 - s11*s22 + 3*s12^2).
Grid2D von_mises_field(const Grid2D& s11, const Grid2D& s22, const Grid2D& s12);

/// Dogbone specimen geometry in millimetres, laid out along x and centred in y.
struct DogboneGeometry {
    double length = 110.0;
    double grip_width = 30.0;
    double gauge_width = 20.0;
    double grip_length = 30.0;
    double fillet = 6.0;  ///< width of the smooth grip-to-gauge transition

    /// Specimen width at axial position x (mm).
    double width_at(double x) const;
};

/// Rasterizes the specimen onto an (H, W) grid spanning `length` mm in both
/// directions.
DomainMask dogbone_mask(int height, int width, const DogboneGeometry& geometry = {});

/// Amplitude laws of the synthetic stress generator, in units of the signal
/// normalized by its bound. Both saturate, mimicking strain hardening.
double axial_amplitude(double x);
double shear_amplitude(double x);

struct StressConfig {
    double displacement_bound = 5.5;  ///< mm; 5 % nominal strain of a 110 mm specimen
    double stress_scale = 300.0;      ///< MPa
    DogboneGeometry geometry;
};

/// Smooth von Mises-like video: axial stress follows the current end
/// displacement, shear follows its running maximum (a plastic memory), both
/// shaped by `seed`-dependent smooth spatial modes and exactly zero where
/// `mask` is zero.
FieldVideo synth_masked_stress(const InputSignal& signal, const DomainMask& mask, std::uint64_t seed, int frames,
                               const StressConfig& config = {});

}  // namespace prior_refine::datagen
