#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "prior_refine/datagen/cavity.hpp"
#include "prior_refine/datagen/dataset.hpp"
#include "prior_refine/datagen/signal.hpp"
#include "prior_refine/datagen/stress.hpp"
#include "prior_refine/error.hpp"

using namespace prior_refine;
using namespace prior_refine::datagen;

namespace {

InputSignal constant_signal(double v, int l = 101) { return InputSignal::uniform(std::vector<double>(l, v)); }

double wall_max(const FieldVideo& v) {
    double m = 0.0;
    for (std::size_t t = 0; t < v.frames; ++t) {
        for (std::size_t i = 0; i < v.height; ++i) {
            m = std::max({m, std::abs(double(v.at(t, i, 0))), std::abs(double(v.at(t, i, v.width - 1)))});
        }
        for (std::size_t j = 0; j < v.width; ++j) {
            m = std::max({m, std::abs(double(v.at(t, 0, j))), std::abs(double(v.at(t, v.height - 1, j)))});
        }
    }
    return m;
}

}  // namespace

TEST(Signal, ControlPointLayout) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto k = sample_control_points(seed, 6, 2.0);
        ASSERT_EQ(k.points.size(), 6u);
        EXPECT_EQ(k.points.front().t, 0.0);
        EXPECT_EQ(k.points.back().t, 1.0);
        for (std::size_t i = 1; i + 1 < k.points.size(); ++i) {
            EXPECT_GT(k.points[i].t, 0.1);
            EXPECT_LT(k.points[i].t, 0.9);
            EXPECT_GT(k.points[i].t, k.points[i - 1].t);
        }
        for (const auto& p : k.points) {
            EXPECT_GE(p.v, 0.0);
            EXPECT_LE(p.v, 2.0);
        }
    }
}

TEST(Signal, InterpolantPassesThroughKnots) {
    const auto k = sample_control_points(7, 6, 1.0);
    std::vector<double> times;
    for (const auto& p : k.points) times.push_back(p.t);
    const auto vals = evaluate_interpolant(k, times);
    for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(vals[i], k.points[i].v, 1e-8);
}

TEST(Signal, ZeroKnotsGiveZeroSignal) {
    ControlPoints k{{{0.0, 0.0}, {1.0, 0.0}}};
    const auto s = interpolate_control_points(k, 11);
    for (double v : s.values) EXPECT_EQ(v, 0.0);
}

TEST(Signal, DeterministicAndValidated) {
    const auto a = sample_control_signal(42, 6, 1.0, 101);
    const auto b = sample_control_signal(42, 6, 1.0, 101);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.times.front(), 0.0);
    EXPECT_EQ(a.times.back(), 1.0);
    EXPECT_NO_THROW(a.validate());
    EXPECT_THROW(sample_control_signal(1, 8, 1.0, 5), Error);
}

TEST(Cavity, ZeroLidGivesZeroStreamfunction) {
    CavityConfig cfg;
    cfg.grid = 16;
    cfg.frames = 4;
    const auto v = solve_cavity(constant_signal(0.0), cfg);
    for (float x : v.data) EXPECT_EQ(x, 0.0f);
}

TEST(Cavity, WallsExactlyZeroForRandomSignals) {
    CavityConfig cfg;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto v = solve_cavity(sample_control_signal(seed, 6, 1.0, 101), cfg);
        EXPECT_EQ(wall_max(v), 0.0);
        EXPECT_NO_THROW(v.validate());
        EXPECT_EQ(v.kind, FieldKind::streamfunction);
    }
}

TEST(Cavity, ConstantLidApproachesSteadyState) {
    CavityConfig cfg;
    const auto v = solve_cavity(constant_signal(1.0), cfg);
    std::vector<double> change;
    for (std::size_t t = 1; t < v.frames; ++t) {
        double m = 0.0;
        for (std::size_t i = 0; i < v.frame_size(); ++i) m = std::max(m, double(std::abs(v.frame(t)[i] - v.frame(t - 1)[i])));
        change.push_back(m);
    }
    const std::size_t start = change.size() - v.frames / 4;
    for (std::size_t i = start + 1; i < change.size(); ++i) EXPECT_LT(change[i], change[i - 1]) << "frame " << i + 1;
}

TEST(Cavity, RejectsBadConfig) {
    CavityConfig cfg;
    cfg.grid = 8;
    EXPECT_THROW(solve_cavity(constant_signal(1.0), cfg), Error);
    cfg.grid = 32;
    cfg.frames = 1;
    EXPECT_THROW(solve_cavity(constant_signal(1.0), cfg), Error);
}

TEST(Streamfunction, ManufacturedSolutionConvergesSecondOrder) {
    std::vector<double> err;
    for (int n : {16, 32, 64}) {
        Grid2D u(n, n), v(n, n), exact(n, n);
        const double h = 1.0 / (n - 1);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const double x = c * h, y = r * h, pi = std::numbers::pi;
                exact(r, c) = std::sin(pi * x) * std::sin(pi * y);
                u(r, c) = pi * std::sin(pi * x) * std::cos(pi * y);
                v(r, c) = -pi * std::cos(pi * x) * std::sin(pi * y);
            }
        }
        const auto psi = streamfunction_from_velocity(u, v);
        double e = 0.0;
        for (std::size_t i = 0; i < psi.data.size(); ++i) e = std::max(e, std::abs(psi.data[i] - exact.data[i]));
        for (int k = 0; k < n; ++k) {
            EXPECT_EQ(psi(0, k), 0.0);
            EXPECT_EQ(psi(n - 1, k), 0.0);
            EXPECT_EQ(psi(k, 0), 0.0);
            EXPECT_EQ(psi(k, n - 1), 0.0);
        }
        err.push_back(e);
    }
    const double h[] = {1.0 / 15, 1.0 / 31, 1.0 / 63};
    for (std::size_t i = 1; i < err.size(); ++i) {
        const double order = std::log(err[i - 1] / err[i]) / std::log(h[i - 1] / h[i]);
        EXPECT_GT(order, 1.8) << "refinement " << i;
    }
}

TEST(Streamfunction, ZeroVelocityGivesZero) {
    Grid2D u(16, 16), v(16, 16);
    const auto psi = streamfunction_from_velocity(u, v);
    for (double x : psi.data) EXPECT_EQ(x, 0.0);
    u(3, 3) = std::nan("");
    EXPECT_THROW(streamfunction_from_velocity(u, v), Error);
}

TEST(Streamfunction, VelocityFromPsiIsDiscretelyDivergenceFree) {
    CavityConfig cfg;
    const auto video = solve_cavity(sample_control_signal(5, 6, 1.0, 101), cfg);
    const auto n = video.height;
    Grid2D psi(n, n);
    for (std::size_t i = 0; i < psi.data.size(); ++i) psi.data[i] = video.frame(video.frames - 1)[i];
    const auto vel = velocity_from_streamfunction(psi);
    const auto div = divergence(vel.u, vel.v);
    // nodes whose centered stencil never touches the wall-pinned velocities
    for (std::size_t r = 2; r + 2 < n; ++r) {
        for (std::size_t c = 2; c + 2 < n; ++c) EXPECT_LT(std::abs(div(r, c)), 1e-10);
    }
}

TEST(VonMises, ClosedFormIdentities) {
    for (double s : {-3.5, -1.0, 0.0, 0.25, 7.0, 123.456}) {
        Grid2D a(1, 1, s), z(1, 1, 0.0);
        EXPECT_NEAR(von_mises_field(a, z, z)(0, 0), std::abs(s), 1e-12);
        EXPECT_NEAR(von_mises_field(a, a, z)(0, 0), std::abs(s), 1e-12);
        EXPECT_NEAR(von_mises_field(z, z, a)(0, 0), std::sqrt(3.0) * std::abs(s), 1e-12);
    }
    EXPECT_THROW(von_mises_field(Grid2D(2, 2), Grid2D(2, 3), Grid2D(2, 2)), Error);
}

TEST(Stress, ZeroOutsideMaskAndZeroSignal) {
    const auto mask = dogbone_mask(48, 48);
    EXPECT_NO_THROW(mask.validate());
    const auto v = synth_masked_stress(sample_control_signal(3, 6, 5.5, 101), mask, 11, 8);
    for (std::size_t t = 0; t < v.frames; ++t) {
        for (std::size_t i = 0; i < v.frame_size(); ++i) {
            if (!mask.data[i]) EXPECT_EQ(v.frame(t)[i], 0.0f);
            EXPECT_GE(v.frame(t)[i], 0.0f);
        }
    }
    const auto z = synth_masked_stress(constant_signal(0.0), mask, 11, 8);
    for (float x : z.data) EXPECT_EQ(x, 0.0f);
    DomainMask empty{48, 48, std::vector<std::uint8_t>(48 * 48, 0)};
    EXPECT_THROW(synth_masked_stress(constant_signal(1.0), empty, 1, 4), Error);
}

TEST(Stress, DoublingSignalFollowsAmplitudeLaws) {
    const auto mask = dogbone_mask(48, 48);
    StressConfig cfg;
    const auto s = sample_control_signal(9, 6, cfg.displacement_bound, 101);
    auto s2 = s;
    for (double& x : s2.values) x *= 2.0;
    const int frames = 8;
    const auto a = synth_masked_stress(s, mask, 4, frames, cfg);
    const auto b = synth_masked_stress(s2, mask, 4, frames, cfg);
    for (int t = 0; t < frames; ++t) {
        const double time = double(t + 1) / frames;
        const double now = std::abs(s.at(time)) / cfg.displacement_bound;
        double peak = now;
        for (std::size_t i = 0; i < s.length() && s.times[i] <= time; ++i) {
            peak = std::max(peak, std::abs(s.values[i]) / cfg.displacement_bound);
        }
        const auto fa = a.frame(t), fb = b.frame(t);
        const double ma = *std::max_element(fa.begin(), fa.end());
        const double mb = *std::max_element(fb.begin(), fb.end());
        if (ma < 1e-6) continue;
        const double ratio = mb / ma;
        EXPECT_GE(ratio, 1.5);
        EXPECT_LE(ratio, 2.5);
        // von Mises is a norm of (axial, shear) parts scaled by their own laws
        const double ra = now > 0 ? axial_amplitude(2 * now) / axial_amplitude(now) : 2.0;
        const double rs = shear_amplitude(2 * peak) / shear_amplitude(peak);
        EXPECT_GE(ratio, std::min(ra, rs) - 1e-5);
        EXPECT_LE(ratio, std::max(ra, rs) + 1e-5);
    }
}

TEST(Dataset, SplitIsExactEightyTwenty) {
    for (int n : {1, 5, 10, 64, 255, 256}) {
        const auto sp = split_cases(n, 17);
        EXPECT_EQ(static_cast<int>(sp.train.size()), static_cast<int>(std::lround(0.8 * n)));
        std::set<int> all(sp.train.begin(), sp.train.end());
        for (int t : sp.test) EXPECT_TRUE(all.insert(t).second);
        EXPECT_EQ(static_cast<int>(all.size()), n);
    }
    EXPECT_EQ(split_cases(64, 3).train, split_cases(64, 3).train);
    EXPECT_NE(split_cases(64, 3).train, split_cases(64, 4).train);
}

TEST(Dataset, GenerationIsPureAndJobIndependent) {
    auto cfg = DatasetConfig::defaults(Benchmark::cavity);
    cfg.n_cases = 4;
    cfg.grid = 16;
    cfg.frames = 4;
    const auto a = generate_dataset(cfg, 1);
    const auto b = generate_dataset(cfg, 3);
    EXPECT_EQ(a.manifest, b.manifest);
    for (std::size_t i = 0; i < a.cases.size(); ++i) EXPECT_EQ(a.cases[i].field.data, b.cases[i].field.data);
    cfg.seed = 1;
    EXPECT_NE(generate_dataset(cfg, 1).manifest.config_hash, a.manifest.config_hash);
}
