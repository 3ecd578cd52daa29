#include <gtest/gtest.h>

#include <random>

#include "prior_refine/error.hpp"
#include "prior_refine/targets/residual.hpp"

using namespace prior_refine;
using namespace prior_refine::targets;

namespace {

FieldVideo random_video(std::mt19937_64& rng, double scale, std::size_t t = 4, std::size_t h = 8, std::size_t w = 8) {
    std::normal_distribution<double> d(0.0, scale);
    FieldVideo v(t, h, w);
    for (float& x : v.data) x = static_cast<float>(d(rng));
    return v;
}

}  // namespace

TEST(Residual, BasicIdentities) {
    std::mt19937_64 rng(1);
    const auto gt = random_video(rng, 1.0);
    for (float x : make_residual(gt, gt).data) EXPECT_EQ(x, 0.0f);
    const FieldVideo zero(gt.frames, gt.height, gt.width);
    EXPECT_EQ(make_residual(gt, zero).data, gt.data);
    EXPECT_THROW(make_residual(gt, FieldVideo(1, 2, 3)), Error);
}

TEST(Residual, FitScalerUsesGlobalExtrema) {
    FieldVideo a(1, 1, 3), b(1, 1, 2);
    a.data = {-0.3f, 0.5f, 1.1f};
    b.data = {-2.0f, 2.0f};
    std::vector<FieldVideo> one{a};
    const auto s1 = fit_scaler(one);
    EXPECT_FLOAT_EQ(s1.r_min, -0.3f);
    EXPECT_FLOAT_EQ(s1.r_max, 1.1f);
    std::vector<FieldVideo> both{a, b};
    const auto s2 = fit_scaler(both);
    EXPECT_EQ(s2.r_min, -2.0);
    EXPECT_EQ(s2.r_max, 2.0);
    FieldVideo c(1, 2, 2, 0.7f);
    std::vector<FieldVideo> constant{c};
    try {
        fit_scaler(constant);
        ADD_FAILURE() << "constant residuals must be rejected";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_scaler);
    }
    EXPECT_THROW(fit_scaler(std::vector<FieldVideo>{}), Error);
}

TEST(Residual, AffineEndpoints) {
    const ResidualScaler s{-2.0, 2.0};
    EXPECT_EQ(s.normalize(0.0), 0.0);
    EXPECT_EQ(s.normalize(-2.0), -1.0);
    EXPECT_EQ(s.normalize(2.0), 1.0);
    FieldVideo prior(1, 1, 2);
    prior.data = {3.0f, -1.0f};
    FieldVideo rhat(1, 1, 2, -1.0f);
    const auto x = reconstruct(rhat, prior, ResidualScaler{-0.5, 4.0});
    EXPECT_FLOAT_EQ(x.data[0], 2.5f);
    EXPECT_FLOAT_EQ(x.data[1], -1.5f);
}

TEST(Residual, NormalizeDenormalizeInverse) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        double a = u(rng), b = u(rng);
        if (a == b) continue;
        const ResidualScaler s{std::min(a, b), std::max(a, b)};
        const double x = u(rng);
        EXPECT_NEAR(s.denormalize(s.normalize(x)), x, 1e-6 * std::max(1.0, std::abs(x)));
        EXPECT_NEAR(s.normalize(s.denormalize(x / 100)), x / 100, 1e-6 * std::max(1.0, std::abs(x / 100)));
    }
}

TEST(Residual, OutOfRangeIsNotClamped) {
    const ResidualScaler s{0.0, 2.0};
    FieldVideo r(1, 1, 2);
    r.data = {1.5f, -1.5f};
    const auto d = denormalize(r, s);
    EXPECT_FLOAT_EQ(d.data[0], 2.5f);
    EXPECT_FLOAT_EQ(d.data[1], -0.5f);
}

TEST(Residual, PerfectResidualRecoversTruthWithCorruptedPrior) {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 20; ++k) {
        const auto gt = random_video(rng, 1.0);
        auto prior = random_video(rng, 5.0);
        if (k % 2) for (float& x : prior.data) x = -x * 3.0f + 10.0f;
        std::vector<FieldVideo> rs{make_residual(gt, prior)};
        const auto scaler = fit_scaler(rs);
        const auto back = reconstruct(normalize(rs[0], scaler), prior, scaler);
        for (std::size_t i = 0; i < gt.data.size(); ++i) EXPECT_NEAR(back.data[i], gt.data[i], 1e-5 * std::max(1.0f, std::abs(gt.data[i])) + 2e-5);
    }
}

TEST(FieldNormalizer, FitsTrainExtrema) {
    FieldVideo a(1, 1, 3);
    a.data = {-4.0f, 0.0f, 6.0f};
    std::vector<FieldVideo> v{a};
    const auto n = FieldNormalizer::fit(v);
    EXPECT_EQ(n.normalize(-4.0), -1.0);
    EXPECT_EQ(n.normalize(6.0), 1.0);
    EXPECT_NEAR(n.denormalize(n.normalize(1.234)), 1.234, 1e-12);
}
