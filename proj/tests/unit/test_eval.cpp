#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "prior_refine/error.hpp"
#include "prior_refine/eval/metrics.hpp"
#include "prior_refine/eval/report.hpp"

using namespace prior_refine;
using namespace prior_refine::eval;

namespace {

FieldVideo random_video(std::mt19937_64& rng, std::size_t t = 3, std::size_t h = 6, std::size_t w = 5) {
    std::normal_distribution<double> d(0.0, 1.0);
    FieldVideo v(t, h, w);
    for (float& x : v.data) x = static_cast<float>(d(rng));
    return v;
}

FieldVideo scaled(const FieldVideo& v, float k) {
    FieldVideo out = v;
    for (float& x : out.data) x *= k;
    return out;
}

// straight loop over frames, double accumulation
double rel_oracle(const FieldVideo& a, const FieldVideo& b, int p) {
    double total = 0.0;
    for (std::size_t t = 0; t < a.frames; ++t) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < a.height; ++i)
            for (std::size_t j = 0; j < a.width; ++j) {
                const double d = std::abs(double(a.at(t, i, j)) - b.at(t, i, j));
                const double m = std::abs(double(a.at(t, i, j)));
                num += p == 2 ? d * d : d;
                den += p == 2 ? m * m : m;
            }
        total += p == 2 ? std::sqrt(num) / std::sqrt(den) : num / den;
    }
    return total / a.frames;
}

}  // namespace

TEST(Metrics, ExactPredictionScoresZero) {
    std::mt19937_64 rng(3);
    const auto v = random_video(rng);
    EXPECT_EQ(rel_l2(v, v).value, 0.0);
    EXPECT_EQ(rmae(v, v).value, 0.0);
    EXPECT_EQ(mae(v, v), 0.0);
}

TEST(Metrics, DoubledPredictionIsOneHundredPercent) {
    std::mt19937_64 rng(4);
    const auto v = random_video(rng);
    EXPECT_NEAR(rel_l2(v, scaled(v, 2.0f)).value, 1.0, 1e-6);
    EXPECT_NEAR(rmae(v, scaled(v, 2.0f)).value, 1.0, 1e-6);
}

TEST(Metrics, FrameAverageOfRatios) {
    // frame 0 off by 10%, frame 1 off by 30%
    FieldVideo truth(2, 1, 2, 1.0f), pred = truth;
    pred.at(0, 0, 0) = pred.at(0, 0, 1) = 1.1f;
    pred.at(1, 0, 0) = pred.at(1, 0, 1) = 1.3f;
    EXPECT_NEAR(rel_l2(truth, pred).value, 0.2, 1e-6);
    EXPECT_NEAR(rmae(truth, pred).value, 0.2, 1e-6);
}

TEST(Metrics, ConstantOffsetRmae) {
    FieldVideo truth(2, 3, 3, 4.0f), pred(2, 3, 3, 4.5f);
    EXPECT_NEAR(rmae(truth, pred).value, 0.5 / 4.0, 1e-7);
}

TEST(Metrics, MaeHalfOffByTwo) {
    FieldVideo truth(1, 2, 2, 0.0f), pred = truth;
    pred.data = {2.0f, -2.0f, 0.0f, 0.0f};
    EXPECT_DOUBLE_EQ(mae(truth, pred), 1.0);
}

TEST(Metrics, MatchesLoopOracle) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 20; ++k) {
        const auto a = random_video(rng), b = random_video(rng);
        EXPECT_NEAR(rel_l2(a, b).value, rel_oracle(a, b, 2), 1e-9);
        EXPECT_NEAR(rmae(a, b).value, rel_oracle(a, b, 1), 1e-9);
    }
}

TEST(Metrics, NotSymmetric) {
    std::mt19937_64 rng(6);
    const auto a = random_video(rng), b = scaled(random_video(rng), 3.0f);
    EXPECT_GT(std::abs(rel_l2(a, b).value - rel_l2(b, a).value), 1e-3);
}

TEST(Metrics, ScaleInvarianceAndMaeScaling) {
    std::mt19937_64 rng(7);
    const auto a = random_video(rng), b = random_video(rng);
    EXPECT_NEAR(rel_l2(scaled(a, 7.0f), scaled(b, 7.0f)).value, rel_l2(a, b).value, 1e-6);
    EXPECT_NEAR(rmae(scaled(a, 7.0f), scaled(b, 7.0f)).value, rmae(a, b).value, 1e-6);
    EXPECT_NEAR(mae(scaled(a, 7.0f), scaled(b, 7.0f)), 7.0 * mae(a, b), 1e-5);
}

TEST(Metrics, MonotoneInPerturbationSize) {
    std::mt19937_64 rng(8);
    const auto a = random_video(rng), noise = random_video(rng);
    double prev = 0.0;
    for (float eps : {0.01f, 0.1f, 0.5f, 1.0f, 2.0f}) {
        FieldVideo b = a;
        for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += eps * noise.data[i];
        const double e = rel_l2(a, b).value;
        EXPECT_GT(e, prev);
        prev = e;
    }
}

TEST(Metrics, ZeroFramesAreFlagged) {
    FieldVideo truth(3, 2, 2, 1.0f), pred(3, 2, 2, 1.5f);
    for (float& x : truth.frame(0)) x = 0.0f;
    const auto e = rel_l2(truth, pred);
    EXPECT_EQ(e.zero_frames, 1u);
    EXPECT_TRUE(e.flagged());
    EXPECT_NEAR(e.value, 0.5, 1e-7);
    EXPECT_TRUE(std::isinf(rel_l2(truth, pred, false).value));
    EXPECT_TRUE(std::isinf(rel_l2(FieldVideo(2, 2, 2), FieldVideo(2, 2, 2, 1.0f)).value));
}

TEST(Metrics, ShapeMismatchThrows) {
    EXPECT_THROW(rel_l2(FieldVideo(2, 2, 2, 1.0f), FieldVideo(2, 2, 3, 1.0f)), Error);
    EXPECT_THROW(mae(FieldVideo(2, 2, 2), FieldVideo(1, 2, 2)), Error);
}

TEST(Percentiles, OneToHundred) {
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(i);
    const auto p = percentile_report(v);
    EXPECT_DOUBLE_EQ(p.best, 1.0);
    EXPECT_DOUBLE_EQ(p.p25, 25.75);
    EXPECT_DOUBLE_EQ(p.p50, 50.5);
    EXPECT_DOUBLE_EQ(p.p75, 75.25);
    EXPECT_DOUBLE_EQ(p.worst, 100.0);
}

TEST(Percentiles, SingleValueAndEmpty) {
    const auto p = percentile_report({0.3});
    EXPECT_EQ(p.best, 0.3);
    EXPECT_EQ(p.p50, 0.3);
    EXPECT_EQ(p.worst, 0.3);
    EXPECT_THROW(percentile_report({}), Error);
}

namespace {

AblationReport four_row_report() {
    std::mt19937_64 rng(9);
    std::vector<FieldVideo> truth_store;
    std::vector<int> ids;
    for (int i = 0; i < 6; ++i) truth_store.push_back(random_video(rng)), ids.push_back(10 + i);
    std::vector<const FieldVideo*> truth;
    for (const auto& t : truth_store) truth.push_back(&t);
    AblationReport r;
    r.masked = true;
    r.units = "MPa";
    float k = 1.1f;
    for (const auto& name : kVariants) {
        std::vector<FieldVideo> pred;
        for (const auto& t : truth_store) pred.push_back(scaled(t, k));
        r.variants.push_back(summarize(name, score_cases(truth, pred, ids)));
        k += 0.2f;
    }
    return r;
}

}  // namespace

TEST(Report, FourRowsInOrder) {
    const auto r = four_row_report();
    ASSERT_EQ(r.variants.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.variants[i].variant, kVariants[i]);
    EXPECT_NEAR(r.variants[0].mean_rel_l2, 0.1, 1e-5);
    EXPECT_NEAR(r.variants[3].mean_rel_l2, 0.7, 1e-5);
    const auto j = to_json(r);
    EXPECT_EQ(j["variants"].size(), 4u);
    EXPECT_EQ(j["variants"][2]["variant"], "vd-pc-d");
    const auto table = render_table(r);
    EXPECT_NE(table.find("Mean MAE"), std::string::npos);
    EXPECT_NE(table.find("vd-pc-r"), std::string::npos);
    auto unmasked = r;
    unmasked.masked = false;
    EXPECT_EQ(render_table(unmasked).find("Mean MAE"), std::string::npos);
}

TEST(Report, CsvIsDeterministic) {
    const auto a = per_case_csv(four_row_report()), b = per_case_csv(four_row_report());
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.rfind("case_id,variant,rel_l2,rmae,mae\n", 0), 0u);
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 1 + 4 * 6);
}

TEST(Report, HistogramAxis) {
    EXPECT_FALSE(use_log_axis({0.1, 0.2, 4.0}));
    EXPECT_TRUE(use_log_axis({0.01, 0.2, 4.0}));
    const auto svg = histogram_svg(four_row_report(), "rel_l2");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("vd-np"), std::string::npos);
    EXPECT_THROW(histogram_svg(four_row_report(), "psnr"), Error);
}

TEST(Report, SummaryIgnoresNonFiniteCases) {
    std::vector<CaseErrors> cases{{0, 0.2, 0.2, 1.0, 0}, {1, std::numeric_limits<double>::infinity(), 0.4, 1.0, 2}};
    const auto s = summarize("sdon", cases);
    EXPECT_DOUBLE_EQ(s.mean_rel_l2, 0.2);
    EXPECT_DOUBLE_EQ(s.mean_rmae, 0.3);
    EXPECT_EQ(s.flagged_cases, 1u);
}
