#include "prior_refine/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prior_refine/error.hpp"

namespace prior_refine::eval {

namespace {

template <typename Norm>
RelativeError relative(const FieldVideo& truth, const FieldVideo& pred, bool exclude, Norm norm) {
    require(truth.same_shape(pred), ErrorKind::invalid_argument, "metric inputs differ in shape");
    require(truth.frames >= 1, ErrorKind::invalid_argument, "metric inputs are empty");
    RelativeError out;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t t = 0; t < truth.frames; ++t) {
        const auto a = truth.frame(t);
        const auto b = pred.frame(t);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            num += norm(double(a[i]) - double(b[i]));
            den += norm(double(a[i]));
        }
        if (den == 0.0) {
            ++out.zero_frames;
            continue;
        }
        sum += norm.finish(num) / norm.finish(den);
        ++used;
    }
    if (out.zero_frames > 0 && (!exclude || used == 0)) {
        out.value = std::numeric_limits<double>::infinity();
    } else {
        out.value = sum / static_cast<double>(used);
    }
    return out;
}

struct L2 {
    double operator()(double x) const { return x * x; }
    double finish(double s) const { return std::sqrt(s); }
};

struct L1 {
    double operator()(double x) const { return std::abs(x); }
    double finish(double s) const { return s; }
};

}  // namespace

RelativeError rel_l2(const FieldVideo& truth, const FieldVideo& pred, bool exclude_zero_frames) {
    return relative(truth, pred, exclude_zero_frames, L2{});
}

RelativeError rmae(const FieldVideo& truth, const FieldVideo& pred, bool exclude_zero_frames) {
    return relative(truth, pred, exclude_zero_frames, L1{});
}

double mae(const FieldVideo& truth, const FieldVideo& pred) {
    require(truth.same_shape(pred), ErrorKind::invalid_argument, "metric inputs differ in shape");
    require(!truth.data.empty(), ErrorKind::invalid_argument, "metric inputs are empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.data.size(); ++i) sum += std::abs(double(truth.data[i]) - double(pred.data[i]));
    return sum / static_cast<double>(truth.data.size());
}

Percentiles percentile_report(std::vector<double> values) {
    require(!values.empty(), ErrorKind::invalid_argument, "percentiles of an empty list");
    std::sort(values.begin(), values.end());
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

}  // namespace prior_refine::eval
