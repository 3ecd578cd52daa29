#include "prior_refine/datagen/signal.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "prior_refine/error.hpp"

namespace prior_refine::datagen {

namespace {

double kernel(double a, double b, double width) {
    const double r = (a - b) / width;
    return std::exp(-r * r);
}

struct RbfWeights {
    Eigen::VectorXd weights;
    double width = 1.0;
};

RbfWeights fit(const ControlPoints& knots) {
    const auto n = static_cast<Eigen::Index>(knots.points.size());
    RbfWeights out;
    out.width = (knots.points.back().t - knots.points.front().t) / static_cast<double>(n - 1);
    Eigen::MatrixXd k(n, n);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        rhs(i) = knots.points[static_cast<std::size_t>(i)].v;
        for (Eigen::Index j = 0; j < n; ++j) {
            k(i, j) = kernel(knots.points[static_cast<std::size_t>(i)].t, knots.points[static_cast<std::size_t>(j)].t,
                             out.width);
        }
    }
    out.weights = k.fullPivLu().solve(rhs);
    return out;
}

}  // namespace

ControlPoints sample_control_points(std::uint64_t seed, int n_points, double value_bound) {
    require(n_points >= 2, ErrorKind::invalid_argument, "need at least 2 control points");
    require(value_bound > 0.0, ErrorKind::invalid_argument, "value bound must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> value(0.0, value_bound);

    // Knots closer than half the mean spacing make the Gaussian system nearly
    // singular and the interpolant overshoot; such draws count as degenerate.
    // Sampling k sorted uniforms on a shortened interval and shifting the i-th
    // by i*gap draws exactly from the uniform law conditioned on that gap.
    const int k = n_points - 2;
    const double gap = 0.5 / static_cast<double>(n_points - 1);
    const double span = 0.8 - std::max(0, k - 1) * gap;
    std::uniform_real_distribution<double> interior(0.0, span);
    std::vector<double> inner(static_cast<std::size_t>(k));
    for (double& t : inner) t = interior(rng);
    std::sort(inner.begin(), inner.end());
    std::vector<double> times{0.0};
    for (int i = 0; i < k; ++i) times.push_back(0.1 + inner[static_cast<std::size_t>(i)] + i * gap);
    times.push_back(1.0);

    ControlPoints knots;
    for (double t : times) knots.points.push_back({t, value(rng)});
    return knots;
}

std::vector<double> evaluate_interpolant(const ControlPoints& knots, const std::vector<double>& times) {
    const RbfWeights rbf = fit(knots);
    std::vector<double> out(times.size(), 0.0);
    for (std::size_t q = 0; q < times.size(); ++q) {
        double acc = 0.0;
        for (std::size_t j = 0; j < knots.points.size(); ++j) {
            acc += rbf.weights(static_cast<Eigen::Index>(j)) * kernel(times[q], knots.points[j].t, rbf.width);
        }
        out[q] = acc;
    }
    return out;
}

InputSignal interpolate_control_points(const ControlPoints& knots, int l) {
    require(knots.points.size() >= 2, ErrorKind::invalid_argument, "need at least 2 control points");
    require(l >= static_cast<int>(knots.points.size()), ErrorKind::invalid_argument,
            "signal length must be at least the number of control points");
    InputSignal signal = InputSignal::uniform(std::vector<double>(static_cast<std::size_t>(l), 0.0));
    signal.values = evaluate_interpolant(knots, signal.times);
    return signal;
}

InputSignal sample_control_signal(std::uint64_t seed, int n_points, double value_bound, int l) {
    require(n_points >= 2, ErrorKind::invalid_argument, "need at least 2 control points");
    require(n_points <= l, ErrorKind::invalid_argument,
            "n_points (" + std::to_string(n_points) + ") exceeds signal length (" + std::to_string(l) + ")");
    return interpolate_control_points(sample_control_points(seed, n_points, value_bound), l);
}

}  // namespace prior_refine::datagen
