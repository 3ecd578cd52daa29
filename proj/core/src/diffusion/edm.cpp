#include "prior_refine/diffusion/edm.hpp"

#include <cmath>
#include <limits>

#include "prior_refine/error.hpp"

namespace prior_refine::diffusion {

void NoiseSchedule::validate() const {
    require(std::isfinite(sigma_min) && sigma_min > 0.0 && sigma_min < sigma_max && std::isfinite(sigma_max),
            ErrorKind::invalid_argument, "noise schedule needs 0 < sigma_min < sigma_max");
    require(rho > 0.0, ErrorKind::invalid_argument, "noise schedule rho must be positive");
    require(sigma_data > 0.0, ErrorKind::invalid_argument, "sigma_data must be positive");
    require(n_steps >= 1, ErrorKind::invalid_argument, "noise schedule needs at least one step");
}

nlohmann::json NoiseSchedule::to_json() const {
    return {{"sigma_min", sigma_min}, {"sigma_max", sigma_max}, {"rho", rho}, {"sigma_data", sigma_data}, {"n_steps", n_steps}};
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
    NoiseSchedule s;
    s.sigma_min = j.value("sigma_min", s.sigma_min);
    s.sigma_max = j.value("sigma_max", s.sigma_max);
    s.rho = j.value("rho", s.rho);
    s.sigma_data = j.value("sigma_data", s.sigma_data);
    s.n_steps = j.value("n_steps", s.n_steps);
    s.validate();
    return s;
}

double sigma_schedule(const NoiseSchedule& s, int i) {
    s.validate();
    require(i >= 0 && i <= s.n_steps, ErrorKind::invalid_argument, "schedule index out of range");
    if (i == s.n_steps) return 0.0;
    if (s.n_steps == 1) return s.sigma_max;
    const double a = std::pow(s.sigma_max, 1.0 / s.rho);
    const double b = std::pow(s.sigma_min, 1.0 / s.rho);
    const double frac = static_cast<double>(i) / static_cast<double>(s.n_steps - 1);
    return std::pow(a + frac * (b - a), s.rho);
}

std::vector<double> sigma_levels(const NoiseSchedule& s) {
    std::vector<double> out(static_cast<std::size_t>(s.n_steps) + 1);
    for (int i = 0; i <= s.n_steps; ++i) out[static_cast<std::size_t>(i)] = sigma_schedule(s, i);
    return out;
}

Preconditioners precondition(double sigma, double sigma_data) {
    require(sigma >= 0.0, ErrorKind::invalid_argument, "sigma must be nonnegative");
    require(sigma_data > 0.0, ErrorKind::invalid_argument, "sigma_data must be positive");
    const double total = sigma * sigma + sigma_data * sigma_data;
    Preconditioners p;
    p.c_in = 1.0 / std::sqrt(total);
    p.c_skip = sigma_data * sigma_data / total;
    p.c_out = sigma * sigma_data / std::sqrt(total);
    p.c_noise = sigma > 0.0 ? std::log(sigma) / 4.0 : -std::numeric_limits<double>::infinity();
    return p;
}

double loss_weight(double sigma, double sigma_data) {
    require(sigma > 0.0, ErrorKind::invalid_argument, "loss weight needs sigma > 0");
    return (sigma * sigma + sigma_data * sigma_data) / ((sigma * sigma_data) * (sigma * sigma_data));
}

torch::Tensor corrupt(const torch::Tensor& x0, const torch::Tensor& sigma, const torch::Tensor& eps) {
    require(x0.sizes() == eps.sizes(), ErrorKind::invalid_argument, "noise shape differs from the clean field");
    if (sigma.dim() == 0) return x0 + sigma * eps;
    require(sigma.dim() == 1 && sigma.size(0) == x0.size(0), ErrorKind::invalid_argument,
            "per-sample sigma must have one entry per batch element");
    std::vector<std::int64_t> shape(static_cast<std::size_t>(x0.dim()), 1);
    shape[0] = x0.size(0);
    return x0 + sigma.view(shape) * eps;
}

FieldVideo corrupt(const FieldVideo& x0, double sigma, const FieldVideo& eps) {
    require(x0.same_shape(eps), ErrorKind::invalid_argument, "noise shape differs from the clean field");
    FieldVideo out = x0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<float>(x0.data[i] + sigma * eps.data[i]);
    }
    return out;
}

double SigmaSampler::draw(std::mt19937_64& rng, const NoiseSchedule& schedule) const {
    std::normal_distribution<double> normal(p_mean, p_std);
    return std::clamp(std::exp(normal(rng)), schedule.sigma_min, schedule.sigma_max);
}

}  // namespace prior_refine::diffusion
