#pragma once

#include <random>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "prior_refine/fields.hpp"

namespace prior_refine::diffusion {

struct NoiseSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    double sigma_data = 0.5;
    int n_steps = 32;

    /// Throws invalid_argument unless 0 < sigma_min < sigma_max, rho > 0,
    /// sigma_data > 0 and n_steps >= 1.
    void validate() const;
    nlohmann::json to_json() const;
    static NoiseSchedule from_json(const nlohmann::json& j);
};

/// sigma_i of the rho-spaced schedule, i in [0, N]; sigma_N = 0. With N = 1
/// the single nonterminal level is sigma_max.
double sigma_schedule(const NoiseSchedule& schedule, int i);
std::vector<double> sigma_levels(const NoiseSchedule& schedule);

struct Preconditioners {
    double c_in = 0.0;
    double c_skip = 0.0;
    double c_out = 0.0;
    double c_noise = 0.0;  ///< -inf at sigma = 0
};

Preconditioners precondition(double sigma, double sigma_data);

/// lambda(sigma) = (sigma^2 + sigma_d^2) / (sigma * sigma_d)^2.
double loss_weight(double sigma, double sigma_data);

/// x0 + sigma * eps; shapes must agree.
torch::Tensor corrupt(const torch::Tensor& x0, const torch::Tensor& sigma, const torch::Tensor& eps);
FieldVideo corrupt(const FieldVideo& x0, double sigma, const FieldVideo& eps);

/// Training noise levels: exp(N(p_mean, p_std^2)), clamped to
/// [sigma_min, sigma_max].
struct SigmaSampler {
    double p_mean = -1.2;
    double p_std = 1.2;

    double draw(std::mt19937_64& rng, const NoiseSchedule& schedule) const;
};

}  // namespace prior_refine::diffusion
