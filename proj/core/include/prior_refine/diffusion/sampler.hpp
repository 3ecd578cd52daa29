#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "prior_refine/diffusion/edm.hpp"

namespace prior_refine::diffusion {

/// x0 estimate for a batch x at one noise level.
using DenoiseFn = std::function<torch::Tensor(const torch::Tensor& x, double sigma)>;

/// Called after each step with the step index, the level reached and the state.
using StepObserver = std::function<void(int step, double sigma, const torch::Tensor& x)>;

struct SamplerOptions {
    double churn = 0.0;  ///< gamma; capped at sqrt(2) - 1 per step
    bool clamp = true;   ///< clamp the final state to [-1, 1]
    torch::Dtype dtype = torch::kFloat32;
};

/// Heun sampler for a batch. Element b draws all of its noise from its own
/// generator seeded with seeds[b], so a sample does not depend on its batch
/// neighbours. shape excludes the batch dimension. Throws sampling_diverged
/// with the step index when the state stops being finite.
torch::Tensor heun_sample(const DenoiseFn& denoise, const std::vector<std::int64_t>& shape, const NoiseSchedule& schedule,
                          const std::vector<std::uint64_t>& seeds, const SamplerOptions& options = {},
                          const StepObserver& observer = {});

}  // namespace prior_refine::diffusion
