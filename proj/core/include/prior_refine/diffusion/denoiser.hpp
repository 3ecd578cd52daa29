#pragma once

#include <optional>

#include <torch/torch.h>

#include "prior_refine/diffusion/unet.hpp"
#include "prior_refine/fields.hpp"

namespace prior_refine::diffusion {

/// Conditioning for one case, in field units.
struct ConditionBundle {
    InputSignal signal;
    std::optional<FieldVideo> prior;
    std::optional<DomainMask> mask;
    bool cfg_dropout = false;  ///< training only: swap signal and prior for the null tokens
};

/// Batched conditioning in network units. prior and mask may be undefined.
struct ConditionTensors {
    torch::Tensor signal;  ///< (B, l), already divided by the signal scale
    torch::Tensor prior;   ///< (B, 1, T, H, W) in [-1, 1]
    torch::Tensor mask;    ///< (B, 1, H, W) of 0/1
};

/// Channel stack [noisy, prior, mask]; the mask is repeated over T.
torch::Tensor assemble_condition(const torch::Tensor& x, const torch::Tensor& prior, const torch::Tensor& mask);

/// Preconditioned denoiser D(x; sigma, a, prior, mask) around a VideoUNet,
/// with learned null tokens for the unconditional branch.
class DenoiserImpl : public torch::nn::Module {
public:
    DenoiserImpl(const UNetConfig& config, bool use_prior, bool use_mask, double sigma_data);

    /// x_t: (B, 1, T, H, W); sigma: (B) and > 0; uncond: bool (B) or undefined.
    torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& sigma, const ConditionTensors& cond,
                          const torch::Tensor& uncond = {});

    VideoUNet net{nullptr};
    FilmEncoder film{nullptr};
    torch::Tensor null_code;   ///< replaces gamma(a)
    torch::Tensor null_prior;  ///< scalar filling the prior channel
    bool use_prior;
    bool use_mask;
    double sigma_data;
};
TORCH_MODULE(Denoiser);

/// Guided estimate x0_u + g (x0_c - x0_u). With g == 1 only the conditional
/// pass runs.
torch::Tensor denoise(Denoiser& model, const torch::Tensor& x_t, const torch::Tensor& sigma, const ConditionTensors& cond,
                      double guidance_scale);

}  // namespace prior_refine::diffusion
