#pragma once

#include <torch/torch.h>

namespace prior_refine::diffusion {

/// Per-frame reweighted loss over a (B, C, T, H, W) tensor of nonnegative
/// errors. l_t is the frame mean over (B, C, H, W), w_t = (l_t / (mean_t l_t
/// + eps))^xi, result sum_t w_t l_t / (sum_t w_t + eps). The weights are part
/// of the graph, so gradients flow through them too.
torch::Tensor timewise_focal_loss(const torch::Tensor& per_element, double xi = 2.0, double eps = 1e-8);

}  // namespace prior_refine::diffusion
