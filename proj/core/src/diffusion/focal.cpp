#include "prior_refine/diffusion/focal.hpp"

#include "prior_refine/error.hpp"

namespace prior_refine::diffusion {

torch::Tensor timewise_focal_loss(const torch::Tensor& per_element, double xi, double eps) {
    require(per_element.dim() == 5, ErrorKind::invalid_argument, "focal loss expects a (B, C, T, H, W) tensor");
    const auto per_bt = per_element.mean(std::vector<std::int64_t>{1, 3, 4});  // (B, T)
    const auto frame = per_bt.mean(0);                                          // (T)
    const auto w = (frame / (frame.mean() + eps)).pow(xi);
    return (w * frame).sum() / (w.sum() + eps);
}

}  // namespace prior_refine::diffusion
