#include "prior_refine/diffusion/denoiser.hpp"

#include "prior_refine/error.hpp"

namespace prior_refine::diffusion {

torch::Tensor assemble_condition(const torch::Tensor& x, const torch::Tensor& prior, const torch::Tensor& mask) {
    require(x.dim() == 5 && x.size(1) == 1, ErrorKind::invalid_argument, "noisy field must be (B, 1, T, H, W)");
    std::vector<torch::Tensor> parts{x};
    if (prior.defined()) {
        require(prior.sizes() == x.sizes(), ErrorKind::invalid_argument, "prior shape differs from the noisy field");
        parts.push_back(prior.to(x.dtype()));
    }
    if (mask.defined()) {
        require(mask.dim() == 4 && mask.size(0) == x.size(0) && mask.size(1) == 1 && mask.size(2) == x.size(3) &&
                    mask.size(3) == x.size(4),
                ErrorKind::invalid_argument, "mask must be (B, 1, H, W) matching the field");
        parts.push_back(mask.to(x.dtype()).unsqueeze(2).expand_as(x));
    }
    return torch::cat(parts, 1);
}

DenoiserImpl::DenoiserImpl(const UNetConfig& config, bool prior, bool mask, double sd)
    : use_prior(prior), use_mask(mask), sigma_data(sd) {
    require(config.in_channels == 1 + int(prior) + int(mask), ErrorKind::configuration,
            "in_channels must count the noisy field plus the prior and mask channels in use");
    net = register_module("net", VideoUNet(config));
    film = register_module("film", FilmEncoder(config.signal_length, config.film_dim));
    null_code = register_parameter("null_code", torch::zeros({config.film_dim}));
    null_prior = register_parameter("null_prior", torch::zeros({1}));
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& x_t, const torch::Tensor& sigma, const ConditionTensors& cond,
                                    const torch::Tensor& uncond) {
    require(x_t.dim() == 5 && x_t.size(1) == 1, ErrorKind::invalid_argument, "noisy field must be (B, 1, T, H, W)");
    const auto b = x_t.size(0);
    require(sigma.dim() == 1 && sigma.size(0) == b, ErrorKind::invalid_argument, "sigma must hold one level per sample");
    require(!use_prior || cond.prior.defined(), ErrorKind::invalid_argument, "model was trained with a prior channel");
    require(!use_mask || cond.mask.defined(), ErrorKind::invalid_argument, "model was trained with a mask channel");
    require(cond.signal.defined() && cond.signal.size(0) == b, ErrorKind::invalid_argument,
            "one input signal per sample is required");

    const auto dtype = null_code.dtype();
    const auto s = sigma.to(dtype);
    const auto s2 = s * s;
    const double sd2 = sigma_data * sigma_data;
    const auto c_in = (s2 + sd2).rsqrt().view({b, 1, 1, 1, 1});
    const auto c_skip = (sd2 / (s2 + sd2)).view({b, 1, 1, 1, 1});
    const auto c_out = (s * sigma_data * (s2 + sd2).rsqrt()).view({b, 1, 1, 1, 1});
    const auto c_noise = s.log() / 4;

    auto code = film->forward(cond.signal.to(dtype));
    torch::Tensor prior;
    if (use_prior) prior = cond.prior.to(dtype);
    if (uncond.defined()) {
        require(uncond.dim() == 1 && uncond.size(0) == b, ErrorKind::invalid_argument, "uncond flags must be (B)");
        const auto drop = uncond.to(torch::kBool);
        code = torch::where(drop.view({b, 1}), null_code.view({1, -1}).expand_as(code), code);
        if (use_prior) prior = torch::where(drop.view({b, 1, 1, 1, 1}), null_prior.view({1, 1, 1, 1, 1}).expand_as(prior), prior);
    }
    const auto x = x_t.to(dtype);
    const auto input = assemble_condition(c_in * x, prior, use_mask ? cond.mask : torch::Tensor{});
    return c_skip * x + c_out * net->forward(input, c_noise, code);
}

torch::Tensor denoise(Denoiser& model, const torch::Tensor& x_t, const torch::Tensor& sigma, const ConditionTensors& cond,
                      double guidance_scale) {
    if (guidance_scale == 1.0) return model->forward(x_t, sigma, cond);
    const auto b = x_t.size(0);
    ConditionTensors both{torch::cat({cond.signal, cond.signal}), cond.prior.defined() ? torch::cat({cond.prior, cond.prior}) : torch::Tensor{},
                          cond.mask.defined() ? torch::cat({cond.mask, cond.mask}) : torch::Tensor{}};
    const auto flags = torch::cat({torch::zeros({b}, torch::kBool), torch::ones({b}, torch::kBool)});
    const auto out = model->forward(torch::cat({x_t, x_t}), torch::cat({sigma, sigma}), both, flags);
    const auto x_c = out.slice(0, 0, b);
    const auto x_u = out.slice(0, b, 2 * b);
    return x_u + guidance_scale * (x_c - x_u);
}

}  // namespace prior_refine::diffusion
