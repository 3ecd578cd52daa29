#include "prior_refine/diffusion/sampler.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "prior_refine/error.hpp"

namespace prior_refine::diffusion {

namespace {

torch::Tensor batch_noise(std::vector<at::Generator>& gens, const std::vector<std::int64_t>& shape, torch::Dtype dtype) {
    std::vector<torch::Tensor> parts;
    parts.reserve(gens.size());
    for (auto& g : gens) parts.push_back(at::randn(shape, g, torch::TensorOptions().dtype(dtype)));
    return torch::stack(parts);
}

}  // namespace

torch::Tensor heun_sample(const DenoiseFn& denoise, const std::vector<std::int64_t>& shape, const NoiseSchedule& schedule,
                          const std::vector<std::uint64_t>& seeds, const SamplerOptions& options,
                          const StepObserver& observer) {
    schedule.validate();
    require(!seeds.empty(), ErrorKind::invalid_argument, "sampler needs at least one seed");
    require(options.churn >= 0.0, ErrorKind::invalid_argument, "churn must be nonnegative");
    torch::NoGradGuard no_grad;

    std::vector<at::Generator> gens;
    gens.reserve(seeds.size());
    for (auto s : seeds) gens.push_back(at::make_generator<at::CPUGeneratorImpl>(s));

    const auto sigmas = sigma_levels(schedule);
    const double gamma = std::min(options.churn, std::sqrt(2.0) - 1.0);
    auto x = batch_noise(gens, shape, options.dtype) * sigmas[0];

    for (int i = 0; i < schedule.n_steps; ++i) {
        const double s_cur = sigmas[static_cast<std::size_t>(i)];
        const double s_next = sigmas[static_cast<std::size_t>(i) + 1];
        double s_hat = s_cur;
        if (gamma > 0.0) {
            s_hat = s_cur * (1.0 + gamma);
            x = x + std::sqrt(s_hat * s_hat - s_cur * s_cur) * batch_noise(gens, shape, options.dtype);
        }
        const auto d = (x - denoise(x, s_hat)) / s_hat;
        auto x_next = x + (s_next - s_hat) * d;
        if (s_next > 0.0) {
            const auto d2 = (x_next - denoise(x_next, s_next)) / s_next;
            x_next = x + (s_next - s_hat) * (0.5 * d + 0.5 * d2);
        }
        if (!torch::isfinite(x_next).all().item<bool>()) {
            fail(ErrorKind::sampling_diverged, "sampler state became non-finite at step " + std::to_string(i));
        }
        x = x_next;
        if (observer) observer(i, s_next, x);
    }
    return options.clamp ? x.clamp(-1.0, 1.0) : x;
}

}  // namespace prior_refine::diffusion
