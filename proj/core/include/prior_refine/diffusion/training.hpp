#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prior_refine/datagen/dataset.hpp"
#include "prior_refine/diffusion/denoiser.hpp"
#include "prior_refine/diffusion/edm.hpp"
#include "prior_refine/sdon/training.hpp"
#include "prior_refine/targets/residual.hpp"

namespace prior_refine::diffusion {

enum class TargetMode { full, residual };

std::string_view to_string(TargetMode mode);
TargetMode target_mode_from_string(std::string_view name);

/// sdon / vd-np / vd-pc-d / vd-pc-r
std::string variant_name(TargetMode mode, bool use_prior);

struct DiffusionConfig {
    TargetMode target = TargetMode::residual;
    bool use_prior = true;
    UNetConfig unet;  ///< in_channels and signal_length are filled from the data
    NoiseSchedule schedule;
    SigmaSampler sigma_sampler;
    double p_uncond = 0.1;
    double guidance = 1.5;
    double churn = 0.0;
    double focal_xi = 2.0;
    double focal_eps = 1e-8;
    double lr = 2e-4;
    int warmup_steps = 100;
    int steps = 2000;
    int batch_size = 4;
    double grad_clip = 1.0;   ///< global norm; 0 disables
    double ema_decay = 0.0;   ///< 0 disables; otherwise the EMA weights are kept
    int sample_batch = 8;     ///< cases per sampler batch

    void validate() const;
    nlohmann::json to_json() const;
    static DiffusionConfig from_json(const nlohmann::json& j);
};

struct DiffusionModel {
    Denoiser net{nullptr};
    DiffusionConfig config;
    targets::FieldNormalizer normalizer;        ///< fields and the prior channel
    std::optional<targets::ResidualScaler> scaler;  ///< residual mode only
    double signal_scale = 1.0;
    int frames = 0;
    int height = 0;
    int width = 0;
    std::uint64_t seed = 0;
    int steps_trained = 0;
    std::vector<double> loss_history;
    std::string dataset_hash;
    std::string operator_hash;  ///< empty without a prior
    std::string prior_checksum;
    std::string config_hash;

    std::string variant() const { return variant_name(config.target, config.use_prior); }
};

/// The configuration as trained on a dataset: input channels and signal
/// length come from the manifest.
DiffusionConfig resolve_config(const DiffusionConfig& config, const datagen::DatasetManifest& manifest);

/// Hash embedded in a checkpoint; the prior fields are empty for vd-np.
std::string lineage_hash(const DiffusionConfig& resolved, std::uint64_t seed, const std::string& dataset_hash,
                         const std::string& operator_hash, const std::string& prior_checksum);

/// One training objective evaluation: lambda(sigma)-weighted squared error of
/// the denoiser on x0 + sigma * eps, reduced by the time-wise focal loss.
/// Works in the dtype of `x0`; the network must match it.
torch::Tensor training_loss(Denoiser& net, const torch::Tensor& x0, const std::vector<double>& sigmas,
                            const torch::Tensor& eps, const ConditionTensors& cond, const torch::Tensor& uncond,
                            const DiffusionConfig& config);

using StepCallback = std::function<void(int step, double loss)>;

/// EDM training with log-normal noise levels, lambda(sigma) weighting per
/// element and the time-wise focal reduction. Residual mode and the prior
/// channel need `priors`. Deterministic given seed; NaN loss raises
/// numerical_instability with the step and noise levels.
DiffusionModel train_diffusion(const datagen::Dataset& dataset, const sdon::PriorSet* priors,
                               const std::vector<int>& train_cases, const DiffusionConfig& config, std::uint64_t seed,
                               const StepCallback& on_step = {});

/// Network-unit conditioning for a list of cases.
ConditionTensors condition_tensors(const DiffusionModel& model, const datagen::Dataset& dataset,
                                   const sdon::PriorSet* priors, const std::vector<int>& cases);

struct SampleOptions {
    std::optional<double> guidance;  ///< defaults to the trained value
    std::optional<double> churn;
    std::optional<int> n_steps;
};

/// One sample per case in field units. Case c uses seed derive_seed(seed, c),
/// so results do not depend on batching.
std::vector<FieldVideo> generate(const DiffusionModel& model, const datagen::Dataset& dataset, const sdon::PriorSet* priors,
                                 const std::vector<int>& cases, std::uint64_t seed, const SampleOptions& options = {});

void save_diffusion(const DiffusionModel& model, const std::filesystem::path& base);
DiffusionModel load_diffusion(const std::filesystem::path& base);

}  // namespace prior_refine::diffusion
