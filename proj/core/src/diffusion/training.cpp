#include "prior_refine/diffusion/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <random>
#include <sstream>

#include "prior_refine/checkpoint.hpp"
#include "prior_refine/container.hpp"
#include "prior_refine/diffusion/focal.hpp"
#include "prior_refine/diffusion/sampler.hpp"
#include "prior_refine/error.hpp"
#include "prior_refine/seeding.hpp"

namespace prior_refine::diffusion {

namespace {

constexpr std::string_view kContainer = "prior_refine.diffusion";
constexpr std::uint64_t kInitStream = 21;
constexpr std::uint64_t kBatchStream = 22;
constexpr std::uint64_t kNoiseStream = 23;

torch::Tensor video_batch(const std::vector<const FieldVideo*>& videos, const std::function<double(float)>& map) {
    const auto& f = *videos.front();
    auto out = torch::empty({static_cast<std::int64_t>(videos.size()), 1, static_cast<std::int64_t>(f.frames),
                             static_cast<std::int64_t>(f.height), static_cast<std::int64_t>(f.width)},
                            torch::kFloat32);
    float* dst = out.data_ptr<float>();
    for (const auto* v : videos) {
        require(v->same_shape(f), ErrorKind::shape_mismatch, "videos in a batch differ in shape");
        for (float x : v->data) *dst++ = static_cast<float>(map(x));
    }
    return out;
}

const FieldVideo& prior_of(const sdon::PriorSet* priors, int case_id) {
    require(priors != nullptr, ErrorKind::invalid_argument, "this variant needs operator priors");
    require(case_id >= 0 && case_id < static_cast<int>(priors->priors.size()), ErrorKind::shape_mismatch,
            "prior set does not cover case " + std::to_string(case_id));
    return priors->priors[static_cast<std::size_t>(case_id)];
}

std::vector<const FieldVideo*> gather_fields(const datagen::Dataset& ds, const std::vector<int>& cases) {
    std::vector<const FieldVideo*> out;
    for (int c : cases) {
        require(c >= 0 && c < static_cast<int>(ds.cases.size()), ErrorKind::invalid_argument, "case id out of range");
        out.push_back(&ds.cases[static_cast<std::size_t>(c)].field);
    }
    return out;
}

}  // namespace

std::string_view to_string(TargetMode mode) { return mode == TargetMode::full ? "full" : "residual"; }

TargetMode target_mode_from_string(std::string_view name) {
    if (name == "full") return TargetMode::full;
    if (name == "residual") return TargetMode::residual;
    fail(ErrorKind::configuration, "unknown target mode '" + std::string(name) + "' (expected full or residual)");
}

std::string variant_name(TargetMode mode, bool use_prior) {
    if (mode == TargetMode::residual) return "vd-pc-r";
    return use_prior ? "vd-pc-d" : "vd-np";
}

void DiffusionConfig::validate() const {
    schedule.validate();
    require(target == TargetMode::full || use_prior, ErrorKind::configuration, "residual target requires the prior channel");
    require(p_uncond >= 0.0 && p_uncond < 1.0, ErrorKind::configuration, "p_uncond must lie in [0, 1)");
    require(std::isfinite(guidance), ErrorKind::configuration, "guidance must be finite");
    require(churn >= 0.0, ErrorKind::configuration, "churn must be nonnegative");
    require(focal_xi >= 0.0 && focal_eps > 0.0, ErrorKind::configuration, "focal_xi >= 0 and focal_eps > 0 required");
    require(lr > 0.0 && steps >= 0 && warmup_steps >= 0 && batch_size >= 1 && sample_batch >= 1,
            ErrorKind::configuration, "lr, steps, warmup_steps, batch_size and sample_batch must be positive");
    require(grad_clip >= 0.0 && ema_decay >= 0.0 && ema_decay < 1.0, ErrorKind::configuration,
            "grad_clip >= 0 and ema_decay in [0, 1) required");
    require(sigma_sampler.p_std > 0.0, ErrorKind::configuration, "p_std must be positive");
}

nlohmann::json DiffusionConfig::to_json() const {
    return {{"target", to_string(target)},
            {"use_prior", use_prior},
            {"unet", unet.to_json()},
            {"schedule", schedule.to_json()},
            {"p_mean", sigma_sampler.p_mean},
            {"p_std", sigma_sampler.p_std},
            {"p_uncond", p_uncond},
            {"guidance", guidance},
            {"churn", churn},
            {"focal_xi", focal_xi},
            {"focal_eps", focal_eps},
            {"lr", lr},
            {"warmup_steps", warmup_steps},
            {"steps", steps},
            {"batch_size", batch_size},
            {"grad_clip", grad_clip},
            {"ema_decay", ema_decay},
            {"sample_batch", sample_batch}};
}

DiffusionConfig DiffusionConfig::from_json(const nlohmann::json& j) {
    DiffusionConfig c;
    try {
        if (j.contains("target")) c.target = target_mode_from_string(j.at("target").get<std::string>());
        c.use_prior = j.value("use_prior", c.use_prior);
        if (j.contains("unet")) {
            auto u = j.at("unet");
            u["in_channels"] = u.value("in_channels", 2);
            c.unet = UNetConfig::from_json(u);
        }
        if (j.contains("schedule")) c.schedule = NoiseSchedule::from_json(j.at("schedule"));
        c.sigma_sampler.p_mean = j.value("p_mean", c.sigma_sampler.p_mean);
        c.sigma_sampler.p_std = j.value("p_std", c.sigma_sampler.p_std);
        c.p_uncond = j.value("p_uncond", c.p_uncond);
        c.guidance = j.value("guidance", c.guidance);
        c.churn = j.value("churn", c.churn);
        c.focal_xi = j.value("focal_xi", c.focal_xi);
        c.focal_eps = j.value("focal_eps", c.focal_eps);
        c.lr = j.value("lr", c.lr);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.steps = j.value("steps", c.steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.grad_clip = j.value("grad_clip", c.grad_clip);
        c.ema_decay = j.value("ema_decay", c.ema_decay);
        c.sample_batch = j.value("sample_batch", c.sample_batch);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::configuration, std::string("bad diffusion config: ") + e.what());
    }
    c.validate();
    return c;
}

ConditionTensors condition_tensors(const DiffusionModel& model, const datagen::Dataset& ds, const sdon::PriorSet* priors,
                                   const std::vector<int>& cases) {
    ConditionTensors c;
    const auto n = static_cast<std::int64_t>(cases.size());
    const auto l = static_cast<std::int64_t>(model.config.unet.signal_length);
    c.signal = torch::empty({n, l}, torch::kFloat32);
    auto acc = c.signal.accessor<float, 2>();
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& s = ds.cases[static_cast<std::size_t>(cases[static_cast<std::size_t>(i)])].signal;
        require(static_cast<std::int64_t>(s.length()) == l, ErrorKind::invalid_argument,
                "signal length does not match the trained length");
        for (std::int64_t k = 0; k < l; ++k) acc[i][k] = static_cast<float>(s.values[static_cast<std::size_t>(k)] / model.signal_scale);
    }
    if (model.config.use_prior) {
        std::vector<const FieldVideo*> p;
        for (int id : cases) p.push_back(&prior_of(priors, id));
        c.prior = video_batch(p, [&](float x) { return model.normalizer.normalize(x); });
    }
    if (model.net->use_mask) {
        c.mask = torch::empty({n, 1, model.height, model.width}, torch::kFloat32);
        float* dst = c.mask.data_ptr<float>();
        for (int id : cases) {
            const auto& m = ds.cases[static_cast<std::size_t>(id)].mask;
            require(m.has_value(), ErrorKind::invalid_argument, "model expects a mask for case " + std::to_string(id));
            for (auto v : m->data) *dst++ = static_cast<float>(v);
        }
    }
    return c;
}

DiffusionConfig resolve_config(const DiffusionConfig& config, const datagen::DatasetManifest& manifest) {
    DiffusionConfig c = config;
    c.unet.in_channels = 1 + int(c.use_prior) + int(manifest.has_masks);
    c.unet.signal_length = manifest.signal_length;
    return c;
}

std::string lineage_hash(const DiffusionConfig& resolved, std::uint64_t seed, const std::string& dataset_hash,
                         const std::string& operator_hash, const std::string& prior_checksum) {
    return container::config_hash({{"diffusion", resolved.to_json()},
                                   {"seed", seed},
                                   {"dataset", dataset_hash},
                                   {"operator", operator_hash},
                                   {"priors", prior_checksum}});
}

torch::Tensor training_loss(Denoiser& net, const torch::Tensor& x0, const std::vector<double>& sigmas,
                            const torch::Tensor& eps, const ConditionTensors& cond, const torch::Tensor& uncond,
                            const DiffusionConfig& config) {
    require(static_cast<std::int64_t>(sigmas.size()) == x0.size(0), ErrorKind::invalid_argument,
            "one noise level per batch element required");
    const auto dtype = x0.scalar_type();
    const auto sigma = torch::tensor(sigmas, torch::kFloat64).to(dtype);
    std::vector<double> w;
    for (double s : sigmas) w.push_back(loss_weight(s, config.schedule.sigma_data));
    const auto weight = torch::tensor(w, torch::kFloat64).to(dtype).view({-1, 1, 1, 1, 1});
    const auto pred = net->forward(corrupt(x0, sigma, eps), sigma, cond, uncond);
    return timewise_focal_loss(weight * (pred - x0).pow(2), config.focal_xi, config.focal_eps);
}

DiffusionModel train_diffusion(const datagen::Dataset& ds, const sdon::PriorSet* priors, const std::vector<int>& train_cases,
                               const DiffusionConfig& config_in, std::uint64_t seed, const StepCallback& on_step) {
    require(!train_cases.empty(), ErrorKind::precondition, "diffusion training needs a non-empty train split");
    DiffusionConfig config = config_in;
    config.validate();
    if (config.use_prior) {
        require(priors != nullptr, ErrorKind::precondition, "this variant needs operator priors");
        require(priors->dataset_hash == ds.manifest.config_hash, ErrorKind::lineage_mismatch,
                "priors were exported for a different dataset");
    }
    const bool use_mask = ds.manifest.has_masks;
    config = resolve_config(config, ds.manifest);

    DiffusionModel m;
    m.config = config;
    m.signal_scale = ds.manifest.signal_bound;
    m.frames = ds.manifest.frames;
    m.height = ds.manifest.height;
    m.width = ds.manifest.width;
    m.seed = seed;
    m.dataset_hash = ds.manifest.config_hash;
    if (config.use_prior) {
        m.operator_hash = priors->operator_hash;
        m.prior_checksum = priors->checksum;
    }
    m.config_hash = lineage_hash(config, seed, m.dataset_hash, m.operator_hash, m.prior_checksum);

    const auto fields = gather_fields(ds, train_cases);
    std::vector<FieldVideo> owned(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) owned[i] = *fields[i];
    m.normalizer = targets::FieldNormalizer::fit(owned);

    torch::Tensor x0;
    if (config.target == TargetMode::residual) {
        std::vector<FieldVideo> residuals;
        for (int id : train_cases) residuals.push_back(targets::make_residual(ds.cases[static_cast<std::size_t>(id)].field, prior_of(priors, id)));
        m.scaler = targets::fit_scaler(residuals);
        std::vector<const FieldVideo*> ptrs;
        for (const auto& r : residuals) ptrs.push_back(&r);
        x0 = video_batch(ptrs, [&](float v) { return m.scaler->normalize(v); });
    } else {
        x0 = video_batch(fields, [&](float v) { return m.normalizer.normalize(v); });
    }

    torch::manual_seed(derive_seed(seed, kInitStream));
    m.net = Denoiser(config.unet, config.use_prior, use_mask, config.schedule.sigma_data);
    const auto cond_all = condition_tensors(m, ds, priors, train_cases);

    torch::optim::Adam optim(m.net->parameters(), torch::optim::AdamOptions(config.lr));
    std::vector<torch::Tensor> ema;
    if (config.ema_decay > 0.0) {
        for (const auto& p : m.net->parameters()) ema.push_back(p.detach().clone());
    }
    std::mt19937_64 rng(derive_seed(seed, kBatchStream));
    auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, kNoiseStream));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto n = static_cast<std::int64_t>(train_cases.size());
    std::vector<std::int64_t> order;
    std::size_t cursor = 0;
    m.net->train();
    for (int step = 0; step < config.steps; ++step) {
        std::vector<std::int64_t> idx;
        std::vector<double> sig;
        std::vector<std::uint8_t> drop;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                order.resize(static_cast<std::size_t>(n));
                for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
                for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
            sig.push_back(config.sigma_sampler.draw(rng, config.schedule));
            drop.push_back(unit(rng) < config.p_uncond ? 1 : 0);
        }
        const auto bi = torch::tensor(idx, torch::kLong);
        const auto target = x0.index_select(0, bi);
        const auto flags = torch::tensor(std::vector<std::int64_t>(drop.begin(), drop.end()), torch::kLong).to(torch::kBool);
        ConditionTensors cond{cond_all.signal.index_select(0, bi),
                              cond_all.prior.defined() ? cond_all.prior.index_select(0, bi) : torch::Tensor{},
                              cond_all.mask.defined() ? cond_all.mask.index_select(0, bi) : torch::Tensor{}};
        const auto eps = at::randn(target.sizes(), gen, torch::TensorOptions().dtype(torch::kFloat32));

        auto loss = training_loss(m.net, target, sig, eps, cond, flags, config);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) {
            std::ostringstream msg;
            msg << "diffusion loss is not finite at step " << step << ", sigma =";
            for (double s : sig) msg << ' ' << s;
            fail(ErrorKind::numerical_instability, msg.str());
        }
        const double lr = config.lr * std::min(1.0, static_cast<double>(step + 1) / std::max(config.warmup_steps, 1));
        for (auto& group : optim.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        optim.zero_grad();
        loss.backward();
        if (config.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(m.net->parameters(), config.grad_clip);
        optim.step();
        if (!ema.empty()) {
            torch::NoGradGuard g;
            const auto params = m.net->parameters();
            for (std::size_t i = 0; i < ema.size(); ++i) ema[i].mul_(config.ema_decay).add_(params[i].detach(), 1.0 - config.ema_decay);
        }
        m.loss_history.push_back(value);
        m.steps_trained = step + 1;
        if (on_step) on_step(step, value);
    }
    if (!ema.empty()) {
        torch::NoGradGuard g;
        const auto params = m.net->parameters();
        for (std::size_t i = 0; i < ema.size(); ++i) params[i].copy_(ema[i]);
    }
    m.net->eval();
    return m;
}

std::vector<FieldVideo> generate(const DiffusionModel& model, const datagen::Dataset& ds, const sdon::PriorSet* priors,
                                 const std::vector<int>& cases, std::uint64_t seed, const SampleOptions& options) {
    require(ds.manifest.frames == model.frames && ds.manifest.height == model.height && ds.manifest.width == model.width,
            ErrorKind::shape_mismatch, "dataset grid differs from the one the model was trained on");
    NoiseSchedule schedule = model.config.schedule;
    if (options.n_steps) schedule.n_steps = *options.n_steps;
    SamplerOptions so;
    so.churn = options.churn.value_or(model.config.churn);
    so.clamp = model.config.target == TargetMode::full;
    const double guidance = options.guidance.value_or(model.config.guidance);
    auto net = model.net;
    net->eval();

    std::vector<FieldVideo> out;
    out.reserve(cases.size());
    const auto chunk = static_cast<std::size_t>(model.config.sample_batch);
    for (std::size_t start = 0; start < cases.size(); start += chunk) {
        const std::vector<int> ids(cases.begin() + static_cast<std::ptrdiff_t>(start),
                                   cases.begin() + static_cast<std::ptrdiff_t>(std::min(start + chunk, cases.size())));
        const auto cond = condition_tensors(model, ds, priors, ids);
        std::vector<std::uint64_t> seeds;
        for (int id : ids) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(id)));
        const auto samples = heun_sample(
            [&](const torch::Tensor& x, double sigma) {
                return denoise(net, x, torch::full({x.size(0)}, sigma, torch::kFloat32), cond, guidance);
            },
            {1, model.frames, model.height, model.width}, schedule, seeds, so).contiguous();

        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto& gt = ds.cases[static_cast<std::size_t>(ids[i])].field;
            FieldVideo v(gt.frames, gt.height, gt.width);
            const float* src = samples[static_cast<std::int64_t>(i)].data_ptr<float>();
            std::copy(src, src + v.size(), v.data.begin());
            if (model.config.target == TargetMode::residual) {
                v = targets::reconstruct(v, prior_of(priors, ids[i]), *model.scaler);
            } else {
                for (float& x : v.data) x = static_cast<float>(model.normalizer.denormalize(x));
            }
            v.kind = gt.kind;
            v.units = gt.units;
            v.dt = gt.dt;
            if (const auto& mask = ds.cases[static_cast<std::size_t>(ids[i])].mask) {
                for (std::size_t t = 0; t < v.frames; ++t) {
                    auto f = v.frame(t);
                    for (std::size_t k = 0; k < f.size(); ++k) if (!mask->data[k]) f[k] = 0.0f;
                }
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

void save_diffusion(const DiffusionModel& m, const std::filesystem::path& base) {
    nlohmann::json body = {
        {"config", m.config.to_json()},
        {"normalizer", {{"lo", m.normalizer.lo}, {"hi", m.normalizer.hi}}},
        {"signal_scale", m.signal_scale},
        {"T", m.frames},
        {"H", m.height},
        {"W", m.width},
        {"use_mask", m.net->use_mask},
        {"seed", m.seed},
        {"steps_trained", m.steps_trained},
        {"loss_history", m.loss_history},
        {"dataset_hash", m.dataset_hash},
        {"operator_hash", m.operator_hash},
        {"prior_checksum", m.prior_checksum},
        {"config_hash", m.config_hash},
        {"variant", m.variant()},
    };
    if (m.scaler) body["scaler"] = {{"r_min", m.scaler->r_min}, {"r_max", m.scaler->r_max}};
    auto net = m.net;
    checkpoint::save_module(*net, base, kContainer, std::move(body));
}

DiffusionModel load_diffusion(const std::filesystem::path& base) {
    const auto j = checkpoint::read(base, kContainer);
    DiffusionModel m;
    bool use_mask = false;
    try {
        m.config = DiffusionConfig::from_json(j.at("config"));
        m.normalizer = {j.at("normalizer").at("lo").get<double>(), j.at("normalizer").at("hi").get<double>()};
        if (j.contains("scaler")) {
            m.scaler = targets::ResidualScaler{j.at("scaler").at("r_min").get<double>(), j.at("scaler").at("r_max").get<double>()};
            m.scaler->validate();
        }
        m.signal_scale = j.at("signal_scale").get<double>();
        m.frames = j.at("T").get<int>();
        m.height = j.at("H").get<int>();
        m.width = j.at("W").get<int>();
        use_mask = j.at("use_mask").get<bool>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.steps_trained = j.at("steps_trained").get<int>();
        m.loss_history = j.at("loss_history").get<std::vector<double>>();
        m.dataset_hash = j.at("dataset_hash").get<std::string>();
        m.operator_hash = j.at("operator_hash").get<std::string>();
        m.prior_checksum = j.at("prior_checksum").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::shape_mismatch, std::string("diffusion checkpoint manifest is incomplete: ") + e.what());
    }
    require(m.config.target == TargetMode::full || m.scaler.has_value(), ErrorKind::shape_mismatch,
            "residual checkpoint lacks its scaler");
    m.net = Denoiser(m.config.unet, m.config.use_prior, use_mask, m.config.schedule.sigma_data);
    checkpoint::load_parameters(*m.net, base, j);
    m.net->eval();
    return m;
}

}  // namespace prior_refine::diffusion
