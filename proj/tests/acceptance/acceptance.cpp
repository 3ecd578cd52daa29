// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Usage:
//   prior_refine_acceptance --cli <prior-refine> --headline <config.json> --work <dir> [--only 1,2,...]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <torch/torch.h>

#include "prior_refine/container.hpp"
#include "prior_refine/datagen/cavity.hpp"
#include "prior_refine/datagen/signal.hpp"
#include "prior_refine/datagen/stress.hpp"
#include "prior_refine/diffusion/edm.hpp"
#include "prior_refine/diffusion/focal.hpp"
#include "prior_refine/diffusion/sampler.hpp"
#include "prior_refine/diffusion/training.hpp"
#include "prior_refine/error.hpp"
#include "prior_refine/eval/metrics.hpp"
#include "prior_refine/log.hpp"
#include "prior_refine/pipeline/pipeline.hpp"
#include "prior_refine/sdon/sdon.hpp"
#include "prior_refine/targets/residual.hpp"

namespace fs = std::filesystem;
using namespace prior_refine;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

struct Args {
    fs::path cli;
    fs::path headline;
    fs::path work = fs::temp_directory_path() / "prior_refine_acceptance";
    std::set<int> only;
};

std::string sci(double x) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << x;
    return s.str();
}

// ---- 1: focal loss against nested loops --------------------------------

double focal_oracle(const std::vector<double>& e, int B, int C, int T, int H, int W, double xi, double eps) {
    std::vector<double> ell(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) acc += e[((((b * C + c) * T + t) * H + h) * W) + w];
        ell[static_cast<std::size_t>(t)] = acc / (B * C * H * W);
    }
    double mean = 0.0;
    for (double l : ell) mean += l;
    mean /= T;
    double num = 0.0, den = 0.0;
    for (double l : ell) {
        const double w = std::pow(l / (mean + eps), xi);
        num += w * l;
        den += w;
    }
    return num / (den + eps);
}

void focal_loss_oracle(Outcome& out) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(1, 5);
    std::uniform_int_distribution<int> frames(1, 8);
    std::exponential_distribution<double> mag(1.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const int B = dim(rng), C = dim(rng) % 3 + 1, T = frames(rng), H = dim(rng), W = dim(rng);
        const double xi = k % 4 == 0 ? 2.0 : std::uniform_real_distribution<double>(0.0, 4.0)(rng);
        // squared-error-like entries with a per-frame scale so weights differ
        std::vector<double> e(static_cast<std::size_t>(B * C * T * H * W));
        std::vector<double> frame_scale(static_cast<std::size_t>(T));
        for (auto& s : frame_scale) s = std::exp(std::normal_distribution<double>(0.0, 1.5)(rng));
        for (std::size_t i = 0; i < e.size(); ++i) {
            const auto t = (i / static_cast<std::size_t>(H * W)) % static_cast<std::size_t>(T);
            e[i] = mag(rng) * frame_scale[t];
        }
        const auto tensor = torch::tensor(e, torch::kFloat64).view({B, C, T, H, W});
        const double got = diffusion::timewise_focal_loss(tensor, xi, 1e-8).item<double>();
        const double want = focal_oracle(e, B, C, T, H, W, xi, 1e-8);
        worst = std::max(worst, std::abs(got - want) / std::abs(want));
    }
    out.check(worst <= 1e-6, "relative error");
    out.detail << "1000 tensors, max rel err " << sci(worst) << " (tol 1e-06)";
}

// ---- 2: residual round trip ---------------------------------------------

void residual_exactness(Outcome& out) {
    std::mt19937_64 rng(202);
    std::normal_distribution<double> n01(0.0, 1.0);
    double worst = 0.0;
    int corrupted = 0;
    for (int k = 0; k < 100; ++k) {
        FieldVideo gt(6, 12, 12), prior(6, 12, 12);
        const double scale = std::exp(n01(rng));
        for (float& x : gt.data) x = static_cast<float>(scale * n01(rng));
        for (std::size_t i = 0; i < gt.data.size(); ++i) prior.data[i] = gt.data[i] + static_cast<float>(0.1 * scale * n01(rng));
        switch (k % 5) {
            case 1:  // sign flipped and inflated
                for (float& x : prior.data) x = -3.0f * x;
                ++corrupted;
                break;
            case 2:  // constant offset
                for (float& x : prior.data) x += 10.0f;
                ++corrupted;
                break;
            case 3:  // pure noise, unrelated to the truth
                for (float& x : prior.data) x = static_cast<float>(5.0 * n01(rng));
                ++corrupted;
                break;
            case 4:  // zero prior with a few large spikes
                for (float& x : prior.data) x = 0.0f;
                for (int s = 0; s < 8; ++s) prior.data[rng() % prior.data.size()] = (s % 2 ? 1.0f : -1.0f) * 40.0f;
                ++corrupted;
                break;
            default:
                break;
        }
        std::vector<FieldVideo> r{targets::make_residual(gt, prior)};
        const auto scaler = targets::fit_scaler(r);
        const auto back = targets::reconstruct(targets::normalize(r[0], scaler), prior, scaler);
        for (std::size_t i = 0; i < gt.data.size(); ++i) {
            const double err = std::abs(double(back.data[i]) - gt.data[i]) / std::max(1.0, std::abs(double(gt.data[i])));
            worst = std::max(worst, err);
        }
    }
    out.check(worst <= 1e-5, "round-trip error");
    out.detail << "100 cases (" << corrupted << " corrupted priors), max err " << sci(worst)
               << " (tol 1e-05, relative above unit magnitude)";
}

// ---- 3: preconditioning -------------------------------------------------

void preconditioning(Outcome& out) {
    const double sd = 0.5;
    double worst = 0.0, worst_identity = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double sigma = std::exp(std::log(0.002) + (std::log(80.0) - std::log(0.002)) * i / 999.0);
        const auto p = diffusion::precondition(sigma, sd);
        const double s2 = sigma * sigma, d2 = sd * sd;
        const double c_skip = d2 / (s2 + d2);
        const double c_out = sigma * sd / std::sqrt(s2 + d2);
        const double c_in = 1.0 / std::sqrt(s2 + d2);
        for (auto [got, want] : {std::pair{p.c_skip, c_skip}, {p.c_out, c_out}, {p.c_in, c_in}}) {
            worst = std::max(worst, std::abs(got - want) / std::abs(want));
        }
        worst_identity = std::max(worst_identity, std::abs(p.c_in * p.c_in * (s2 + d2) - 1.0));
    }
    out.check(worst <= 1e-12, "closed forms");
    out.check(worst_identity <= 1e-12, "c_in identity");
    out.detail << "1000 sigmas in [0.002, 80], closed forms " << sci(worst) << ", c_in^2(s^2+sd^2)-1 " << sci(worst_identity)
               << " (tol 1e-12)";
}

// ---- 4: sampler analytics -----------------------------------------------

void sampler_analytics(Outcome& out) {
    const double sd = 0.5;
    diffusion::NoiseSchedule schedule;
    const int n = 10000;
    std::vector<std::uint64_t> seeds(n);
    for (int i = 0; i < n; ++i) seeds[static_cast<std::size_t>(i)] = 7000 + static_cast<std::uint64_t>(i);
    const diffusion::SamplerOptions opts{0.0, false, torch::kFloat64};

    auto gaussian = [&](const torch::Tensor& x, double sigma) { return x * (sd * sd / (sd * sd + sigma * sigma)); };
    const auto x = diffusion::heun_sample(gaussian, {4, 4, 4}, schedule, seeds, opts).view({n, -1});
    const auto mu = x.mean(0);
    const auto var = x.var(0, /*unbiased=*/true);
    const double mean_abs_mu = mu.abs().mean().item<double>();
    const double mean_var = var.mean().item<double>();
    const double var_dev = std::abs(mean_var - sd * sd) / (sd * sd);
    const double worst_elem_var = ((var - sd * sd).abs() / (sd * sd)).max().item<double>();
    out.check(mean_abs_mu < 0.05, "mean");
    out.check(var_dev <= 0.05, "variance");

    const double c = 0.37;
    auto constant = [&](const torch::Tensor& v, double) { return torch::full_like(v, c); };
    const auto y = diffusion::heun_sample(constant, {4, 4, 4}, schedule, {seeds.begin(), seeds.begin() + 256}, opts);
    const double const_err = (y - c).abs().max().item<double>();
    out.check(const_err <= schedule.sigma_min, "constant oracle");

    const diffusion::SamplerOptions f32{0.0, true, torch::kFloat32};
    const std::vector<std::uint64_t> few(seeds.begin(), seeds.begin() + 64);
    const auto a = diffusion::heun_sample(gaussian, {4, 4, 4}, schedule, few, f32);
    const auto b = diffusion::heun_sample(gaussian, {4, 4, 4}, schedule, few, f32);
    const bool identical = a.sizes() == b.sizes() && std::memcmp(a.data_ptr(), b.data_ptr(), a.nbytes()) == 0;
    out.check(identical, "determinism");

    out.detail << "10k fields: mean|mu| " << std::fixed << std::setprecision(4) << mean_abs_mu << " (<0.05), var "
               << mean_var << " vs " << sd * sd << " (dev " << std::setprecision(2) << 100 * var_dev
               << "%, worst element " << 100 * worst_elem_var << "%, tol 5%); constant oracle err " << sci(const_err)
               << " (<= sigma_min); gamma=0 rerun " << (identical ? "bit-identical" : "DIFFERS");
}

// ---- 5: gradient check --------------------------------------------------

void gradient_check(Outcome& out) {
    torch::manual_seed(505);
    diffusion::UNetConfig unet;
    unet.in_channels = 2;
    unet.base_channels = 8;
    unet.channel_mult = {1, 1};
    unet.attention_levels = 1;
    unet.attention_heads = 2;
    unet.film_dim = 8;
    unet.noise_dim = 8;
    unet.signal_length = 9;
    diffusion::Denoiser net(unet, true, false, 0.5);
    net->to(torch::kFloat64);
    {
        // move off the zero-initialised output and FiLM layers so every
        // parameter carries gradient
        torch::NoGradGuard g;
        for (auto& p : net->parameters()) p.normal_(0.0, 0.3);
    }
    diffusion::DiffusionConfig config;
    config.unet = unet;
    const auto opt = torch::TensorOptions().dtype(torch::kFloat64);
    const auto x0 = torch::rand({2, 1, 4, 8, 8}, opt) * 2 - 1;
    const auto eps = torch::randn({2, 1, 4, 8, 8}, opt);
    diffusion::ConditionTensors cond{torch::randn({2, 9}, opt), torch::rand({2, 1, 4, 8, 8}, opt) * 2 - 1, {}};
    const auto uncond = torch::tensor({false, true});
    const std::vector<double> sigmas{0.3, 1.7};
    auto loss = [&] { return diffusion::training_loss(net, x0, sigmas, eps, cond, uncond, config); };

    net->zero_grad();
    loss().backward();
    auto params = net->parameters();
    std::vector<std::pair<std::size_t, std::int64_t>> picks;
    std::mt19937_64 rng(55);
    std::size_t total = 0;
    for (const auto& p : params) total += static_cast<std::size_t>(p.numel());
    while (picks.size() < 50) {
        // uniform over all scalar parameters
        auto flat = rng() % total;
        std::size_t k = 0;
        while (flat >= static_cast<std::size_t>(params[k].numel())) flat -= static_cast<std::size_t>(params[k++].numel());
        picks.emplace_back(k, static_cast<std::int64_t>(flat));
    }
    double worst = 0.0;
    const double h = 1e-5;
    torch::NoGradGuard g;
    for (const auto& [k, i] : picks) {
        auto flat = params[k].view({-1});
        const double analytic = params[k].grad().view({-1})[i].item<double>();
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = loss().item<double>();
        flat[i] = orig - h;
        const double down = loss().item<double>();
        flat[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic - numeric) / scale);
    }
    out.check(worst <= 1e-4, "gradient mismatch");
    out.detail << "50 of " << total << " parameters, 2-level 8-channel denoiser (float64), max rel err " << sci(worst)
               << " (tol 1e-04)";
}

// ---- 6: operator oracle -------------------------------------------------

void operator_oracle(Outcome& out) {
    torch::manual_seed(606);
    const sdon::OperatorConfig defaults;
    sdon::SDeepONet net(defaults, 21);
    net->to(torch::kFloat64);
    {
        torch::NoGradGuard g;
        net->beta.fill_(0.31);
    }
    const auto opt = torch::TensorOptions().dtype(torch::kFloat64);
    const auto signals = torch::randn({5, 21}, opt);
    const auto coords = torch::rand({40, 3}, opt);
    torch::NoGradGuard g;
    const auto batched = net->forward(signals, coords);
    const auto b = net->branch->forward(signals);
    const auto t = net->trunk->forward(coords);
    const double beta = net->beta.item<double>();
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
        for (int q = 0; q < 40; ++q) {
            double sum = beta;
            for (int k = 0; k < defaults.hidden_dim; ++k) sum += b[i][k].item<double>() * t[q][k].item<double>();
            worst = std::max(worst, std::abs(batched[i][q].item<double>() - sum) / std::max(1.0, std::abs(sum)));
        }
    }
    out.check(worst <= 1e-6, "inner product");

    const bool hd = b.size(1) == 200 && t.size(1) == 200;
    const bool gru = net->branch->gru->options.num_layers() == 4;
    const bool trunk = net->trunk->layers.size() == 6;
    out.check(defaults.hidden_dim == 200 && hd, "HD");
    out.check(defaults.gru_layers == 4 && gru, "recurrent layers");
    out.check(defaults.trunk_layers == 6 && trunk, "trunk layers");

    sdon::OperatorConfig custom;
    custom.hidden_dim = 32;
    custom.gru_layers = 2;
    custom.trunk_layers = 3;
    sdon::SDeepONet small(custom, 21);
    const bool follows = small->branch->proj->options.out_features() == 32 && small->branch->gru->options.num_layers() == 2 &&
                         small->trunk->layers.size() == 3;
    out.check(follows, "config not honoured");
    out.detail << "200 queries, max rel err " << sci(worst) << " (tol 1e-06); defaults HD " << b.size(1) << ", GRU layers "
               << net->branch->gru->options.num_layers() << ", trunk layers " << net->trunk->layers.size()
               << "; custom config " << (follows ? "honoured" : "IGNORED");
}

// ---- 7: data generation physics -----------------------------------------

void datagen_physics(Outcome& out) {
    datagen::CavityConfig cfg;
    const auto zero = datagen::solve_cavity(InputSignal::uniform(std::vector<double>(101, 0.0)), cfg);
    double zero_max = 0.0;
    for (float x : zero.data) zero_max = std::max(zero_max, double(std::abs(x)));
    out.check(zero_max == 0.0, "zero lid");

    const auto lid = datagen::solve_cavity(datagen::sample_control_signal(77, 6, 1.0, 101), cfg);
    double wall_max = 0.0, interior_max = 0.0;
    const auto n = lid.height;
    for (std::size_t f = 0; f < lid.frames; ++f) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double v = std::abs(lid.at(f, i, j));
                if (i == 0 || j == 0 || i == n - 1 || j == n - 1) wall_max = std::max(wall_max, v);
                else interior_max = std::max(interior_max, v);
            }
        }
    }
    out.check(wall_max == 0.0 && interior_max > 0.0, "walls");

    // psi = sin(pi x) sin(pi y) recovered from its velocity field
    std::vector<double> errs;
    for (int m : {16, 32, 64}) {
        Grid2D u(m, m), v(m, m);
        const double h = 1.0 / (m - 1), pi = std::numbers::pi;
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) {
                u(r, c) = pi * std::sin(pi * c * h) * std::cos(pi * r * h);
                v(r, c) = -pi * std::cos(pi * c * h) * std::sin(pi * r * h);
            }
        }
        const auto psi = datagen::streamfunction_from_velocity(u, v);
        double e = 0.0;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) e = std::max(e, std::abs(psi(r, c) - std::sin(pi * c * h) * std::sin(pi * r * h)));
        errs.push_back(e);
    }
    const double o1 = std::log(errs[0] / errs[1]) / std::log(31.0 / 15.0);
    const double o2 = std::log(errs[1] / errs[2]) / std::log(63.0 / 31.0);
    out.check(o1 >= 1.8 && o2 >= 1.8, "convergence order");

    double vm_err = 0.0;
    for (double s : {-250.0, -1.0, 0.5, 3.0, 123.456}) {
        Grid2D a(1, 1), zero1(1, 1), shear(1, 1);
        a(0, 0) = s;
        shear(0, 0) = s;
        const double uni = datagen::von_mises_field(a, zero1, zero1)(0, 0);
        const double pure = datagen::von_mises_field(zero1, zero1, shear)(0, 0);
        vm_err = std::max(vm_err, std::abs(uni - std::abs(s)) / std::abs(s));
        vm_err = std::max(vm_err, std::abs(pure - std::sqrt(3.0) * std::abs(s)) / std::abs(s));
    }
    out.check(vm_err <= 1e-12, "von Mises");
    out.detail << "zero lid max|psi| " << zero_max << "; wall max " << wall_max << " over " << lid.frames
               << " frames; manufactured errors " << sci(errs[0]) << "/" << sci(errs[1]) << "/" << sci(errs[2])
               << " order " << std::fixed << std::setprecision(2) << o1 << ", " << o2 << " (>= 1.8); von Mises "
               << sci(vm_err) << " (tol 1e-12)";
}

// ---- 8: metrics ---------------------------------------------------------

void metrics_examples(Outcome& out) {
    double worst = 0.0;
    auto expect = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
    FieldVideo truth(3, 4, 5);
    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (float& x : truth.data) x = static_cast<float>(u(rng));
    FieldVideo twice = truth;
    for (float& x : twice.data) x *= 2.0f;
    expect(eval::rel_l2(truth, truth).value, 0.0);
    expect(eval::rmae(truth, truth).value, 0.0);
    expect(eval::mae(truth, truth), 0.0);
    expect(eval::rel_l2(truth, twice).value, 1.0);
    expect(eval::rmae(truth, twice).value, 1.0);

    // per-frame ratios 0.1 and 0.3: |(3, 4)| = 5, deviations 0.5 and 1.5
    FieldVideo t2(2, 1, 2), p2(2, 1, 2);
    t2.data = {3.0f, 4.0f, 3.0f, 4.0f};
    p2.data = {3.5f, 4.0f, 4.5f, 4.0f};
    expect(eval::rel_l2(t2, p2).value, 0.2);

    FieldVideo k(2, 3, 3, 4.0f), kc(2, 3, 3, 4.5f);
    expect(eval::rmae(k, kc).value, 0.5 / 4.0);
    FieldVideo off1(2, 3, 3, 5.0f);
    expect(eval::mae(k, off1), 1.0);
    FieldVideo half(1, 2, 2, 1.0f), half_pred = half;
    half_pred.data = {3.0f, -1.0f, 1.0f, 1.0f};
    expect(eval::mae(half, half_pred), 1.0);
    out.check(worst <= 1e-9, "hand examples");

    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    const auto p = eval::percentile_report(v);
    const std::array<double, 5> got{p.best, p.p25, p.p50, p.p75, p.worst}, want{1, 25.75, 50.5, 75.25, 100};
    double pct_err = 0.0;
    for (std::size_t i = 0; i < 5; ++i) pct_err = std::max(pct_err, std::abs(got[i] - want[i]));
    out.check(pct_err <= 1e-9, "percentiles");
    out.detail << "hand examples max abs err " << sci(worst) << " (tol 1e-09); percentiles (" << p.best << ", " << p.p25 << ", "
               << p.p50 << ", " << p.p75 << ", " << p.worst << ")";
}

// ---- 9: headline ablation -----------------------------------------------

void headline(Outcome& out, const Args& args) {
    const auto config = pipeline::load_config(args.headline);
    pipeline::RunOptions o;
    o.out = args.work / "headline";
    fs::remove_all(*o.out);
    const auto t0 = std::chrono::steady_clock::now();
    auto stage = [&](const std::string& cmd, pipeline::RunOptions opts) {
        log::info("headline: " + cmd + (opts.target ? " --target " + *opts.target : "") + (opts.no_prior ? " --no-prior" : ""));
        pipeline::dispatch(cmd, config, opts);
    };
    stage("gen-data", o);
    stage("train-operator", o);
    stage("export-priors", o);
    for (const auto& v : {"vd-pc-r", "vd-pc-d", "vd-np"}) {
        auto d = o;
        const auto c = pipeline::variant_config(config.diffusion, v);
        d.target = std::string(diffusion::to_string(c.target));
        d.no_prior = !c.use_prior;
        stage("train-diffusion", d);
    }
    stage("evaluate", o);
    const double hours = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 3600.0;
    const auto report = pipeline::read_report(pipeline::layout(config, o).eval);
    const double sdon = report.find("sdon")->mean_rel_l2;
    const double np = report.find("vd-np")->mean_rel_l2;
    const double pcd = report.find("vd-pc-d")->mean_rel_l2;
    const double pcr = report.find("vd-pc-r")->mean_rel_l2;
    out.check(pcr < sdon, "VD-PC-R < SDON");
    out.check(pcr <= pcd, "VD-PC-R <= VD-PC-D");
    out.check(pcr <= 0.6 * sdon, "VD-PC-R <= 0.6 SDON");
    out.check(hours <= 6.0, "CPU budget");
    out.detail << std::fixed << std::setprecision(2) << config.dataset.n_cases << " cases, " << report.variants[0].cases.size()
               << " test; mean Rel-L2 SDON " << 100 * sdon << "%, VD-NP " << 100 * np << "%, VD-PC-D " << 100 * pcd
               << "%, VD-PC-R " << 100 * pcr << "% (ratio " << std::setprecision(3) << pcr / sdon << ", need <= 0.6); "
               << std::setprecision(2) << hours << " h (<= 6)";
}

// ---- 10: determinism and lineage through the CLI ------------------------

int run_cli(const Args& args, const std::string& command, const fs::path& config, const fs::path& out,
            const std::string& extra = "") {
    const auto log = out.parent_path() / (out.filename().string() + "_cli.log");
    const std::string cmd = "\"" + args.cli.string() + "\" " + command + " --config \"" + config.string() + "\" --out \"" +
                            out.string() + "\" --log-level warn " + extra + " >> \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root).string();
        if (rel.rfind("logs", 0) == 0) continue;  // run logs carry wall-clock times
        files[rel] = container::read_file(e.path());
    }
    return files;
}

void determinism(Outcome& out, const Args& args) {
    const auto dir = args.work / "lineage";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto cfg = json::parse(R"({
      "seed": 5,
      "dataset": {"benchmark": "cavity", "n_cases": 10, "grid": 16, "frames": 6, "signal_length": 21},
      "operator": {"hidden_dim": 16, "gru_layers": 2, "gru_hidden": 8, "trunk_layers": 3, "trunk_width": 16,
                   "epochs": 3, "batch_size": 4, "points_per_step": 128},
      "diffusion": {"steps": 4, "batch_size": 2, "sample_batch": 4, "warmup_steps": 2,
                    "unet": {"base_channels": 8, "channel_mult": [1, 2], "attention_levels": 1, "attention_heads": 2,
                             "film_dim": 8, "noise_dim": 8},
                    "schedule": {"n_steps": 4}},
      "eval": {"seed": 11}
    })");
    container::write_atomic(dir / "config.json", cfg.dump(2));
    cfg["diffusion"]["lr"] = 5e-4;
    container::write_atomic(dir / "changed.json", cfg.dump(2));

    const std::vector<std::pair<std::string, std::string>> stages{
        {"gen-data", "--jobs 2"},
        {"train-operator", ""},
        {"export-priors", ""},
        {"train-diffusion", "--target full --no-prior"},
        {"train-diffusion", "--target full"},
        {"train-diffusion", "--target residual"},
        {"sample", ""},
        {"evaluate", "--variants sdon,vd-np,vd-pc-d,vd-pc-r"},
        {"report", ""}};
    int failures = 0;
    for (const auto* run : {"a", "b"}) {
        for (const auto& [cmd, extra] : stages) failures += run_cli(args, cmd, dir / "config.json", dir / run, extra) != 0;
    }
    out.check(failures == 0, "pipeline commands");
    const auto a = snapshot(dir / "a"), b = snapshot(dir / "b");
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) {
        if (!b.count(name) || b.at(name) != bytes) {
            ++differing;
            out.detail << "[" << name << " differs] ";
        }
    }
    out.check(a.size() == b.size() && differing == 0 && !a.empty(), "byte-identical artifacts");

    // stage rerun in place reproduces the same bytes too
    run_cli(args, "train-diffusion", dir / "config.json", dir / "a", "--target residual");
    const auto again = snapshot(dir / "a");
    out.check(again == a, "in-place rerun");

    // evaluate must refuse checkpoints whose hash no longer matches
    const int changed = run_cli(args, "evaluate", dir / "changed.json", dir / "a");
    auto manifest = json::parse(container::read_file(dir / "b" / "diffusion" / "vd-pc-d.manifest.json"));
    manifest["config_hash"] = "0000000000000000";
    container::write_atomic(dir / "b" / "diffusion" / "vd-pc-d.manifest.json", manifest.dump(2));
    const int tampered = run_cli(args, "evaluate", dir / "config.json", dir / "b");
    const int forced = run_cli(args, "evaluate", dir / "config.json", dir / "b", "--force");
    out.check(changed != 0, "changed config accepted");
    out.check(tampered != 0, "tampered hash accepted");
    out.check(forced == 0, "--force");
    out.detail << a.size() << " artifacts compared across two runs, " << differing << " differ; evaluate exit codes: "
               << "changed config " << changed << ", tampered hash " << tampered << ", --force " << forced;
}

struct Criterion {
    int id;
    std::string name;
    double limit_s;  ///< runtime bound; 0 for none beyond the ctest timeout
    std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    Args args;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) {
                std::cerr << a << " needs a value\n";
                std::exit(2);
            }
            return argv[++i];
        };
        if (a == "--cli") args.cli = next();
        else if (a == "--headline") args.headline = next();
        else if (a == "--work") args.work = next();
        else if (a == "--only") {
            std::stringstream s(next());
            for (std::string item; std::getline(s, item, ',');) args.only.insert(std::stoi(item));
        } else {
            std::cerr << "unknown argument " << a << "\n";
            return 2;
        }
    }
    log::set_level(log::Level::warn);
    torch::set_num_threads(1);
    fs::create_directories(args.work);

    const std::vector<Criterion> criteria{
        {1, "focal loss oracle", 60, focal_loss_oracle},
        {2, "residual exactness", 60, residual_exactness},
        {3, "preconditioning identities", 1, preconditioning},
        {4, "sampler analytics", 300, sampler_analytics},
        {5, "gradient check", 300, gradient_check},
        {6, "operator oracle", 60, operator_oracle},
        {7, "datagen physics", 300, datagen_physics},
        {8, "metrics", 1, metrics_examples},
        {9, "desk-scale ablation", 0, [&](Outcome& o) { headline(o, args); }},
        {10, "determinism and lineage", 0, [&](Outcome& o) { determinism(o, args); }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!args.only.empty() && !args.only.count(c.id)) continue;
        if ((c.id == 9 && args.headline.empty()) || (c.id == 10 && args.cli.empty())) {
            std::cout << "FAIL  " << std::setw(2) << c.id << "  " << c.name << ": missing --headline/--cli argument\n";
            ++failed;
            continue;
        }
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "[exception: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0 && secs >= c.limit_s) o.check(false, "runtime over " + std::to_string(int(c.limit_s)) + " s");
        std::cout << (o.pass ? "PASS  " : "FAIL  ") << std::setw(2) << c.id << "  " << c.name << ": " << o.detail.str()
                  << " [" << std::fixed << std::setprecision(1) << secs << " s]" << std::endl;
        failed += !o.pass;
    }
    std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << "\n";
    return failed ? 1 : 0;
}
