#include "prior_refine/sdon/training.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "prior_refine/checkpoint.hpp"
#include "prior_refine/container.hpp"
#include "prior_refine/error.hpp"
#include "prior_refine/seeding.hpp"

namespace prior_refine::sdon {

namespace {

constexpr std::string_view kOperatorContainer = "prior_refine.operator";
constexpr std::string_view kPriorContainer = "prior_refine.priors";
constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kBatchStream = 12;
constexpr std::uint64_t kProbeStream = 13;
constexpr std::int64_t kProbePoints = 4096;
constexpr std::int64_t kPredictChunk = 64;

torch::Tensor signal_matrix(const std::vector<InputSignal>& signals, double scale) {
    const auto n = static_cast<std::int64_t>(signals.size());
    const auto l = static_cast<std::int64_t>(signals.front().length());
    auto out = torch::empty({n, l}, torch::kFloat32);
    auto acc = out.accessor<float, 2>();
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& s = signals[static_cast<std::size_t>(i)];
        require(static_cast<std::int64_t>(s.length()) == l, ErrorKind::invalid_argument, "signals differ in length");
        for (std::int64_t k = 0; k < l; ++k) acc[i][k] = static_cast<float>(s.values[static_cast<std::size_t>(k)] / scale);
    }
    return out;
}

double probe_mse(SDeepONet& net, const torch::Tensor& signals, const torch::Tensor& targets, const torch::Tensor& coords) {
    torch::NoGradGuard no_grad;
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::int64_t start = 0; start < signals.size(0); start += kPredictChunk) {
        const auto end = std::min(start + kPredictChunk, signals.size(0));
        const auto pred = net->forward(signals.slice(0, start, end), coords);
        sum += (pred - targets.slice(0, start, end)).pow(2).sum().item<double>();
        count += pred.numel();
    }
    return sum / static_cast<double>(count);
}

}  // namespace

std::string lineage_hash(const OperatorConfig& config, std::uint64_t seed, const std::string& dataset_hash) {
    return container::config_hash({{"operator", config.to_json()}, {"seed", seed}, {"dataset", dataset_hash}});
}

OperatorModel init_operator(const datagen::DatasetManifest& manifest, const OperatorConfig& config, std::uint64_t seed) {
    config.validate();
    torch::manual_seed(derive_seed(seed, kInitStream));
    OperatorModel m;
    m.net = SDeepONet(config, manifest.signal_length);
    m.config = config;
    m.signal_scale = manifest.signal_bound;
    m.frames = manifest.frames;
    m.height = manifest.height;
    m.width = manifest.width;
    m.seed = seed;
    m.dataset_hash = manifest.config_hash;
    m.config_hash = lineage_hash(config, seed, manifest.config_hash);
    return m;
}

OperatorModel train_operator(const datagen::Dataset& dataset, const std::vector<int>& train_cases,
                             const OperatorConfig& config, std::uint64_t seed, const EpochCallback& on_epoch) {
    require(!train_cases.empty(), ErrorKind::precondition, "operator training needs a non-empty train split");
    OperatorModel m = init_operator(dataset.manifest, config, seed);

    std::vector<FieldVideo> fields;
    std::vector<InputSignal> signals;
    for (int id : train_cases) {
        require(id >= 0 && id < static_cast<int>(dataset.cases.size()), ErrorKind::invalid_argument, "train case out of range");
        fields.push_back(dataset.cases[static_cast<std::size_t>(id)].field);
        signals.push_back(dataset.cases[static_cast<std::size_t>(id)].signal);
    }
    m.normalizer = targets::FieldNormalizer::fit(fields);

    const auto n = static_cast<std::int64_t>(fields.size());
    const auto q = static_cast<std::int64_t>(m.frames) * m.height * m.width;
    auto targets = torch::empty({n, q}, torch::kFloat32);
    for (std::int64_t i = 0; i < n; ++i) {
        auto row = targets[i];
        const auto& data = fields[static_cast<std::size_t>(i)].data;
        auto acc = row.accessor<float, 1>();
        for (std::int64_t k = 0; k < q; ++k) acc[k] = static_cast<float>(m.normalizer.normalize(data[static_cast<std::size_t>(k)]));
    }
    const auto sig = signal_matrix(signals, m.signal_scale);
    const auto coords = coordinate_grid(m.frames, m.height, m.width);

    std::mt19937_64 probe_rng(derive_seed(seed, kProbeStream));
    const auto probe_n = std::min(q, kProbePoints);
    auto probe_idx = torch::empty({probe_n}, torch::kLong);
    for (std::int64_t i = 0; i < probe_n; ++i) probe_idx[i] = static_cast<std::int64_t>(probe_rng() % static_cast<std::uint64_t>(q));
    const auto probe_coords = coords.index_select(0, probe_idx);
    const auto probe_targets = targets.index_select(1, probe_idx);
    m.log.initial_mse = probe_mse(m.net, sig, probe_targets, probe_coords);

    torch::optim::Adam optim(m.net->parameters(), torch::optim::AdamOptions(config.lr));
    std::mt19937_64 rng(derive_seed(seed, kBatchStream));
    const std::int64_t batch = std::min<std::int64_t>(config.batch_size, n);
    const std::int64_t steps_per_epoch = (n + batch - 1) / batch;
    const std::int64_t total_steps = std::max<std::int64_t>(1, steps_per_epoch * config.epochs);
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));

    m.net->train();
    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

        double epoch_sum = 0.0;
        for (std::int64_t b = 0; b < steps_per_epoch; ++b, ++step) {
            const auto lo = b * batch;
            const auto hi = std::min(lo + batch, n);
            auto case_idx = torch::tensor(std::vector<std::int64_t>(order.begin() + lo, order.begin() + hi), torch::kLong);
            auto point_idx = torch::empty({config.points_per_step}, torch::kLong);
            for (int p = 0; p < config.points_per_step; ++p) {
                point_idx[p] = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(q));
            }

            const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
            const double lr = config.lr_final + 0.5 * (config.lr - config.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
            for (auto& group : optim.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

            const auto pred = m.net->forward(sig.index_select(0, case_idx), coords.index_select(0, point_idx));
            const auto target = targets.index_select(0, case_idx).index_select(1, point_idx);
            auto loss = torch::mse_loss(pred, target);
            const double value = loss.item<double>();
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg << "operator loss is not finite at epoch " << epoch << ", batch " << b << ", lr " << lr;
                fail(ErrorKind::numerical_instability, msg.str());
            }
            optim.zero_grad();
            loss.backward();
            optim.step();
            epoch_sum += value;
        }
        const double mean = epoch_sum / static_cast<double>(steps_per_epoch);
        m.log.epoch_loss.push_back(mean);
        m.epochs_trained = epoch + 1;
        if (on_epoch) on_epoch(epoch, mean);
    }
    m.net->eval();
    m.log.final_mse = probe_mse(m.net, sig, probe_targets, probe_coords);
    return m;
}

std::vector<FieldVideo> predict_videos(const OperatorModel& model, const std::vector<InputSignal>& signals) {
    if (signals.empty()) return {};
    torch::NoGradGuard no_grad;
    for (const auto& s : signals) {
        require(static_cast<int>(s.length()) == model.net->signal_length(), ErrorKind::invalid_argument,
                "signal length does not match the operator's trained length");
    }
    auto net = model.net;
    const auto sig = signal_matrix(signals, model.signal_scale);
    const auto trunk = net->trunk->forward(coordinate_grid(model.frames, model.height, model.width));
    std::vector<FieldVideo> out;
    out.reserve(signals.size());
    for (std::int64_t start = 0; start < sig.size(0); start += kPredictChunk) {
        const auto end = std::min(start + kPredictChunk, sig.size(0));
        const auto branch = net->branch->forward(sig.slice(0, start, end));
        const auto pred = (torch::einsum("bi,qi->bq", {branch, trunk}) + net->beta).contiguous();
        for (std::int64_t i = 0; i < pred.size(0); ++i) {
            FieldVideo v(static_cast<std::size_t>(model.frames), static_cast<std::size_t>(model.height),
                         static_cast<std::size_t>(model.width));
            const float* row = pred[i].data_ptr<float>();
            for (std::size_t k = 0; k < v.data.size(); ++k) v.data[k] = static_cast<float>(model.normalizer.denormalize(row[k]));
            v.dt = 1.0 / model.frames;
            out.push_back(std::move(v));
        }
    }
    return out;
}

void save_operator(const OperatorModel& model, const std::filesystem::path& base) {
    nlohmann::json body = {
        {"config", model.config.to_json()},
        {"seed", model.seed},
        {"epochs_trained", model.epochs_trained},
        {"loss_history", model.log.epoch_loss},
        {"initial_mse", model.log.initial_mse},
        {"final_mse", model.log.final_mse},
        {"signal_length", model.net->signal_length()},
        {"signal_scale", model.signal_scale},
        {"normalizer", {{"lo", model.normalizer.lo}, {"hi", model.normalizer.hi}}},
        {"T", model.frames},
        {"H", model.height},
        {"W", model.width},
        {"dataset_hash", model.dataset_hash},
        {"config_hash", model.config_hash},
    };
    auto net = model.net;
    checkpoint::save_module(*net, base, kOperatorContainer, std::move(body));
}

OperatorModel load_operator(const std::filesystem::path& base) {
    const auto j = checkpoint::read(base, kOperatorContainer);
    OperatorModel m;
    try {
        m.config = OperatorConfig::from_json(j.at("config"));
        m.seed = j.at("seed").get<std::uint64_t>();
        m.epochs_trained = j.at("epochs_trained").get<int>();
        m.log.epoch_loss = j.at("loss_history").get<std::vector<double>>();
        m.log.initial_mse = j.at("initial_mse").get<double>();
        m.log.final_mse = j.at("final_mse").get<double>();
        m.signal_scale = j.at("signal_scale").get<double>();
        m.normalizer = {j.at("normalizer").at("lo").get<double>(), j.at("normalizer").at("hi").get<double>()};
        m.frames = j.at("T").get<int>();
        m.height = j.at("H").get<int>();
        m.width = j.at("W").get<int>();
        m.dataset_hash = j.at("dataset_hash").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.net = SDeepONet(m.config, j.at("signal_length").get<int>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::shape_mismatch, std::string("operator checkpoint manifest is incomplete: ") + e.what());
    }
    checkpoint::load_parameters(*m.net, base, j);
    m.net->eval();
    return m;
}

PriorSet export_priors(const OperatorModel& model, const datagen::Dataset& dataset) {
    const auto& man = dataset.manifest;
    require(man.frames == model.frames && man.height == model.height && man.width == model.width, ErrorKind::internal,
            "operator grid does not match the dataset manifest");
    std::vector<InputSignal> signals;
    signals.reserve(dataset.cases.size());
    for (const auto& rec : dataset.cases) signals.push_back(rec.signal);
    PriorSet set;
    set.priors = predict_videos(model, signals);
    for (auto& p : set.priors) {
        require(p.frames == static_cast<std::size_t>(man.frames) && p.height == static_cast<std::size_t>(man.height) &&
                    p.width == static_cast<std::size_t>(man.width),
                ErrorKind::internal, "prior shape disagrees with the dataset manifest");
        p.units = man.units;
        p.dt = man.dt;
    }
    set.operator_hash = model.config_hash;
    set.dataset_hash = model.dataset_hash;
    return set;
}

void persist_priors(PriorSet& priors, const std::filesystem::path& base) {
    require(!priors.priors.empty(), ErrorKind::invalid_argument, "no priors to persist");
    const auto& first = priors.priors.front();
    std::vector<float> flat;
    flat.reserve(priors.priors.size() * first.size());
    for (const auto& p : priors.priors) {
        require(p.same_shape(first), ErrorKind::shape_mismatch, "priors differ in shape");
        flat.insert(flat.end(), p.data.begin(), p.data.end());
    }
    const auto info = container::write_blob(base, "fields.bin", flat,
                                            {static_cast<std::int64_t>(priors.priors.size()), static_cast<std::int64_t>(first.frames),
                                             static_cast<std::int64_t>(first.height), static_cast<std::int64_t>(first.width)});
    priors.checksum = info.checksum;
    container::write_manifest(base, {
                                        {"container", kPriorContainer},
                                        {"format_version", container::kFormatVersion},
                                        {"dtype", container::kDtype},
                                        {"units", first.units},
                                        {"dt", first.dt},
                                        {"operator_hash", priors.operator_hash},
                                        {"dataset_hash", priors.dataset_hash},
                                        {"blobs", {{"fields", container::to_json(info)}}},
                                    });
}

PriorSet load_priors(const std::filesystem::path& base) {
    const auto j = container::read_manifest(base, kPriorContainer);
    const auto info = container::blob_from_json(j.at("blobs").at("fields"));
    require(info.shape.size() == 4, ErrorKind::shape_mismatch, "priors blob must be (N, T, H, W)");
    const auto flat = container::read_blob(base, info, true);
    PriorSet set;
    set.operator_hash = j.at("operator_hash").get<std::string>();
    set.dataset_hash = j.at("dataset_hash").get<std::string>();
    set.checksum = info.checksum;
    const auto n = static_cast<std::size_t>(info.shape[0]);
    const auto t = static_cast<std::size_t>(info.shape[1]);
    const auto h = static_cast<std::size_t>(info.shape[2]);
    const auto w = static_cast<std::size_t>(info.shape[3]);
    for (std::size_t i = 0; i < n; ++i) {
        FieldVideo v(t, h, w);
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i * v.size()), v.size(), v.data.begin());
        v.units = j.value("units", "");
        v.dt = j.value("dt", 0.0);
        set.priors.push_back(std::move(v));
    }
    return set;
}

}  // namespace prior_refine::sdon
