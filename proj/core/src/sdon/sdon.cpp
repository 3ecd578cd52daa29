#include "prior_refine/sdon/sdon.hpp"

#include "prior_refine/error.hpp"

namespace prior_refine::sdon {

void OperatorConfig::validate() const {
    require(hidden_dim >= 1, ErrorKind::configuration, "operator.hidden_dim must be >= 1");
    require(gru_layers >= 1, ErrorKind::configuration, "operator.gru_layers must be >= 1");
    require(gru_hidden >= 1, ErrorKind::configuration, "operator.gru_hidden must be >= 1");
    require(trunk_layers >= 2, ErrorKind::configuration, "operator.trunk_layers must be >= 2");
    require(trunk_width >= 1, ErrorKind::configuration, "operator.trunk_width must be >= 1");
    require(lr > 0.0 && lr_final >= 0.0, ErrorKind::configuration, "operator learning rates must be positive");
    require(epochs >= 0 && batch_size >= 1 && points_per_step >= 1, ErrorKind::configuration,
            "operator epochs/batch_size/points_per_step out of range");
}

nlohmann::json OperatorConfig::to_json() const {
    return {{"hidden_dim", hidden_dim},   {"gru_layers", gru_layers}, {"gru_hidden", gru_hidden},
            {"trunk_layers", trunk_layers}, {"trunk_width", trunk_width}, {"lr", lr},
            {"lr_final", lr_final},       {"epochs", epochs},         {"batch_size", batch_size},
            {"points_per_step", points_per_step}};
}

OperatorConfig OperatorConfig::from_json(const nlohmann::json& j) {
    OperatorConfig c;
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.gru_layers = j.value("gru_layers", c.gru_layers);
    c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
    c.trunk_layers = j.value("trunk_layers", c.trunk_layers);
    c.trunk_width = j.value("trunk_width", c.trunk_width);
    c.lr = j.value("lr", c.lr);
    c.lr_final = j.value("lr_final", c.lr_final);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.points_per_step = j.value("points_per_step", c.points_per_step);
    return c;
}

BranchNetImpl::BranchNetImpl(const OperatorConfig& config) {
    gru = register_module(
        "gru", torch::nn::GRU(torch::nn::GRUOptions(1, config.gru_hidden).num_layers(config.gru_layers).batch_first(true)));
    proj = register_module("proj", torch::nn::Linear(config.gru_hidden, config.hidden_dim));
}

torch::Tensor BranchNetImpl::forward(const torch::Tensor& signals) {
    auto [sequence, hidden] = gru->forward(signals.unsqueeze(-1));
    (void)sequence;
    return proj->forward(hidden[-1]);
}

TrunkNetImpl::TrunkNetImpl(const OperatorConfig& config) {
    for (int i = 0; i < config.trunk_layers; ++i) {
        const int in = i == 0 ? 3 : config.trunk_width;
        const int out = i + 1 == config.trunk_layers ? config.hidden_dim : config.trunk_width;
        layers.push_back(register_module("fc" + std::to_string(i), torch::nn::Linear(in, out)));
    }
}

torch::Tensor TrunkNetImpl::forward(const torch::Tensor& coords) {
    torch::Tensor x = coords;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i]->forward(x);
        if (i + 1 < layers.size()) x = torch::relu(x);
    }
    return x;
}

SDeepONetImpl::SDeepONetImpl(const OperatorConfig& config, int signal_length)
    : config_(config), signal_length_(signal_length) {
    config.validate();
    require(signal_length >= 2, ErrorKind::invalid_argument, "signal length must be at least 2");
    branch = register_module("branch", BranchNet(config));
    trunk = register_module("trunk", TrunkNet(config));
    beta = register_parameter("beta", torch::zeros({}));
}

torch::Tensor SDeepONetImpl::forward(const torch::Tensor& signals, const torch::Tensor& coords) {
    require(signals.dim() == 2 && signals.size(1) == signal_length_, ErrorKind::invalid_argument,
            "branch input must be [B, " + std::to_string(signal_length_) + "]");
    const auto b = branch->forward(signals);
    const auto t = trunk->forward(coords);
    return torch::einsum("bi,qi->bq", {b, t}) + beta;
}

torch::Tensor SDeepONetImpl::forward_pointwise(const torch::Tensor& signals, const torch::Tensor& coords) {
    require(signals.dim() == 2 && signals.size(1) == signal_length_, ErrorKind::invalid_argument,
            "branch input must be [B, " + std::to_string(signal_length_) + "]");
    const auto b = branch->forward(signals);
    const auto t = trunk->forward(coords);
    return torch::einsum("bi,bqi->bq", {b, t}) + beta;
}

torch::Tensor coordinate_grid(int frames, int height, int width) {
    auto axis = [](int n) {
        return n > 1 ? torch::linspace(0.0, 1.0, n, torch::kFloat32) : torch::zeros({1}, torch::kFloat32);
    };
    auto grids = torch::meshgrid({axis(frames), axis(height), axis(width)}, "ij");
    // Columns ordered (x, y, t): width, height, time.
    return torch::stack({grids[2].reshape(-1), grids[1].reshape(-1), grids[0].reshape(-1)}, 1);
}

std::vector<double> sdon_forward(SDeepONet& model, const InputSignal& signal,
                                 const std::vector<std::array<double, 3>>& coords) {
    require(static_cast<int>(signal.length()) == model->signal_length(), ErrorKind::invalid_argument,
            "signal length " + std::to_string(signal.length()) + " does not match trained length " +
                std::to_string(model->signal_length()));
    torch::NoGradGuard no_grad;
    const auto dtype = model->beta.scalar_type();
    auto sig = torch::tensor(signal.values, torch::kFloat64).to(dtype).unsqueeze(0);
    auto q = torch::empty({static_cast<std::int64_t>(coords.size()), 3}, torch::kFloat64);
    auto acc = q.accessor<double, 2>();
    for (std::size_t i = 0; i < coords.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            require(std::isfinite(coords[i][static_cast<std::size_t>(k)]), ErrorKind::invalid_argument,
                    "query coordinates must be finite");
            acc[static_cast<std::int64_t>(i)][k] = coords[i][static_cast<std::size_t>(k)];
        }
    }
    const auto out = model->forward(sig, q.to(dtype)).squeeze(0).to(torch::kFloat64).contiguous();
    return {out.data_ptr<double>(), out.data_ptr<double>() + out.numel()};
}

}  // namespace prior_refine::sdon
