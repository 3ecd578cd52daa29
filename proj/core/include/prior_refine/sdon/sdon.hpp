#pragma once

#include <array>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "prior_refine/fields.hpp"

namespace prior_refine::sdon {

struct OperatorConfig {
    int hidden_dim = 200;   ///< HD: length of both branch and trunk latents
    int gru_layers = 4;
    int gru_hidden = 128;   ///< recurrent state width before projection to HD
    int trunk_layers = 6;   ///< linear layers in the trunk, ReLU between them
    int trunk_width = 200;
    double lr = 1e-3;
    double lr_final = 1e-5;  ///< cosine decay floor
    int epochs = 200;
    int batch_size = 16;         ///< cases per step
    int points_per_step = 2048;  ///< (x, y, t) samples per step, shared by the cases

    void validate() const;
    nlohmann::json to_json() const;
    static OperatorConfig from_json(const nlohmann::json& j);
};

/// Recurrent encoder of the input history: stacked GRU over the (normalized)
/// signal, final hidden state of the last layer projected to HD.
class BranchNetImpl : public torch::nn::Module {
public:
    explicit BranchNetImpl(const OperatorConfig& config);

    /// signals: [B, l] -> [B, HD]
    torch::Tensor forward(const torch::Tensor& signals);

    torch::nn::GRU gru{nullptr};
    torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(BranchNet);

/// Feed-forward coordinate encoder: (x, y, t) in [0,1]^3 -> HD.
class TrunkNetImpl : public torch::nn::Module {
public:
    explicit TrunkNetImpl(const OperatorConfig& config);

    /// coords: [..., 3] -> [..., HD]
    torch::Tensor forward(const torch::Tensor& coords);

    std::vector<torch::nn::Linear> layers;
};
TORCH_MODULE(TrunkNet);

/// u(x, y, t; a) = sum_i Br_i(a) Tr_i(x, y, t) + beta, in normalized field units.
class SDeepONetImpl : public torch::nn::Module {
public:
    SDeepONetImpl(const OperatorConfig& config, int signal_length);

    /// Shared query grid: signals [B, l], coords [Q, 3] -> [B, Q].
    torch::Tensor forward(const torch::Tensor& signals, const torch::Tensor& coords);

    /// Per-case queries: signals [B, l], coords [B, Q, 3] -> [B, Q].
    torch::Tensor forward_pointwise(const torch::Tensor& signals, const torch::Tensor& coords);

    const OperatorConfig& config() const noexcept { return config_; }
    int signal_length() const noexcept { return signal_length_; }

    BranchNet branch{nullptr};
    TrunkNet trunk{nullptr};
    torch::Tensor beta;

private:
    OperatorConfig config_;
    int signal_length_;
};
TORCH_MODULE(SDeepONet);

/// Trunk coordinates of every (t, h, w) node of a T x H x W grid, C-order,
/// each axis mapped onto [0, 1]: [T*H*W, 3] as (x, y, t).
torch::Tensor coordinate_grid(int frames, int height, int width);

/// Per-query evaluation of one case: one value per (x, y, t) coordinate.
/// Signal must already be divided by the dataset's signal bound.
std::vector<double> sdon_forward(SDeepONet& model, const InputSignal& signal,
                                 const std::vector<std::array<double, 3>>& coords);

}  // namespace prior_refine::sdon
