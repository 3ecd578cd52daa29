#pragma once

#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace prior_refine::diffusion {

struct UNetConfig {
    int in_channels = 2;
    int base_channels = 32;
    std::vector<int> channel_mult{1, 2, 2, 2};  ///< one entry per resolution; depth = size
    int attention_levels = 2;                   ///< coarsest levels that get attention
    int attention_heads = 4;
    int film_dim = 128;    ///< gamma(a) width
    int noise_dim = 128;   ///< noise-level embedding width
    int signal_length = 101;

    int depth() const { return static_cast<int>(channel_mult.size()); }
    void validate() const;
    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json& j);
};

/// Factored 3-D convolution: (1,3,3) over space, then (3,1,1) over time.
class Conv2Plus1dImpl : public torch::nn::Module {
public:
    Conv2Plus1dImpl(int in, int out);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv3d spatial{nullptr};
    torch::nn::Conv3d temporal{nullptr};
};
TORCH_MODULE(Conv2Plus1d);

/// Two-layer SiLU map from the input history to the code gamma(a).
class FilmEncoderImpl : public torch::nn::Module {
public:
    FilmEncoderImpl(int signal_length, int film_dim);
    torch::Tensor forward(const torch::Tensor& signals);

    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};
    int signal_length;
};
TORCH_MODULE(FilmEncoder);

/// features * (1 + scale) + shift, channel-wise; scale/shift are (B, C).
torch::Tensor film_modulate(const torch::Tensor& features, const torch::Tensor& scale, const torch::Tensor& shift);

/// GN -> SiLU -> conv -> + noise embedding -> GN -> FiLM -> SiLU -> conv, plus skip.
class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(int in, int out, int noise_dim, int film_dim);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& noise_emb, const torch::Tensor& code);

    /// Per-channel (scale, shift) for a batch of codes, each (B, out).
    std::pair<torch::Tensor, torch::Tensor> film_params(const torch::Tensor& code);

    torch::nn::GroupNorm norm1{nullptr};
    Conv2Plus1d conv1{nullptr};
    torch::nn::Linear noise_proj{nullptr};
    torch::nn::GroupNorm norm2{nullptr};
    torch::nn::Linear film_proj{nullptr};  ///< zero-initialized
    Conv2Plus1d conv2{nullptr};
    torch::nn::Conv3d skip{nullptr};
    int out_channels;
};
TORCH_MODULE(ResBlock);

/// Multi-head self-attention over space within each frame, then over time at
/// each pixel; both residual.
class FactorizedAttentionImpl : public torch::nn::Module {
public:
    FactorizedAttentionImpl(int channels, int heads);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::GroupNorm norm_s{nullptr};
    torch::nn::Linear qkv_s{nullptr};
    torch::nn::Linear out_s{nullptr};
    torch::nn::GroupNorm norm_t{nullptr};
    torch::nn::Linear qkv_t{nullptr};
    torch::nn::Linear out_t{nullptr};
    int heads;
};
TORCH_MODULE(FactorizedAttention);

/// Raw network F: (B, C_in, T, H, W) x c_noise (B) x gamma(a) (B, film_dim)
/// -> (B, 1, T, H, W). Spatial resolution halves per level; T is kept.
class VideoUNetImpl : public torch::nn::Module {
public:
    explicit VideoUNetImpl(const UNetConfig& config);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& c_noise, const torch::Tensor& code);

    /// Fourier features of c_noise followed by a SiLU MLP, (B, noise_dim).
    torch::Tensor embed_noise(const torch::Tensor& c_noise);

    UNetConfig config;
    torch::nn::Linear noise_fc1{nullptr};
    torch::nn::Linear noise_fc2{nullptr};
    Conv2Plus1d in_conv{nullptr};
    // per level, finest first; attention entries are null where absent
    std::vector<ResBlock> enc_blocks;
    std::vector<FactorizedAttention> enc_attn;
    std::vector<torch::nn::Conv3d> downs;
    ResBlock mid1{nullptr};
    FactorizedAttention mid_attn{nullptr};
    ResBlock mid2{nullptr};
    std::vector<ResBlock> dec_blocks;
    std::vector<FactorizedAttention> dec_attn;
    std::vector<Conv2Plus1d> ups;  ///< ups[i] maps level i to level i-1; ups[0] unused
    torch::nn::GroupNorm out_norm{nullptr};
    torch::nn::Conv3d out_conv{nullptr};  ///< zero-initialized
    torch::Tensor freqs;                  ///< buffer
};
TORCH_MODULE(VideoUNet);

}  // namespace prior_refine::diffusion
