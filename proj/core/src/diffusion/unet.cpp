#include "prior_refine/diffusion/unet.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "prior_refine/error.hpp"

namespace prior_refine::diffusion {

namespace {

namespace F = torch::nn::functional;

torch::nn::GroupNorm group_norm(int channels) {
    return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::gcd(channels, 8), channels));
}

void zero_init(torch::nn::Linear& l) {
    torch::NoGradGuard g;
    l->weight.zero_();
    l->bias.zero_();
}

// x: (N, L, C) -> attention over L.
torch::Tensor self_attention(const torch::Tensor& x, torch::nn::Linear& qkv, torch::nn::Linear& out, int heads) {
    const auto n = x.size(0), len = x.size(1), c = x.size(2);
    const auto d = c / heads;
    auto parts = qkv->forward(x).view({n, len, 3, heads, d}).permute({2, 0, 3, 1, 4});  // (3, N, heads, L, d)
    const auto q = parts[0], k = parts[1], v = parts[2];
    const auto att = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d)), -1);
    const auto y = torch::matmul(att, v).permute({0, 2, 1, 3}).reshape({n, len, c});
    return out->forward(y);
}

}  // namespace

void UNetConfig::validate() const {
    require(in_channels >= 1 && in_channels <= 3, ErrorKind::configuration, "in_channels must be 1, 2 or 3");
    require(base_channels >= 1, ErrorKind::configuration, "base_channels must be positive");
    require(!channel_mult.empty(), ErrorKind::configuration, "channel_mult must not be empty");
    for (int m : channel_mult) require(m >= 1, ErrorKind::configuration, "channel_mult entries must be positive");
    require(attention_levels >= 0 && attention_levels <= depth(), ErrorKind::configuration,
            "attention_levels must lie in [0, depth]");
    require(attention_heads >= 1, ErrorKind::configuration, "attention_heads must be positive");
    for (int i = depth() - attention_levels; i < depth(); ++i) {
        require((base_channels * channel_mult[static_cast<std::size_t>(i)]) % attention_heads == 0,
                ErrorKind::configuration, "attention channels must be divisible by attention_heads");
    }
    require(film_dim >= 1 && noise_dim >= 2 && noise_dim % 2 == 0, ErrorKind::configuration,
            "film_dim must be positive and noise_dim even");
    require(signal_length >= 2, ErrorKind::configuration, "signal_length must be at least 2");
}

nlohmann::json UNetConfig::to_json() const {
    return {{"in_channels", in_channels},         {"base_channels", base_channels},
            {"channel_mult", channel_mult},       {"attention_levels", attention_levels},
            {"attention_heads", attention_heads}, {"film_dim", film_dim},
            {"noise_dim", noise_dim},             {"signal_length", signal_length}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_mult = j.value("channel_mult", c.channel_mult);
    c.attention_levels = j.value("attention_levels", c.attention_levels);
    c.attention_heads = j.value("attention_heads", c.attention_heads);
    c.film_dim = j.value("film_dim", c.film_dim);
    c.noise_dim = j.value("noise_dim", c.noise_dim);
    c.signal_length = j.value("signal_length", c.signal_length);
    c.validate();
    return c;
}

Conv2Plus1dImpl::Conv2Plus1dImpl(int in, int out) {
    spatial = register_module("spatial", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, {1, 3, 3}).padding({0, 1, 1})));
    temporal = register_module("temporal", torch::nn::Conv3d(torch::nn::Conv3dOptions(out, out, {3, 1, 1}).padding({1, 0, 0})));
}

torch::Tensor Conv2Plus1dImpl::forward(const torch::Tensor& x) { return temporal->forward(spatial->forward(x)); }

FilmEncoderImpl::FilmEncoderImpl(int length, int film_dim) : signal_length(length) {
    fc1 = register_module("fc1", torch::nn::Linear(length, film_dim));
    fc2 = register_module("fc2", torch::nn::Linear(film_dim, film_dim));
}

torch::Tensor FilmEncoderImpl::forward(const torch::Tensor& signals) {
    require(signals.dim() == 2 && signals.size(1) == signal_length, ErrorKind::invalid_argument,
            "signal length does not match the trained length");
    return fc2->forward(torch::silu(fc1->forward(signals)));
}

torch::Tensor film_modulate(const torch::Tensor& features, const torch::Tensor& scale, const torch::Tensor& shift) {
    require(scale.dim() == 2 && scale.size(1) == features.size(1) && shift.sizes() == scale.sizes(),
            ErrorKind::invalid_argument, "FiLM parameters must be (B, C) with C matching the features");
    const auto s = scale.view({scale.size(0), scale.size(1), 1, 1, 1});
    const auto b = shift.view({shift.size(0), shift.size(1), 1, 1, 1});
    return features * (1 + s) + b;
}

ResBlockImpl::ResBlockImpl(int in, int out, int noise_dim, int film_dim) : out_channels(out) {
    norm1 = register_module("norm1", group_norm(in));
    conv1 = register_module("conv1", Conv2Plus1d(in, out));
    noise_proj = register_module("noise_proj", torch::nn::Linear(noise_dim, out));
    norm2 = register_module("norm2", group_norm(out));
    film_proj = register_module("film_proj", torch::nn::Linear(film_dim, 2 * out));
    zero_init(film_proj);
    conv2 = register_module("conv2", Conv2Plus1d(out, out));
    if (in != out) skip = register_module("skip", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 1)));
}

std::pair<torch::Tensor, torch::Tensor> ResBlockImpl::film_params(const torch::Tensor& code) {
    auto p = film_proj->forward(code).chunk(2, 1);
    return {p[0], p[1]};
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& noise_emb, const torch::Tensor& code) {
    auto h = conv1->forward(torch::silu(norm1->forward(x)));
    h = h + noise_proj->forward(noise_emb).view({h.size(0), out_channels, 1, 1, 1});
    auto [scale, shift] = film_params(code);
    h = conv2->forward(torch::silu(film_modulate(norm2->forward(h), scale, shift)));
    return (skip ? skip->forward(x) : x) + h;
}

FactorizedAttentionImpl::FactorizedAttentionImpl(int channels, int h) : heads(h) {
    norm_s = register_module("norm_s", group_norm(channels));
    qkv_s = register_module("qkv_s", torch::nn::Linear(channels, 3 * channels));
    out_s = register_module("out_s", torch::nn::Linear(channels, channels));
    norm_t = register_module("norm_t", group_norm(channels));
    qkv_t = register_module("qkv_t", torch::nn::Linear(channels, 3 * channels));
    out_t = register_module("out_t", torch::nn::Linear(channels, channels));
}

torch::Tensor FactorizedAttentionImpl::forward(const torch::Tensor& x) {
    const auto b = x.size(0), c = x.size(1), t = x.size(2), hh = x.size(3), ww = x.size(4);
    // spatial: tokens are the H*W pixels of one frame
    auto s = norm_s->forward(x).permute({0, 2, 3, 4, 1}).reshape({b * t, hh * ww, c});
    s = self_attention(s, qkv_s, out_s, heads).view({b, t, hh, ww, c}).permute({0, 4, 1, 2, 3});
    auto y = x + s;
    // temporal: tokens are the T frames at one pixel
    auto m = norm_t->forward(y).permute({0, 3, 4, 2, 1}).reshape({b * hh * ww, t, c});
    m = self_attention(m, qkv_t, out_t, heads).view({b, hh, ww, t, c}).permute({0, 4, 3, 1, 2});
    return y + m;
}

VideoUNetImpl::VideoUNetImpl(const UNetConfig& cfg) : config(cfg) {
    config.validate();
    const int L = config.depth();
    const int nd = config.noise_dim;
    const int fd = config.film_dim;
    auto ch = [&](int level) { return config.base_channels * config.channel_mult[static_cast<std::size_t>(level)]; };
    auto has_attn = [&](int level) { return level >= L - config.attention_levels; };

    const int half = nd / 2;
    freqs = register_buffer("freqs", torch::exp(torch::arange(half, torch::kFloat32) * (-std::log(1000.0) / std::max(half - 1, 1))));
    noise_fc1 = register_module("noise_fc1", torch::nn::Linear(nd, nd));
    noise_fc2 = register_module("noise_fc2", torch::nn::Linear(nd, nd));
    in_conv = register_module("in_conv", Conv2Plus1d(config.in_channels, config.base_channels));

    int prev = config.base_channels;
    for (int i = 0; i < L; ++i) {
        const auto n = std::to_string(i);
        enc_blocks.push_back(register_module("enc" + n, ResBlock(prev, ch(i), nd, fd)));
        enc_attn.push_back(has_attn(i) ? register_module("enc_attn" + n, FactorizedAttention(ch(i), config.attention_heads))
                                       : FactorizedAttention(nullptr));
        if (i < L - 1) {
            downs.push_back(register_module(
                "down" + n,
                torch::nn::Conv3d(torch::nn::Conv3dOptions(ch(i), ch(i), {1, 3, 3}).stride({1, 2, 2}).padding({0, 1, 1}))));
        }
        prev = ch(i);
    }
    mid1 = register_module("mid1", ResBlock(prev, prev, nd, fd));
    mid_attn = register_module("mid_attn", FactorizedAttention(prev, config.attention_heads));
    mid2 = register_module("mid2", ResBlock(prev, prev, nd, fd));
    for (int i = 0; i < L; ++i) {
        const auto n = std::to_string(i);
        dec_blocks.push_back(register_module("dec" + n, ResBlock(2 * ch(i), ch(i), nd, fd)));
        dec_attn.push_back(has_attn(i) ? register_module("dec_attn" + n, FactorizedAttention(ch(i), config.attention_heads))
                                       : FactorizedAttention(nullptr));
        ups.push_back(i > 0 ? register_module("up" + n, Conv2Plus1d(ch(i), ch(i - 1))) : Conv2Plus1d(nullptr));
    }
    out_norm = register_module("out_norm", group_norm(config.base_channels));
    out_conv = register_module("out_conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(config.base_channels, 1, 3).padding(1)));
    torch::NoGradGuard g;
    out_conv->weight.zero_();
    out_conv->bias.zero_();
}

torch::Tensor VideoUNetImpl::embed_noise(const torch::Tensor& c_noise) {
    const auto arg = c_noise.view({-1, 1}) * freqs.to(c_noise.dtype()).view({1, -1});
    const auto feats = torch::cat({torch::cos(arg), torch::sin(arg)}, 1);
    return torch::silu(noise_fc2->forward(torch::silu(noise_fc1->forward(feats))));
}

torch::Tensor VideoUNetImpl::forward(const torch::Tensor& x, const torch::Tensor& c_noise, const torch::Tensor& code) {
    require(x.dim() == 5 && x.size(1) == config.in_channels, ErrorKind::invalid_argument,
            "network input must be (B, in_channels, T, H, W)");
    const int L = config.depth();
    const auto scale = 1 << (L - 1);
    require(x.size(3) % scale == 0 && x.size(4) % scale == 0, ErrorKind::invalid_argument,
            "spatial extent must be divisible by 2^(depth-1)");
    const auto emb = embed_noise(c_noise);

    auto h = in_conv->forward(x);
    std::vector<torch::Tensor> skips;
    for (int i = 0; i < L; ++i) {
        const auto u = static_cast<std::size_t>(i);
        h = enc_blocks[u]->forward(h, emb, code);
        if (enc_attn[u]) h = enc_attn[u]->forward(h);
        skips.push_back(h);
        if (i < L - 1) h = downs[u]->forward(h);
    }
    h = mid2->forward(mid_attn->forward(mid1->forward(h, emb, code)), emb, code);
    for (int i = L - 1; i >= 0; --i) {
        const auto u = static_cast<std::size_t>(i);
        h = dec_blocks[u]->forward(torch::cat({h, skips[u]}, 1), emb, code);
        if (dec_attn[u]) h = dec_attn[u]->forward(h);
        if (i > 0) {
            h = F::interpolate(h, F::InterpolateFuncOptions()
                                      .scale_factor(std::vector<double>{1.0, 2.0, 2.0})
                                      .mode(torch::kNearest));
            h = ups[u]->forward(h);
        }
    }
    return out_conv->forward(torch::silu(out_norm->forward(h)));
}

}  // namespace prior_refine::diffusion
