#include "stftcodec/generator.hpp"

#include <cmath>

#include "stftcodec/errors.hpp"

namespace stftcodec {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void GeneratorConfig::validate() const {
  if (mag_channels + phase_channels + grad_channels != latent_channels) {
    throw InvalidArgument("generator: mag_channels + phase_channels + grad_channels (" +
                          std::to_string(mag_channels + phase_channels + grad_channels) +
                          ") must equal latent_channels (" + std::to_string(latent_channels) + ")");
  }
  if (downsample_stages < 1 || downsample_stages > 6) {
    throw InvalidArgument("generator: downsample_stages out of range");
  }
  if (freq_bins <= 0 || decoder_head_channels <= 0 || convnext_kernel % 2 == 0 ||
      convnext_expansion <= 0 || convnext_blocks_enc < 0 || convnext_blocks_dec < 0) {
    throw InvalidArgument("generator: invalid layer sizes");
  }
}

// ----------------------------------------------------------------------------

ChannelLayerNormImpl::ChannelLayerNormImpl(int64_t channels)
    : norm(register_module("norm", nn::LayerNorm(nn::LayerNormOptions({channels})))) {}

torch::Tensor ChannelLayerNormImpl::forward(const torch::Tensor& x) {
  return norm(x.transpose(1, 2)).transpose(1, 2);
}

GlobalResponseNormImpl::GlobalResponseNormImpl(int64_t channels, double eps_)
    : gamma(register_parameter("gamma", torch::zeros({1, 1, channels}))),
      beta(register_parameter("beta", torch::zeros({1, 1, channels}))),
      eps(eps_) {}

torch::Tensor GlobalResponseNormImpl::forward(const torch::Tensor& x) {
  auto gx = torch::sqrt(x.pow(2).sum(1, /*keepdim=*/true));
  auto nx = gx / (gx.mean(-1, /*keepdim=*/true) + eps);
  return gamma * (x * nx) + beta + x;
}

ConvNeXtBlockImpl::ConvNeXtBlockImpl(int64_t channels, int64_t kernel, int64_t expansion) {
  dwconv = register_module(
      "dwconv", nn::Conv1d(nn::Conv1dOptions(channels, channels, kernel).padding(kernel / 2).groups(channels)));
  norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({channels})));
  pwconv1 = register_module("pwconv1", nn::Linear(channels, expansion * channels));
  grn = register_module("grn", GlobalResponseNorm(expansion * channels));
  pwconv2 = register_module("pwconv2", nn::Linear(expansion * channels, channels));
}

torch::Tensor ConvNeXtBlockImpl::forward(const torch::Tensor& x) {
  auto h = dwconv(x).transpose(1, 2);  // [B, T, C]
  h = norm(h);
  h = torch::gelu(pwconv1(h));
  h = grn(h);
  h = pwconv2(h).transpose(1, 2);
  return x + h;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels, int64_t kernel) {
  conv1 = register_module("conv1", nn::Conv1d(nn::Conv1dOptions(channels, channels, kernel).padding(kernel / 2)));
  conv2 = register_module("conv2", nn::Conv1d(nn::Conv1dOptions(channels, channels, kernel).padding(kernel / 2)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1(F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.1)));
  h = conv2(F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.1)));
  return x + h;
}

SelfAttentionImpl::SelfAttentionImpl(int64_t channels) {
  norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({channels})));
  query = register_module("query", nn::Linear(channels, channels));
  key = register_module("key", nn::Linear(channels, channels));
  value = register_module("value", nn::Linear(channels, channels));
  out = register_module("out", nn::Linear(channels, channels));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
  auto h = norm(x.transpose(1, 2));  // [B, T, C]
  auto q = query(h), k = key(h), v = value(h);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h.size(-1)));
  auto attn = torch::softmax(torch::matmul(q, k.transpose(1, 2)) * scale, -1);
  return x + out(torch::matmul(attn, v)).transpose(1, 2);
}

nn::Sequential make_feature_blocks(int64_t channels, int64_t count, const GeneratorConfig& cfg) {
  nn::Sequential seq;
  for (int64_t i = 0; i < count; ++i) {
    if (cfg.use_convnext) {
      seq->push_back(ConvNeXtBlock(channels, cfg.convnext_kernel, cfg.convnext_expansion));
    } else {
      seq->push_back(ResidualBlock(channels, cfg.convnext_kernel));
    }
  }
  return seq;
}

SpectralBranchImpl::SpectralBranchImpl(int64_t in_bins, int64_t channels, const GeneratorConfig& cfg) {
  embed = register_module("embed", nn::Conv1d(nn::Conv1dOptions(in_bins, channels, 7).padding(3)));
  norm_in = register_module("norm_in", ChannelLayerNorm(channels));
  blocks = register_module("blocks", make_feature_blocks(channels, cfg.convnext_blocks_enc, cfg));
  norm_out = register_module("norm_out", ChannelLayerNorm(channels));
}

torch::Tensor SpectralBranchImpl::forward(const torch::Tensor& x) {
  auto h = norm_in(embed(x));
  if (!blocks->is_empty()) h = blocks->forward(h);
  return norm_out(h);
}

// ----------------------------------------------------------------------------

EncoderImpl::EncoderImpl(GeneratorConfig cfg_) : cfg(std::move(cfg_)) {
  cfg.validate();
  magnitude = register_module("magnitude", SpectralBranch(cfg.freq_bins, cfg.mag_channels, cfg));
  phase = register_module("phase", SpectralBranch(cfg.freq_bins, cfg.phase_channels, cfg));
  gradient = register_module("gradient", SpectralBranch(cfg.freq_bins, cfg.grad_channels, cfg));
  const int64_t c = cfg.latent_channels;
  downsample = nn::Sequential();
  for (int64_t s = 0; s < cfg.downsample_stages; ++s) {
    downsample->push_back(ResidualBlock(c));
    downsample->push_back(nn::Conv1d(nn::Conv1dOptions(c, c, 4).stride(2).padding(1)));
    if (cfg.attention_encoder) downsample->push_back(SelfAttention(c));
  }
  register_module("downsample", downsample);
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& log_magnitude, const torch::Tensor& phase_in,
                                   const torch::Tensor& phase_gradient) {
  if (log_magnitude.dim() != 3 || log_magnitude.size(1) != cfg.freq_bins) {
    throw InvalidArgument("encoder: expected [B, " + std::to_string(cfg.freq_bins) +
                          ", M] features, got " + c10::str(log_magnitude.sizes()));
  }
  if (phase_in.sizes() != log_magnitude.sizes() || phase_gradient.sizes() != log_magnitude.sizes()) {
    throw InvalidArgument("encoder: feature streams differ in shape");
  }
  auto h = torch::cat({magnitude(log_magnitude), phase(phase_in), gradient(phase_gradient)}, 1);
  if (probe_) probe_("concat", h);

  const int64_t frames = h.size(-1);
  const int64_t target = cfg.latent_frames(frames) * cfg.downsample_factor();
  if (target > frames) {
    h = F::pad(h, F::PadFuncOptions({0, target - frames}).mode(torch::kReplicate));
  }
  return downsample->forward(h);
}

DecoderImpl::DecoderImpl(GeneratorConfig cfg_) : cfg(std::move(cfg_)) {
  cfg.validate();
  const int64_t c = cfg.latent_channels;
  const int64_t head = cfg.decoder_head_channels;
  upsample = nn::Sequential();
  for (int64_t s = 0; s < cfg.downsample_stages; ++s) {
    upsample->push_back(ResidualBlock(c));
    upsample->push_back(nn::ConvTranspose1d(nn::ConvTranspose1dOptions(c, c, 4).stride(2).padding(1)));
    if (cfg.attention_decoder) upsample->push_back(SelfAttention(c));
  }
  register_module("upsample", upsample);

  magnitude_in = register_module("magnitude_in", nn::Conv1d(nn::Conv1dOptions(c, head, 7).padding(3)));
  magnitude_norm_in = register_module("magnitude_norm_in", ChannelLayerNorm(head));
  magnitude_blocks = register_module("magnitude_blocks", make_feature_blocks(head, cfg.convnext_blocks_dec, cfg));
  magnitude_norm_out = register_module("magnitude_norm_out", ChannelLayerNorm(head));
  magnitude_out = register_module("magnitude_out", nn::Conv1d(nn::Conv1dOptions(head, cfg.freq_bins, 1)));

  phase_in = register_module("phase_in", nn::Conv1d(nn::Conv1dOptions(c, head, 7).padding(3)));
  phase_norm_in = register_module("phase_norm_in", ChannelLayerNorm(head));
  phase_blocks = register_module("phase_blocks", make_feature_blocks(head, cfg.convnext_blocks_dec, cfg));
  phase_norm_out = register_module("phase_norm_out", ChannelLayerNorm(head));
  phase_linear = register_module("phase_linear", nn::Conv1d(nn::Conv1dOptions(head, head, 1)));
  real_out = register_module("real_out", nn::Conv1d(nn::Conv1dOptions(head, cfg.freq_bins, 1)));
  imag_out = register_module("imag_out", nn::Conv1d(nn::Conv1dOptions(head, cfg.freq_bins, 1)));
}

DecoderOutput DecoderImpl::forward(const torch::Tensor& latent, int64_t target_frames) {
  if (latent.dim() != 3 || latent.size(1) != cfg.latent_channels) {
    throw InvalidArgument("decoder: expected [B, " + std::to_string(cfg.latent_channels) +
                          ", M'] latent, got " + c10::str(latent.sizes()));
  }
  const int64_t capacity = latent.size(-1) * cfg.downsample_factor();
  if (target_frames < 0 || target_frames > capacity) {
    throw InvalidArgument("decoder: target_frames " + std::to_string(target_frames) +
                          " exceeds upsampled length " + std::to_string(capacity));
  }
  auto h = upsample->forward(latent).narrow(-1, 0, target_frames);

  auto mag = magnitude_norm_in(magnitude_in(h));
  if (!magnitude_blocks->is_empty()) mag = magnitude_blocks->forward(mag);
  mag = magnitude_norm_out(mag);

  auto ph = phase_norm_in(phase_in(h));
  if (!phase_blocks->is_empty()) ph = phase_blocks->forward(ph);
  ph = phase_linear(phase_norm_out(ph));

  DecoderOutput out;
  out.log_magnitude = magnitude_out(mag);
  out.real_part = real_out(ph);
  out.imag_part = imag_out(ph);
  out.phase = phase_from_components(out.real_part, out.imag_part);
  return out;
}

torch::Tensor phase_from_components(const torch::Tensor& real_part, const torch::Tensor& imag_part) {
  auto phi = torch::atan2(imag_part, real_part);
  // atan2(-0, x<0) yields -pi; fold it onto +pi.
  return torch::where(phi <= -kPi, phi + kTwoPi, phi);
}

}  // namespace stftcodec
