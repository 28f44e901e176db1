#pragma once

// Dual-branch spectral encoder and phase-aware decoder.
//
// Tensors are channel-first: [B, C, frames].

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>

#include "stftcodec/spectral.hpp"

namespace stftcodec {

struct GeneratorConfig {
  int64_t freq_bins = 513;
  int64_t mag_channels = 256;
  int64_t phase_channels = 128;
  int64_t grad_channels = 128;
  int64_t latent_channels = 512;
  int64_t downsample_stages = 3;
  int64_t convnext_blocks_enc = 2;
  int64_t convnext_blocks_dec = 4;
  int64_t decoder_head_channels = 256;
  int64_t convnext_kernel = 7;
  int64_t convnext_expansion = 3;
  bool attention_encoder = true;
  bool attention_decoder = true;
  /// false swaps every ConvNeXt block for a residual block of the same width.
  bool use_convnext = true;

  int64_t downsample_factor() const { return int64_t{1} << downsample_stages; }
  int64_t latent_frames(int64_t frames) const {
    return (frames + downsample_factor() - 1) / downsample_factor();
  }
  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

struct LatentSequence {
  torch::Tensor values;  // [B, latent_channels, M']
  double frame_rate = 0.0;
};

struct DecoderOutput {
  torch::Tensor log_magnitude;  // [B, K, M]
  torch::Tensor real_part;
  torch::Tensor imag_part;
  torch::Tensor phase;          // atan2(imag, real)
};

/// Called with a tap name and tensor at fixed points of the forward pass.
using ProbeFn = std::function<void(const std::string&, const torch::Tensor&)>;

/// LayerNorm over the channel axis of a [B, C, T] tensor.
struct ChannelLayerNormImpl : torch::nn::Module {
  explicit ChannelLayerNormImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(ChannelLayerNorm);

/// Global response normalization on channel-last input [B, T, C]: per-channel
/// L2 norm over time, divided by its channel mean (+eps), with zero-initialized
/// gain and bias around an identity path.
struct GlobalResponseNormImpl : torch::nn::Module {
  explicit GlobalResponseNormImpl(int64_t channels, double eps = 1e-6);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor gamma, beta;
  double eps;
};
TORCH_MODULE(GlobalResponseNorm);

struct ConvNeXtBlockImpl : torch::nn::Module {
  ConvNeXtBlockImpl(int64_t channels, int64_t kernel, int64_t expansion);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv1d dwconv{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear pwconv1{nullptr}, pwconv2{nullptr};
  GlobalResponseNorm grn{nullptr};
};
TORCH_MODULE(ConvNeXtBlock);

/// Pre-activation residual block: x + conv(lrelu(conv(lrelu(x)))).
struct ResidualBlockImpl : torch::nn::Module {
  explicit ResidualBlockImpl(int64_t channels, int64_t kernel = 3);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv1d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Single-head self-attention over frames with a residual connection.
struct SelfAttentionImpl : torch::nn::Module {
  explicit SelfAttentionImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr}, out{nullptr};
};
TORCH_MODULE(SelfAttention);

/// Stack of ConvNeXt (or, for the ablation, residual) blocks.
torch::nn::Sequential make_feature_blocks(int64_t channels, int64_t count, const GeneratorConfig& cfg);

/// Embedding conv from frequency bins to `channels`, then feature blocks.
struct SpectralBranchImpl : torch::nn::Module {
  SpectralBranchImpl(int64_t in_bins, int64_t channels, const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv1d embed{nullptr};
  ChannelLayerNorm norm_in{nullptr}, norm_out{nullptr};
  torch::nn::Sequential blocks{nullptr};
};
TORCH_MODULE(SpectralBranch);

struct EncoderImpl : torch::nn::Module {
  explicit EncoderImpl(GeneratorConfig cfg);
  /// Inputs are [B, K, M]; returns [B, latent_channels, ceil(M / 8)].
  torch::Tensor forward(const torch::Tensor& log_magnitude, const torch::Tensor& phase,
                        const torch::Tensor& phase_gradient);
  void set_probe(ProbeFn probe) { probe_ = std::move(probe); }

  GeneratorConfig cfg;
  SpectralBranch magnitude{nullptr}, phase{nullptr}, gradient{nullptr};
  torch::nn::Sequential downsample{nullptr};

 private:
  ProbeFn probe_;
};
TORCH_MODULE(Encoder);

struct DecoderImpl : torch::nn::Module {
  explicit DecoderImpl(GeneratorConfig cfg);
  /// latent [B, latent_channels, M'] -> spectra with target_frames <= 8 * M' frames.
  DecoderOutput forward(const torch::Tensor& latent, int64_t target_frames);

  GeneratorConfig cfg;
  torch::nn::Sequential upsample{nullptr};
  torch::nn::Conv1d magnitude_in{nullptr}, phase_in{nullptr};
  torch::nn::Sequential magnitude_blocks{nullptr}, phase_blocks{nullptr};
  ChannelLayerNorm magnitude_norm_in{nullptr}, magnitude_norm_out{nullptr};
  ChannelLayerNorm phase_norm_in{nullptr}, phase_norm_out{nullptr};
  torch::nn::Conv1d magnitude_out{nullptr};
  torch::nn::Conv1d phase_linear{nullptr}, real_out{nullptr}, imag_out{nullptr};
};
TORCH_MODULE(Decoder);

/// Phase angle from predicted real/imaginary parts, in (-pi, pi].
torch::Tensor phase_from_components(const torch::Tensor& real_part, const torch::Tensor& imag_part);

}  // namespace stftcodec
