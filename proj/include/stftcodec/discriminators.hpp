#pragma once

// Multi-period waveform discriminator and multi-resolution STFT
// discriminator, both built from weight-normalized 2-D convolutions.

#include <torch/torch.h>

#include <array>
#include <vector>

namespace stftcodec {

struct DiscriminatorOutput {
  std::vector<torch::Tensor> logits;                     // one per sub-discriminator
  std::vector<std::vector<torch::Tensor>> feature_maps;  // per sub-discriminator, per layer

  size_t size() const { return logits.size(); }
  void append(DiscriminatorOutput other);
};

struct DiscriminatorConfig {
  std::vector<int64_t> periods{2, 3, 5, 7, 11};
  std::vector<int64_t> mpd_channels{32, 128, 512, 1024, 1024};
  std::vector<int64_t> stft_sizes{2048, 1024, 512, 256, 128};
  int64_t stft_filters = 32;

  /// First STFT resolution only (single-scale ablation).
  DiscriminatorConfig single_scale() const;
  /// Same topology with narrow channels, paired with ModelConfig::toy().
  static DiscriminatorConfig toy();
  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

/// Conv2d whose weight is g * v / ||v|| (norm over all but the output dim).
struct WNConv2dImpl : torch::nn::Module {
  WNConv2dImpl(int64_t in, int64_t out, std::array<int64_t, 2> kernel, std::array<int64_t, 2> stride,
               std::array<int64_t, 2> padding, std::array<int64_t, 2> dilation = {1, 1});
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor weight_v, weight_g, bias;
  std::array<int64_t, 2> stride, padding, dilation;
};
TORCH_MODULE(WNConv2d);

struct PeriodDiscriminatorImpl : torch::nn::Module {
  PeriodDiscriminatorImpl(int64_t period, const std::vector<int64_t>& channels);
  /// audio [B, T] -> (logits, feature maps)
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& audio);
  int64_t period;
  torch::nn::ModuleList convs{nullptr};
  WNConv2d post{nullptr};
};
TORCH_MODULE(PeriodDiscriminator);

struct MultiPeriodDiscriminatorImpl : torch::nn::Module {
  explicit MultiPeriodDiscriminatorImpl(const DiscriminatorConfig& cfg);
  DiscriminatorOutput forward(const torch::Tensor& audio);
  std::vector<int64_t> periods;
  torch::nn::ModuleList discriminators{nullptr};
};
TORCH_MODULE(MultiPeriodDiscriminator);

struct StftDiscriminatorImpl : torch::nn::Module {
  StftDiscriminatorImpl(int64_t fft_size, int64_t filters);
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& audio);
  int64_t fft_size;
  torch::nn::ModuleList convs{nullptr};
  WNConv2d post{nullptr};
};
TORCH_MODULE(StftDiscriminator);

struct MultiScaleStftDiscriminatorImpl : torch::nn::Module {
  explicit MultiScaleStftDiscriminatorImpl(const DiscriminatorConfig& cfg);
  DiscriminatorOutput forward(const torch::Tensor& audio);
  std::vector<int64_t> sizes;
  torch::nn::ModuleList discriminators{nullptr};
};
TORCH_MODULE(MultiScaleStftDiscriminator);

/// MPD followed by MS-STFT; logits/features are concatenated in that order.
struct DiscriminatorsImpl : torch::nn::Module {
  explicit DiscriminatorsImpl(DiscriminatorConfig cfg);
  DiscriminatorOutput forward(const torch::Tensor& audio);
  DiscriminatorConfig cfg;
  MultiPeriodDiscriminator mpd{nullptr};
  MultiScaleStftDiscriminator msstft{nullptr};
};
TORCH_MODULE(Discriminators);

}  // namespace stftcodec
