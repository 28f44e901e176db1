#include "stftcodec/discriminators.hpp"

#include <algorithm>
#include <cmath>

#include "stftcodec/errors.hpp"
#include "stftcodec/spectral.hpp"

namespace stftcodec {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void DiscriminatorOutput::append(DiscriminatorOutput other) {
  for (auto& l : other.logits) logits.push_back(std::move(l));
  for (auto& f : other.feature_maps) feature_maps.push_back(std::move(f));
}

DiscriminatorConfig DiscriminatorConfig::single_scale() const {
  DiscriminatorConfig c = *this;
  c.stft_sizes.resize(std::min<size_t>(1, c.stft_sizes.size()));
  return c;
}

DiscriminatorConfig DiscriminatorConfig::toy() {
  DiscriminatorConfig c;
  c.mpd_channels = {2, 8, 32, 64, 64};
  c.stft_filters = 4;
  return c;
}

void DiscriminatorConfig::validate() const {
  if (periods.empty() || stft_sizes.empty() || mpd_channels.empty() || stft_filters < 1) {
    throw InvalidArgument("discriminators: periods, channels and STFT sizes must be non-empty");
  }
  for (auto p : periods) {
    if (p < 1) throw InvalidArgument("discriminators: period must be positive");
  }
  for (auto n : stft_sizes) {
    if (n < 16 || n % 4 != 0) throw InvalidArgument("discriminators: STFT size must be a multiple of 4, >= 16");
  }
}

// ----------------------------------------------------------------------------

WNConv2dImpl::WNConv2dImpl(int64_t in, int64_t out, std::array<int64_t, 2> kernel, std::array<int64_t, 2> stride_,
                           std::array<int64_t, 2> padding_, std::array<int64_t, 2> dilation_)
    : stride(stride_), padding(padding_), dilation(dilation_) {
  // Same initialization as nn::Conv2d, then split into direction and gain.
  nn::Conv2d reference(nn::Conv2dOptions(in, out, {kernel[0], kernel[1]}));
  auto v = reference->weight.detach().clone();
  auto g = v.flatten(1).norm(2, 1).view({out, 1, 1, 1}).clone();
  weight_v = register_parameter("weight_v", v);
  weight_g = register_parameter("weight_g", g);
  bias = register_parameter("bias", reference->bias.detach().clone());
}

torch::Tensor WNConv2dImpl::forward(const torch::Tensor& x) {
  auto w = torch::_weight_norm(weight_v, weight_g, 0);
  return F::conv2d(x, w,
                   F::Conv2dFuncOptions()
                       .bias(bias)
                       .stride({stride[0], stride[1]})
                       .padding({padding[0], padding[1]})
                       .dilation({dilation[0], dilation[1]}));
}

// ----------------------------------------------------------------------------

namespace {
using Pair = std::array<int64_t, 2>;
WNConv2d make_wn(int64_t in, int64_t out, Pair kernel, Pair stride, Pair padding, Pair dilation = {1, 1}) {
  return WNConv2d(std::make_shared<WNConv2dImpl>(in, out, kernel, stride, padding, dilation));
}
}  // namespace

PeriodDiscriminatorImpl::PeriodDiscriminatorImpl(int64_t period_, const std::vector<int64_t>& channels)
    : period(period_) {
  convs = nn::ModuleList();
  int64_t in = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    const int64_t stride = i + 1 < channels.size() ? 3 : 1;
    convs->push_back(make_wn(in, channels[i], {5, 1}, {stride, 1}, {2, 0}));
    in = channels[i];
  }
  register_module("convs", convs);
  post = register_module("post", make_wn(in, 1, {3, 1}, {1, 1}, {1, 0}));
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> PeriodDiscriminatorImpl::forward(const torch::Tensor& audio) {
  const int64_t length = audio.size(-1);
  auto x = audio.reshape({-1, 1, length});
  if (length % period != 0) {
    const int64_t extra = period - length % period;
    x = F::pad(x, F::PadFuncOptions({0, extra}).mode(torch::kReflect));
  }
  x = x.view({x.size(0), 1, -1, period});
  std::vector<torch::Tensor> features;
  for (const auto& m : *convs) {
    x = F::leaky_relu(m->as<WNConv2dImpl>()->forward(x), F::LeakyReLUFuncOptions().negative_slope(0.1));
    features.push_back(x);
  }
  x = post(x);
  features.push_back(x);
  return {x.flatten(1), features};
}

MultiPeriodDiscriminatorImpl::MultiPeriodDiscriminatorImpl(const DiscriminatorConfig& cfg) : periods(cfg.periods) {
  discriminators = nn::ModuleList();
  for (auto p : periods) discriminators->push_back(PeriodDiscriminator(p, cfg.mpd_channels));
  register_module("discriminators", discriminators);
}

DiscriminatorOutput MultiPeriodDiscriminatorImpl::forward(const torch::Tensor& audio) {
  const int64_t longest = *std::max_element(periods.begin(), periods.end());
  if (audio.size(-1) <= longest) {
    throw InvalidArgument("mpd: audio of " + std::to_string(audio.size(-1)) +
                          " samples is shorter than the largest period " + std::to_string(longest));
  }
  DiscriminatorOutput out;
  for (const auto& m : *discriminators) {
    auto [logits, features] = m->as<PeriodDiscriminatorImpl>()->forward(audio);
    out.logits.push_back(logits);
    out.feature_maps.push_back(std::move(features));
  }
  return out;
}

// ----------------------------------------------------------------------------

StftDiscriminatorImpl::StftDiscriminatorImpl(int64_t fft_size_, int64_t filters) : fft_size(fft_size_) {
  convs = nn::ModuleList();
  convs->push_back(make_wn(2, filters, {3, 9}, {1, 1}, {1, 4}));
  for (int64_t d : {1, 2, 4}) convs->push_back(make_wn(filters, filters, {3, 9}, {1, 2}, {d, 4}, {d, 1}));
  convs->push_back(make_wn(filters, filters, {3, 3}, {1, 1}, {1, 1}));
  register_module("convs", convs);
  post = register_module("post", make_wn(filters, 1, {3, 3}, {1, 1}, {1, 1}));
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> StftDiscriminatorImpl::forward(const torch::Tensor& audio) {
  StftConfig cfg;
  cfg.fft_size = fft_size;
  cfg.win_length = fft_size;
  cfg.hop_length = fft_size / 4;
  auto spec = stft_analyze(audio.reshape({-1, audio.size(-1)}), cfg) / std::sqrt(static_cast<double>(fft_size));
  // [B, K, M] complex -> [B, 2, M, K]
  auto x = torch::stack({torch::real(spec), torch::imag(spec)}, 1).transpose(2, 3);
  std::vector<torch::Tensor> features;
  for (const auto& m : *convs) {
    x = F::leaky_relu(m->as<WNConv2dImpl>()->forward(x), F::LeakyReLUFuncOptions().negative_slope(0.2));
    features.push_back(x);
  }
  x = post(x);
  features.push_back(x);
  return {x.flatten(1), features};
}

MultiScaleStftDiscriminatorImpl::MultiScaleStftDiscriminatorImpl(const DiscriminatorConfig& cfg)
    : sizes(cfg.stft_sizes) {
  discriminators = nn::ModuleList();
  for (auto n : sizes) discriminators->push_back(StftDiscriminator(n, cfg.stft_filters));
  register_module("discriminators", discriminators);
}

DiscriminatorOutput MultiScaleStftDiscriminatorImpl::forward(const torch::Tensor& audio) {
  const int64_t longest = *std::max_element(sizes.begin(), sizes.end());
  if (audio.size(-1) < longest) {
    throw InvalidArgument("ms-stft: audio of " + std::to_string(audio.size(-1)) +
                          " samples is shorter than the largest FFT size " + std::to_string(longest));
  }
  DiscriminatorOutput out;
  for (const auto& m : *discriminators) {
    auto [logits, features] = m->as<StftDiscriminatorImpl>()->forward(audio);
    out.logits.push_back(logits);
    out.feature_maps.push_back(std::move(features));
  }
  return out;
}

DiscriminatorsImpl::DiscriminatorsImpl(DiscriminatorConfig cfg_) : cfg(std::move(cfg_)) {
  cfg.validate();
  mpd = register_module("mpd", MultiPeriodDiscriminator(cfg));
  msstft = register_module("msstft", MultiScaleStftDiscriminator(cfg));
}

DiscriminatorOutput DiscriminatorsImpl::forward(const torch::Tensor& audio) {
  auto out = mpd(audio);
  out.append(msstft(audio));
  return out;
}

}  // namespace stftcodec
