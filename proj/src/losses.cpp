#include "stftcodec/losses.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <tuple>

#include "stftcodec/discriminators.hpp"
#include "stftcodec/errors.hpp"

namespace stftcodec {

namespace F = torch::nn::functional;

namespace {

constexpr double kMelLinearStep = 200.0 / 3.0;
constexpr double kMelLogStartHz = 1000.0;
constexpr double kMelLogStartMel = kMelLogStartHz / kMelLinearStep;
const double kMelLogStep = std::log(6.4) / 27.0;

}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMelLogStartHz) return hz / kMelLinearStep;
  return kMelLogStartMel + std::log(hz / kMelLogStartHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelLogStartMel) return mel * kMelLinearStep;
  return kMelLogStartHz * std::exp(kMelLogStep * (mel - kMelLogStartMel));
}

torch::Tensor mel_filterbank(int64_t sample_rate, int64_t n_fft, int64_t n_mels, torch::ScalarType dtype) {
  using Key = std::tuple<int64_t, int64_t, int64_t, torch::ScalarType>;
  static std::mutex mutex;
  static std::map<Key, torch::Tensor> cache;
  const Key key{sample_rate, n_fft, n_mels, dtype};
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }

  const int64_t bins = n_fft / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  std::vector<double> edges(static_cast<size_t>(n_mels + 2));
  const double top = hz_to_mel(nyquist);
  for (int64_t i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<size_t>(i)] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  auto fb = torch::zeros({n_mels, bins}, torch::kFloat64);
  auto acc = fb.accessor<double, 2>();
  for (int64_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (int64_t k = 0; k < bins; ++k) {
      const double f = nyquist * static_cast<double>(k) / static_cast<double>(bins - 1);
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      acc[m][k] = std::max(0.0, std::min(rising, falling)) * norm;
    }
  }
  fb = fb.to(dtype);
  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(key, fb);
  return fb;
}

std::vector<MelScale> default_mel_scales() { return {{2048, 512, 128}, {512, 128, 64}}; }

torch::Tensor mel_spectrogram(const torch::Tensor& audio, int64_t sample_rate, const MelScale& scale) {
  StftConfig cfg;
  cfg.fft_size = scale.win_length;
  cfg.win_length = scale.win_length;
  cfg.hop_length = scale.hop_length;
  cfg.sample_rate = sample_rate;
  auto spec = stft_analyze(audio, cfg);
  auto power = torch::real(spec).pow(2) + torch::imag(spec).pow(2);
  // Clamp keeps the sqrt gradient finite on exact silence.
  auto magnitude = torch::sqrt(torch::clamp_min(power, 1e-20));
  auto fb = mel_filterbank(sample_rate, scale.win_length, scale.n_mels, audio.scalar_type());
  return torch::matmul(fb, magnitude);
}

torch::Tensor mel_loss(const torch::Tensor& reference, const torch::Tensor& estimate, int64_t sample_rate,
                       const std::vector<MelScale>& scales) {
  if (reference.sizes() != estimate.sizes()) {
    throw InvalidArgument("mel_loss: length mismatch " + c10::str(reference.sizes()) + " vs " +
                          c10::str(estimate.sizes()));
  }
  if (scales.empty()) throw InvalidArgument("mel_loss: no scales");
  int64_t longest = 0;
  for (const auto& s : scales) longest = std::max(longest, s.win_length);
  auto x = reference, y = estimate;
  if (x.size(-1) < longest) {
    const int64_t extra = longest - x.size(-1);
    x = F::pad(x, F::PadFuncOptions({0, extra}));
    y = F::pad(y, F::PadFuncOptions({0, extra}));
  }
  auto total = torch::zeros({}, estimate.options());
  for (const auto& s : scales) {
    auto mx = mel_spectrogram(x, sample_rate, s);
    auto my = mel_spectrogram(y, sample_rate, s);
    total = total + (mx - my).abs().mean();
    total = total + (torch::log(torch::clamp_min(mx, kLogMelFloor)) -
                     torch::log(torch::clamp_min(my, kLogMelFloor)))
                        .abs()
                        .mean();
  }
  return total;
}

torch::Tensor lsgan_generator_loss(const std::vector<torch::Tensor>& fake_logits) {
  if (fake_logits.empty()) throw InvalidArgument("lsgan: no sub-discriminators");
  auto loss = torch::zeros({}, fake_logits.front().options());
  for (const auto& f : fake_logits) loss = loss + (f - 1.0).pow(2).mean();
  return loss;
}

torch::Tensor lsgan_discriminator_loss(const std::vector<torch::Tensor>& real_logits,
                                       const std::vector<torch::Tensor>& fake_logits) {
  if (real_logits.size() != fake_logits.size() || real_logits.empty()) {
    throw InvalidArgument("lsgan: sub-discriminator count mismatch (" + std::to_string(real_logits.size()) +
                          " vs " + std::to_string(fake_logits.size()) + ")");
  }
  auto loss = torch::zeros({}, real_logits.front().options());
  for (size_t i = 0; i < real_logits.size(); ++i) {
    loss = loss + (real_logits[i] - 1.0).pow(2).mean() + fake_logits[i].pow(2).mean();
  }
  return loss;
}

std::pair<torch::Tensor, torch::Tensor> lsgan_losses(const DiscriminatorOutput& real,
                                                     const DiscriminatorOutput& fake) {
  auto adv_d = lsgan_discriminator_loss(real.logits, fake.logits);
  return {lsgan_generator_loss(fake.logits), adv_d};
}

torch::Tensor feature_matching_loss(const std::vector<std::vector<torch::Tensor>>& real_features,
                                    const std::vector<std::vector<torch::Tensor>>& fake_features) {
  if (real_features.size() != fake_features.size() || real_features.empty()) {
    throw InvalidArgument("feature_matching: sub-discriminator count mismatch");
  }
  torch::Tensor total;
  int64_t layers = 0;
  for (size_t d = 0; d < real_features.size(); ++d) {
    if (real_features[d].size() != fake_features[d].size()) {
      throw InvalidArgument("feature_matching: layer count mismatch in sub-discriminator " + std::to_string(d));
    }
    for (size_t l = 0; l < real_features[d].size(); ++l) {
      const auto real = real_features[d][l].detach();
      const auto& fake = fake_features[d][l];
      if (real.sizes() != fake.sizes()) {
        throw InvalidArgument("feature_matching: shape mismatch " + c10::str(real.sizes()) + " vs " +
                              c10::str(fake.sizes()));
      }
      auto term = (real - fake).abs().mean() / torch::clamp_min(real.abs().mean(), 1e-8);
      total = total.defined() ? total + term : term;
      ++layers;
    }
  }
  if (layers == 0) throw InvalidArgument("feature_matching: no feature maps");
  return total / static_cast<double>(layers);
}

std::pair<torch::Tensor, torch::Tensor> vq_commit_losses(const torch::Tensor& latent,
                                                         const torch::Tensor& quantized) {
  if (latent.sizes() != quantized.sizes()) {
    throw InvalidArgument("vq_commit_losses: shape mismatch " + c10::str(latent.sizes()) + " vs " +
                          c10::str(quantized.sizes()));
  }
  auto vq = (latent.detach() - quantized).abs().mean();
  auto commit = (latent - quantized.detach()).abs().mean();
  return {vq, commit};
}

torch::Tensor spectral_recon_loss(const DecoderOutput& prediction, const SpectralFeatures& target, bool enabled) {
  if (!enabled) throw InvalidArgument("spectral_recon_loss: only available in the spectral-reconstruction ablation");
  if (prediction.log_magnitude.sizes() != target.log_magnitude.sizes() ||
      prediction.phase.sizes() != target.phase.sizes()) {
    throw InvalidArgument("spectral_recon_loss: shape mismatch");
  }
  auto magnitude_term = (prediction.log_magnitude - target.log_magnitude).pow(2).mean();
  auto phase_term = wrap_phase(prediction.phase - target.phase).abs().mean();
  return magnitude_term + phase_term;
}

void LossWeights::validate() const {
  if (!(lambda_mel >= 0.0) || !(lambda_feat >= 0.0) || !(lambda_commit >= 0.0)) {
    throw InvalidArgument("loss weights must be non-negative");
  }
}

LossReport total_losses(const LossParts& parts, const LossWeights& weights) {
  weights.validate();
  const std::pair<const char*, double> named[] = {
      {"mel", parts.mel},   {"adv_g", parts.adv_g}, {"adv_d", parts.adv_d},
      {"feat", parts.feat}, {"vq", parts.vq},       {"commit", parts.commit},
      {"spectral_recon", parts.spectral_recon.value_or(0.0)}};
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value)) throw NonFiniteLoss(name);
  }
  LossReport r;
  r.mel = parts.mel;
  r.adv_g = parts.adv_g;
  r.adv_d = parts.adv_d;
  r.feat = parts.feat;
  r.vq = parts.vq;
  r.commit = parts.commit;
  r.spectral_recon = parts.spectral_recon;
  r.total_g = weights.lambda_mel * parts.mel + weights.lambda_feat * parts.feat + parts.adv_g +
              weights.lambda_commit * parts.commit + parts.vq + parts.spectral_recon.value_or(0.0);
  r.total_d = parts.adv_d;
  return r;
}

torch::Tensor weighted_generator_total(const torch::Tensor& mel, const torch::Tensor& feat,
                                       const torch::Tensor& adv_g, const torch::Tensor& commit,
                                       const torch::Tensor& vq, const LossWeights& weights) {
  return weights.lambda_mel * mel + weights.lambda_feat * feat + adv_g + weights.lambda_commit * commit + vq;
}

void write_loss_csv_header(std::ostream& out) {
  out << "step,mel,adv_g,adv_d,feat,vq,commit,spectral_recon,total_g,total_d,lr\n";
}

void write_loss_csv_row(std::ostream& out, int64_t step, const LossReport& r, double learning_rate) {
  out << step << ',' << std::setprecision(9) << r.mel << ',' << r.adv_g << ',' << r.adv_d << ',' << r.feat
      << ',' << r.vq << ',' << r.commit << ',';
  if (r.spectral_recon) out << *r.spectral_recon;
  out << ',' << r.total_g << ',' << r.total_d << ',' << learning_rate << '\n';
}

}  // namespace stftcodec
