#pragma once

// Training objectives. Every loss returns a 0-dim tensor so it can be
// back-propagated; LossReport carries the detached scalars.

#include <torch/torch.h>

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "stftcodec/generator.hpp"
#include "stftcodec/spectral.hpp"

namespace stftcodec {

struct DiscriminatorOutput;

/// Slaney-style mel filterbank [n_mels, n_fft/2 + 1] spanning 0 Hz..Nyquist,
/// area-normalized per band.
torch::Tensor mel_filterbank(int64_t sample_rate, int64_t n_fft, int64_t n_mels,
                             torch::ScalarType dtype = torch::kFloat64);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelScale {
  int64_t win_length;
  int64_t hop_length;
  int64_t n_mels;
};

inline constexpr double kLogMelFloor = 1e-5;

std::vector<MelScale> default_mel_scales();  // (2048, 512, 128), (512, 128, 64)

/// Mel magnitude spectrogram [..., n_mels, frames]; FFT size equals the window.
torch::Tensor mel_spectrogram(const torch::Tensor& audio, int64_t sample_rate, const MelScale& scale);

/// Sum over scales of L1(mel) + L1(log mel). Inputs shorter than the largest
/// window are zero-padded to it.
torch::Tensor mel_loss(const torch::Tensor& reference, const torch::Tensor& estimate, int64_t sample_rate,
                       const std::vector<MelScale>& scales = default_mel_scales());

/// (adv_g, adv_d) summed over sub-discriminators.
std::pair<torch::Tensor, torch::Tensor> lsgan_losses(const DiscriminatorOutput& real,
                                                     const DiscriminatorOutput& fake);
torch::Tensor lsgan_generator_loss(const std::vector<torch::Tensor>& fake_logits);
torch::Tensor lsgan_discriminator_loss(const std::vector<torch::Tensor>& real_logits,
                                       const std::vector<torch::Tensor>& fake_logits);

/// Mean over sub-discriminators and layers of mean|real - fake| / mean|real|.
/// Real features are treated as constants.
torch::Tensor feature_matching_loss(const std::vector<std::vector<torch::Tensor>>& real_features,
                                    const std::vector<std::vector<torch::Tensor>>& fake_features);

/// (vq, commit): vq = L1(sg(latent), quantized) trains the codebooks,
/// commit = L1(latent, sg(quantized)) trains the encoder.
std::pair<torch::Tensor, torch::Tensor> vq_commit_losses(const torch::Tensor& latent,
                                                         const torch::Tensor& quantized);

/// Ablation-only: MSE on log-magnitude plus mean anti-wrapped phase distance.
/// Throws InvalidArgument unless `enabled`.
torch::Tensor spectral_recon_loss(const DecoderOutput& prediction, const SpectralFeatures& target, bool enabled);

struct LossWeights {
  double lambda_mel = 15.0;
  double lambda_feat = 2.0;
  double lambda_commit = 0.25;
  bool spectral_recon_enabled = false;
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct LossParts {
  double mel = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double feat = 0.0;
  double vq = 0.0;
  double commit = 0.0;
  std::optional<double> spectral_recon;
};

struct LossReport {
  double mel = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double feat = 0.0;
  double vq = 0.0;
  double commit = 0.0;
  std::optional<double> spectral_recon;
  double total_g = 0.0;
  double total_d = 0.0;

  bool operator==(const LossReport&) const = default;
};

/// Weighted generator total: lambda_mel*mel + lambda_feat*feat + adv_g +
/// lambda_commit*commit + vq (+ spectral_recon when present). Throws
/// NonFiniteLoss naming the first non-finite part.
LossReport total_losses(const LossParts& parts, const LossWeights& weights);

/// Same weighting applied to differentiable terms.
torch::Tensor weighted_generator_total(const torch::Tensor& mel, const torch::Tensor& feat,
                                       const torch::Tensor& adv_g, const torch::Tensor& commit,
                                       const torch::Tensor& vq, const LossWeights& weights);

/// CSV training log: step, each named loss, learning rate.
void write_loss_csv_header(std::ostream& out);
void write_loss_csv_row(std::ostream& out, int64_t step, const LossReport& report, double learning_rate);

}  // namespace stftcodec
