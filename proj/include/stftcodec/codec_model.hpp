#pragma once

// End-to-end codec: STFT features -> encoder -> RVQ -> decoder -> iSTFT.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>

#include "stftcodec/generator.hpp"
#include "stftcodec/quantizer.hpp"
#include "stftcodec/spectral.hpp"

namespace stftcodec {

struct ModelConfig {
  StftConfig stft;
  GeneratorConfig generator;
  CodebookSpec codebooks;

  /// Full-size model: N=1024, win 320, hop 40 (or 80), 512-channel latent,
  /// 8 x 1024 codebooks.
  static ModelConfig reference(int64_t sample_rate = 48000, int64_t hop_length = 40);
  /// Narrow-channel variant with the same topology, for desk-scale training runs.
  static ModelConfig toy(int64_t sample_rate = 48000, int64_t codebook_size = 64);

  /// Latent frames per second: sample_rate / (hop * 2^stages).
  double latent_frame_rate() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ForwardOptions {
  /// Feed zeros in place of the phase-gradient stream (no-unwrap ablation).
  bool zero_phase_gradient = false;
  /// Use only the first n RVQ stages; < 0 means all.
  int64_t num_codebooks = -1;
};

struct ForwardResult {
  torch::Tensor audio;  // same shape as the input
  SpectralFeatures features;
  LatentSequence latent;
  QuantizeResult quantized;
  DecoderOutput decoded;
};

using ModelHash = std::array<uint8_t, 16>;

struct CodecModelImpl : torch::nn::Module {
  explicit CodecModelImpl(ModelConfig cfg);

  /// audio [T] or [B, T].
  ForwardResult forward(const torch::Tensor& audio, const ForwardOptions& options = {});

  /// Encoder input features (never carries gradient).
  SpectralFeatures analyze(const torch::Tensor& audio, bool zero_phase_gradient = false) const;
  LatentSequence encode(const SpectralFeatures& features);
  DecoderOutput decode(const torch::Tensor& quantized, int64_t target_frames);
  torch::Tensor synthesize(const DecoderOutput& decoded, int64_t num_samples) const;

  /// Inference helpers used by the file codec. tokens: [B, n_q, M'].
  torch::Tensor encode_tokens(const torch::Tensor& audio, int64_t num_codebooks = -1);
  torch::Tensor decode_tokens(const torch::Tensor& tokens, int64_t num_samples);

  /// Truncated SHA-256 over the config and every parameter and buffer.
  ModelHash fingerprint() const;

  ModelConfig cfg;
  Encoder encoder{nullptr};
  ResidualVectorQuantizer quantizer{nullptr};
  Decoder decoder{nullptr};
};
TORCH_MODULE(CodecModel);

/// Largest log-magnitude passed to exp() during synthesis.
inline constexpr double kMaxLogMagnitude = 10.0;

/// Loads only the codec (generator + quantizer) from a training checkpoint.
CodecModel load_codec_model(const std::filesystem::path& checkpoint);
/// Writes a checkpoint holding just the codec and its config.
void save_codec_model(CodecModel& model, const std::filesystem::path& checkpoint);

}  // namespace stftcodec
