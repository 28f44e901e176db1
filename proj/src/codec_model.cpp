#include "stftcodec/codec_model.hpp"

#include <openssl/evp.h>

#include <memory>

#include "stftcodec/config.hpp"
#include "stftcodec/errors.hpp"

namespace stftcodec {

namespace {
constexpr int64_t kCheckpointFormat = 1;
}

ModelConfig ModelConfig::reference(int64_t sample_rate, int64_t hop_length) {
  ModelConfig c;
  c.stft.sample_rate = sample_rate;
  c.stft.hop_length = hop_length;
  return c;
}

ModelConfig ModelConfig::toy(int64_t sample_rate, int64_t codebook_size) {
  ModelConfig c = reference(sample_rate);
  c.generator.mag_channels = 64;
  c.generator.phase_channels = 32;
  c.generator.grad_channels = 32;
  c.generator.latent_channels = 128;
  c.generator.decoder_head_channels = 64;
  c.codebooks = CodebookSpec::uniform(8, codebook_size, c.generator.latent_channels);
  return c;
}

double ModelConfig::latent_frame_rate() const {
  return static_cast<double>(stft.sample_rate) /
         static_cast<double>(stft.hop_length * generator.downsample_factor());
}

void ModelConfig::validate() const {
  stft.validate();
  generator.validate();
  codebooks.validate();
  if (generator.freq_bins != stft.num_bins()) {
    throw InvalidArgument("model: generator.freq_bins " + std::to_string(generator.freq_bins) +
                          " != fft_size/2+1 = " + std::to_string(stft.num_bins()));
  }
  if (codebooks.input_dim != generator.latent_channels) {
    throw InvalidArgument("model: codebooks.input_dim must equal generator.latent_channels");
  }
}

CodecModelImpl::CodecModelImpl(ModelConfig cfg_) : cfg(std::move(cfg_)) {
  cfg.validate();
  encoder = register_module("encoder", Encoder(cfg.generator));
  quantizer = register_module("quantizer", ResidualVectorQuantizer(cfg.codebooks));
  decoder = register_module("decoder", Decoder(cfg.generator));
}

SpectralFeatures CodecModelImpl::analyze(const torch::Tensor& audio, bool zero_phase_gradient) const {
  torch::NoGradGuard no_grad;
  auto features = extract_features(stft_analyze(audio.detach(), cfg.stft));
  if (zero_phase_gradient) features.phase_gradient = torch::zeros_like(features.phase_gradient);
  return features;
}

LatentSequence CodecModelImpl::encode(const SpectralFeatures& features) {
  LatentSequence latent;
  latent.values = encoder(features.log_magnitude, features.phase, features.phase_gradient);
  latent.frame_rate = cfg.latent_frame_rate();
  return latent;
}

DecoderOutput CodecModelImpl::decode(const torch::Tensor& quantized, int64_t target_frames) {
  return decoder(quantized, target_frames);
}

torch::Tensor CodecModelImpl::synthesize(const DecoderOutput& decoded, int64_t num_samples) const {
  return istft_synthesize(torch::clamp_max(decoded.log_magnitude, kMaxLogMagnitude), decoded.phase, cfg.stft,
                          num_samples);
}

ForwardResult CodecModelImpl::forward(const torch::Tensor& audio, const ForwardOptions& options) {
  if (audio.dim() != 1 && audio.dim() != 2) {
    throw InvalidArgument("codec: expected audio [T] or [B, T], got " + c10::str(audio.sizes()));
  }
  auto batch = audio.dim() == 1 ? audio.unsqueeze(0) : audio;
  const int64_t samples = batch.size(-1);

  ForwardResult r;
  r.features = analyze(batch, options.zero_phase_gradient);
  r.latent = encode(r.features);
  r.quantized = quantizer(r.latent.values, options.num_codebooks);
  r.decoded = decode(r.quantized.quantized, r.features.log_magnitude.size(-1));
  r.audio = synthesize(r.decoded, samples);
  if (audio.dim() == 1) r.audio = r.audio.squeeze(0);
  return r;
}

torch::Tensor CodecModelImpl::encode_tokens(const torch::Tensor& audio, int64_t num_codebooks) {
  torch::NoGradGuard no_grad;
  auto batch = audio.dim() == 1 ? audio.unsqueeze(0) : audio;
  auto latent = encode(analyze(batch));
  return quantizer(latent.values, num_codebooks).tokens;
}

torch::Tensor CodecModelImpl::decode_tokens(const torch::Tensor& tokens, int64_t num_samples) {
  torch::NoGradGuard no_grad;
  auto quantized = quantizer->dequantize(tokens);
  const int64_t frames = cfg.stft.num_frames(num_samples);
  return synthesize(decode(quantized, frames), num_samples);
}

ModelHash CodecModelImpl::fingerprint() const {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  const std::string config = nlohmann::json(cfg).dump();
  EVP_DigestUpdate(ctx.get(), config.data(), config.size());
  auto feed = [&](const std::string& name, const torch::Tensor& t) {
    EVP_DigestUpdate(ctx.get(), name.data(), name.size());
    auto c = t.detach().to(torch::kCPU).contiguous();
    for (auto s : c.sizes()) EVP_DigestUpdate(ctx.get(), &s, sizeof(s));
    EVP_DigestUpdate(ctx.get(), c.data_ptr(), c.numel() * c.element_size());
  };
  for (const auto& p : named_parameters(true)) feed(p.key(), p.value());
  for (const auto& b : named_buffers(true)) feed(b.key(), b.value());
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &length);
  ModelHash hash{};
  std::copy_n(digest.begin(), hash.size(), hash.begin());
  return hash;
}

void save_codec_model(CodecModel& model, const std::filesystem::path& checkpoint) {
  torch::serialize::OutputArchive archive;
  archive.write("format_version", c10::IValue(kCheckpointFormat));
  archive.write("model_config", c10::IValue(nlohmann::json(model->cfg).dump()));
  torch::serialize::OutputArchive weights;
  model->save(weights);
  archive.write("model", weights);
  archive.save_to(checkpoint.string());
}

CodecModel load_codec_model(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(checkpoint.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + checkpoint.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue version, config;
  if (!archive.try_read("format_version", version) || version.toInt() != kCheckpointFormat) {
    throw DataError("checkpoint " + checkpoint.string() + ": unsupported format version");
  }
  if (!archive.try_read("model_config", config)) throw DataError("checkpoint is missing model_config");
  auto cfg = nlohmann::json::parse(config.toStringRef()).get<ModelConfig>();
  CodecModel model(cfg);
  torch::serialize::InputArchive weights;
  archive.read("model", weights);
  model->load(weights);
  model->eval();
  return model;
}

}  // namespace stftcodec
