#include "stftcodec/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "stftcodec/config.hpp"
#include "stftcodec/errors.hpp"
#include "stftcodec/metrics.hpp"
#include "stftcodec/wav.hpp"

namespace stftcodec {

namespace {
constexpr int64_t kCheckpointFormat = 1;

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

double scalar(const torch::Tensor& t) { return t.detach().item<double>(); }
}  // namespace

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull:
      return "full";
    case AblationVariant::kNoUnwrap:
      return "no_unwrap";
    case AblationVariant::kNoConvNeXt:
      return "no_convnext";
    case AblationVariant::kSingleScale:
      return "single_scale";
    case AblationVariant::kSpectralRecon:
      return "spectral_recon";
  }
  return "?";
}

AblationVariant ablation_variant_from_string(const std::string& name) {
  for (auto v : all_ablation_variants()) {
    if (to_string(v) == name) return v;
  }
  throw InvalidArgument("unknown ablation variant '" + name +
                        "' (expected full, no_unwrap, no_convnext, single_scale or spectral_recon)");
}

AblationFlags flags_for(AblationVariant v) {
  AblationFlags f;
  f.no_unwrap = v == AblationVariant::kNoUnwrap;
  f.no_convnext = v == AblationVariant::kNoConvNeXt;
  f.single_scale_disc = v == AblationVariant::kSingleScale;
  f.spectral_recon = v == AblationVariant::kSpectralRecon;
  return f;
}

std::vector<AblationVariant> all_ablation_variants() {
  return {AblationVariant::kFull, AblationVariant::kNoUnwrap, AblationVariant::kNoConvNeXt,
          AblationVariant::kSingleScale, AblationVariant::kSpectralRecon};
}

int64_t TrainConfig::default_chunk_samples(int64_t sample_rate) { return 15960 * sample_rate / 48000; }

void TrainConfig::validate(const StftConfig& stft) const {
  if (chunk_samples < stft.win_length) {
    throw InvalidArgument("train: chunk_samples must be at least one analysis window");
  }
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgument("train: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw InvalidArgument("train: betas must lie in [0, 1)");
  }
  if (weight_decay < 0.0) throw InvalidArgument("train: weight_decay must be >= 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InvalidArgument("train: lr_decay must lie in (0, 1]");
  if (max_steps < 0 || adversarial_start_step < 0) throw InvalidArgument("train: step counts must be >= 0");
  if (log_every < 1 || checkpoint_every < 1) throw InvalidArgument("train: log/checkpoint intervals must be >= 1");
}

double lr_schedule(int64_t epoch, double initial, double decay) {
  return initial * std::pow(decay, static_cast<double>(epoch));
}

AudioDataset::AudioDataset(std::vector<std::vector<float>> clips, int64_t sample_rate, int64_t chunk_samples,
                           uint64_t seed)
    : clips_(std::move(clips)), sample_rate_(sample_rate), chunk_samples_(chunk_samples), rng_(seed) {
  if (clips_.empty()) throw DataError("dataset: no audio clips");
  for (const auto& c : clips_) {
    if (c.empty()) throw DataError("dataset: empty audio clip");
  }
  if (chunk_samples_ < 1) throw InvalidArgument("dataset: chunk_samples must be positive");
}

AudioDataset AudioDataset::from_directory(const std::filesystem::path& dir, int64_t sample_rate,
                                          int64_t chunk_samples, uint64_t seed) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset: not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("dataset: no .wav files under " + dir.string());
  std::vector<std::vector<float>> clips;
  for (const auto& f : files) {
    auto wav = read_wav(f);
    if (wav.sample_rate != sample_rate) {
      throw DataError("dataset: " + f.string() + " is " + std::to_string(wav.sample_rate) + " Hz, expected " +
                      std::to_string(sample_rate));
    }
    clips.push_back(std::move(wav.samples));
  }
  return AudioDataset(std::move(clips), sample_rate, chunk_samples, seed);
}

AudioDataset::Crop AudioDataset::next_crop() {
  Crop c;
  c.file = std::uniform_int_distribution<size_t>(0, clips_.size() - 1)(rng_);
  const auto length = static_cast<int64_t>(clips_[c.file].size());
  if (length > chunk_samples_) c.start = std::uniform_int_distribution<int64_t>(0, length - chunk_samples_)(rng_);
  return c;
}

torch::Tensor AudioDataset::chunk(const Crop& crop) const {
  const auto& clip = clips_.at(crop.file);
  auto out = torch::zeros({chunk_samples_});
  const auto n = std::min<int64_t>(chunk_samples_, static_cast<int64_t>(clip.size()) - crop.start);
  if (n > 0) std::copy_n(clip.begin() + crop.start, n, out.data_ptr<float>());
  return out;
}

torch::Tensor AudioDataset::next_batch(int64_t batch) {
  std::vector<torch::Tensor> rows;
  for (int64_t i = 0; i < batch; ++i) rows.push_back(chunk(next_crop()));
  return torch::stack(rows);
}

std::string AudioDataset::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void AudioDataset::set_rng_state(const std::string& state) {
  std::istringstream is(state);
  is >> rng_;
  if (!is) throw DataError("dataset: invalid RNG state");
}

void apply_ablation(const AblationFlags& flags, ModelConfig& model, DiscriminatorConfig& disc,
                    LossWeights& weights) {
  if (flags.no_convnext) model.generator.use_convnext = false;
  if (flags.single_scale_disc) disc = disc.single_scale();
  if (flags.spectral_recon) weights.spectral_recon_enabled = true;
}

Trainer::Trainer(ModelConfig model_cfg, DiscriminatorConfig disc_cfg, LossWeights weights, TrainConfig cfg)
    : cfg_(std::move(cfg)), weights_(weights), utilization_(model_cfg.codebooks) {
  apply_ablation(cfg_.ablation, model_cfg, disc_cfg, weights_);
  model_cfg.validate();
  cfg_.validate(model_cfg.stft);
  weights_.validate();
  torch::manual_seed(cfg_.seed);
  model_ = CodecModel(model_cfg);
  disc_ = Discriminators(disc_cfg);
  auto options = [&] {
    return torch::optim::AdamWOptions(cfg_.lr)
        .betas({cfg_.beta1, cfg_.beta2})
        .weight_decay(cfg_.weight_decay);
  };
  opt_g_ = std::make_unique<torch::optim::AdamW>(model_->parameters(), options());
  opt_d_ = std::make_unique<torch::optim::AdamW>(disc_->parameters(), options());
}

ForwardOptions Trainer::forward_options() const {
  ForwardOptions o;
  o.zero_phase_gradient = cfg_.ablation.no_unwrap;
  return o;
}

std::vector<MelScale> Trainer::mel_scales() const {
  auto scales = default_mel_scales();
  if (cfg_.ablation.single_scale_disc) scales.resize(1);
  return scales;
}

double Trainer::current_lr() const {
  const int64_t epoch = cfg_.decay_per_step ? step_ : step_ / steps_per_epoch_;
  return lr_schedule(epoch, cfg_.lr, cfg_.lr_decay);
}

void Trainer::apply_learning_rate() {
  const double lr = current_lr();
  for (auto* opt : {opt_g_.get(), opt_d_.get()}) {
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }
}

double Trainer::discriminator_step(const torch::Tensor& batch) {
  if (!adversarial()) {
    last_adv_d_ = 0.0;
    return 0.0;
  }
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = model_->forward(batch, forward_options()).audio;
  }
  auto real_out = disc_->forward(batch);
  auto fake_out = disc_->forward(fake);
  auto loss = lsgan_discriminator_loss(real_out.logits, fake_out.logits);
  const double value = scalar(loss);
  if (!std::isfinite(value)) throw NonFiniteLoss("adv_d");
  opt_d_->zero_grad();
  loss.backward();
  opt_d_->step();
  last_adv_d_ = value;
  return value;
}

LossReport Trainer::generator_step(const torch::Tensor& batch) {
  const int64_t sr = model_->cfg.stft.sample_rate;
  auto r = model_->forward(batch, forward_options());
  auto mel = mel_loss(batch, r.audio, sr, mel_scales());
  auto zero = torch::zeros({}, mel.options());
  torch::Tensor adv_g = zero, feat = zero;
  if (adversarial()) {
    set_requires_grad(*disc_, false);
    DiscriminatorOutput real_out;
    {
      torch::NoGradGuard no_grad;
      real_out = disc_->forward(batch);
    }
    auto fake_out = disc_->forward(r.audio);
    adv_g = lsgan_generator_loss(fake_out.logits);
    feat = feature_matching_loss(real_out.feature_maps, fake_out.feature_maps);
  }
  auto total = weighted_generator_total(mel, feat, adv_g, r.quantized.commit_loss, r.quantized.vq_loss, weights_);

  LossParts parts;
  parts.mel = scalar(mel);
  parts.adv_g = scalar(adv_g);
  parts.adv_d = last_adv_d_;
  parts.feat = scalar(feat);
  parts.vq = scalar(r.quantized.vq_loss);
  parts.commit = scalar(r.quantized.commit_loss);
  if (weights_.spectral_recon_enabled) {
    auto recon = spectral_recon_loss(r.decoded, r.features, true);
    parts.spectral_recon = scalar(recon);
    total = total + recon;
  }
  LossReport report;
  try {
    report = total_losses(parts, weights_);
  } catch (...) {
    set_requires_grad(*disc_, true);
    throw;
  }
  opt_g_->zero_grad();
  total.backward();
  opt_g_->step();
  set_requires_grad(*disc_, true);
  utilization_.add(r.quantized.tokens);
  return report;
}

LossReport Trainer::train_step(const torch::Tensor& batch) {
  model_->train();
  disc_->train();
  discriminator_step(batch);
  auto report = generator_step(batch);
  ++step_;
  apply_learning_rate();
  return report;
}

LossReport Trainer::step(AudioDataset& data) { return train_step(data.next_batch(cfg_.batch_size)); }

void Trainer::save_checkpoint(const std::filesystem::path& path, const AudioDataset* data) {
  torch::serialize::OutputArchive archive;
  archive.write("format_version", c10::IValue(kCheckpointFormat));
  archive.write("model_config", c10::IValue(nlohmann::json(model_->cfg).dump()));
  archive.write("disc_config", c10::IValue(nlohmann::json(disc_->cfg).dump()));
  archive.write("loss_weights", c10::IValue(nlohmann::json(weights_).dump()));
  archive.write("train_config", c10::IValue(nlohmann::json(cfg_).dump()));
  archive.write("step", c10::IValue(step_));
  archive.write("steps_per_epoch", c10::IValue(steps_per_epoch_));
  archive.write("last_adv_d", c10::IValue(last_adv_d_));
  archive.write("torch_rng", at::detail::getDefaultCPUGenerator().get_state());
  if (data) archive.write("data_rng", c10::IValue(data->rng_state()));

  torch::serialize::OutputArchive model, disc, opt_g, opt_d;
  model_->save(model);
  disc_->save(disc);
  opt_g_->save(opt_g);
  opt_d_->save(opt_d);
  archive.write("model", model);
  archive.write("disc", disc);
  archive.write("opt_g", opt_g);
  archive.write("opt_d", opt_d);

  // Write-then-rename so an interrupted save never leaves a torn checkpoint.
  const auto tmp = path.string() + ".tmp";
  archive.save_to(tmp);
  std::filesystem::rename(tmp, path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path, AudioDataset* data) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue v;
  if (!archive.try_read("format_version", v) || v.toInt() != kCheckpointFormat) {
    throw DataError("checkpoint " + path.string() + ": unsupported format version");
  }
  archive.read("model_config", v);
  if (nlohmann::json::parse(v.toStringRef()).get<ModelConfig>() != model_->cfg) {
    throw DataError("checkpoint " + path.string() + ": model configuration differs from the trainer's");
  }
  if (!archive.try_read("disc_config", v) ||
      nlohmann::json::parse(v.toStringRef()).get<DiscriminatorConfig>() != disc_->cfg) {
    throw DataError("checkpoint " + path.string() + ": discriminator configuration differs or is missing");
  }
  archive.read("step", v);
  step_ = v.toInt();
  archive.read("steps_per_epoch", v);
  steps_per_epoch_ = v.toInt();
  archive.read("last_adv_d", v);
  last_adv_d_ = v.toDouble();

  torch::serialize::InputArchive model, disc, opt_g, opt_d;
  archive.read("model", model);
  archive.read("disc", disc);
  archive.read("opt_g", opt_g);
  archive.read("opt_d", opt_d);
  model_->load(model);
  disc_->load(disc);
  opt_g_->load(opt_g);
  opt_d_->load(opt_d);

  torch::Tensor rng;
  archive.read("torch_rng", rng);
  auto generator = at::detail::getDefaultCPUGenerator();
  generator.set_state(rng);
  if (data) {
    if (!archive.try_read("data_rng", v)) throw DataError("checkpoint has no data-loader state");
    data->set_rng_state(v.toStringRef());
  }
  apply_learning_rate();
}

std::vector<AblationReport> run_ablation(const std::vector<AblationVariant>& variants, const ModelConfig& model,
                                         const DiscriminatorConfig& disc, const LossWeights& weights,
                                         const TrainConfig& base, const AudioDataset& data, int64_t steps,
                                         const StepCallback& on_step) {
  std::vector<AblationReport> reports;
  for (auto variant : variants) {
    AblationReport report;
    report.variant = variant;
    TrainConfig cfg = base;
    cfg.ablation = flags_for(variant);
    Trainer trainer(model, disc, weights, cfg);
    AudioDataset stream = data;  // identical batch sequence for every variant
    try {
      for (int64_t s = 0; s < steps; ++s) {
        report.last_loss = trainer.step(stream);
        if (on_step) on_step(variant, trainer.step_count(), report.last_loss);
      }
    } catch (const NonFiniteLoss& e) {
      report.finite = false;
      report.note = e.what();
    }

    if (report.finite) {
      torch::NoGradGuard no_grad;
      auto& codec = trainer.model();
      codec->eval();
      double lsd_sum = 0.0, f1_sum = 0.0;
      size_t count = 0;
      for (const auto& clip : data.clips()) {
        if (static_cast<int64_t>(clip.size()) < model.stft.win_length) continue;
        auto x = torch::from_blob(const_cast<float*>(clip.data()), {static_cast<int64_t>(clip.size())}).clone();
        auto y = codec->forward(x, trainer.forward_options()).audio.contiguous();
        std::vector<float> est(y.data_ptr<float>(), y.data_ptr<float>() + y.numel());
        lsd_sum += lsd(x, y, data.sample_rate());
        f1_sum += vuv_f1(clip, est, data.sample_rate());
        ++count;
      }
      if (count > 0) {
        report.lsd = lsd_sum / static_cast<double>(count);
        report.vuv_f1 = f1_sum / static_cast<double>(count);
      }
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

void write_ablation_table(std::ostream& out, const std::vector<AblationReport>& rows) {
  out << "| variant | total_g | mel | lsd | vuv_f1 | note |\n"
      << "|---|---|---|---|---|---|\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << "| " << to_string(r.variant) << " | ";
    if (r.finite) {
      out << r.last_loss.total_g << " | " << r.last_loss.mel << " | " << r.lsd << " | " << r.vuv_f1 << " | ";
    } else {
      out << "nan | nan | - | - | ";
    }
    out << r.note << " |\n";
  }
  out << std::defaultfloat;
}

}  // namespace stftcodec
