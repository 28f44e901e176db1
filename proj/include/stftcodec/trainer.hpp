#pragma once

// Data ingestion, alternating discriminator/generator optimization with
// AdamW, exponential learning-rate decay, checkpointing and the ablation
// driver.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "stftcodec/codec_model.hpp"
#include "stftcodec/discriminators.hpp"
#include "stftcodec/losses.hpp"
#include "stftcodec/quantizer.hpp"

namespace stftcodec {

struct AblationFlags {
  bool no_unwrap = false;          // zero the phase-gradient stream
  bool no_convnext = false;        // residual blocks instead of ConvNeXt
  bool single_scale_disc = false;  // one STFT discriminator resolution and one mel scale
  bool spectral_recon = false;     // add the explicit spectral reconstruction term
  bool operator==(const AblationFlags&) const = default;
};

enum class AblationVariant { kFull, kNoUnwrap, kNoConvNeXt, kSingleScale, kSpectralRecon };

std::string to_string(AblationVariant v);
AblationVariant ablation_variant_from_string(const std::string& name);
AblationFlags flags_for(AblationVariant v);
std::vector<AblationVariant> all_ablation_variants();

struct TrainConfig {
  int64_t chunk_samples = 15960;
  int64_t batch_size = 64;
  double lr = 5e-5;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double weight_decay = 1e-2;
  double lr_decay = 0.999;
  bool decay_per_step = false;  // default: decay once per pass over the file index
  int64_t max_steps = 100000;
  uint64_t seed = 0;
  int64_t adversarial_start_step = 0;  // adversarial terms are off before this step
  int64_t log_every = 100;
  int64_t checkpoint_every = 5000;
  AblationFlags ablation;

  /// Chunk size for a sample rate: 15,960 at 48 kHz, 7,980 at 24 kHz.
  static int64_t default_chunk_samples(int64_t sample_rate);
  void validate(const StftConfig& stft) const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr = initial * decay^epoch.
double lr_schedule(int64_t epoch, double initial = 5e-5, double decay = 0.999);

/// In-memory index of training clips; draws uniform-random files and crops.
class AudioDataset {
 public:
  AudioDataset(std::vector<std::vector<float>> clips, int64_t sample_rate, int64_t chunk_samples, uint64_t seed);

  /// Every *.wav under `dir` (sorted). Throws DataError on an empty directory
  /// or a sample-rate mismatch.
  static AudioDataset from_directory(const std::filesystem::path& dir, int64_t sample_rate,
                                     int64_t chunk_samples, uint64_t seed);

  struct Crop {
    size_t file = 0;
    int64_t start = 0;
  };
  Crop next_crop();
  /// [batch, chunk_samples]; clips shorter than a chunk are zero-padded.
  torch::Tensor next_batch(int64_t batch);
  torch::Tensor chunk(const Crop& crop) const;

  size_t num_files() const { return clips_.size(); }
  int64_t sample_rate() const { return sample_rate_; }
  const std::vector<std::vector<float>>& clips() const { return clips_; }

  std::string rng_state() const;
  void set_rng_state(const std::string& state);

 private:
  std::vector<std::vector<float>> clips_;
  int64_t sample_rate_;
  int64_t chunk_samples_;
  std::mt19937_64 rng_;
};

class Trainer {
 public:
  Trainer(ModelConfig model_cfg, DiscriminatorConfig disc_cfg, LossWeights weights, TrainConfig cfg);

  /// Discriminator update followed by generator update.
  LossReport train_step(const torch::Tensor& batch);
  /// Only the discriminator update; returns adv_d (0 while adversarial
  /// training is off).
  double discriminator_step(const torch::Tensor& batch);
  /// Only the generator update.
  LossReport generator_step(const torch::Tensor& batch);

  /// Draws a batch from `data`, runs train_step, and advances the schedule.
  LossReport step(AudioDataset& data);

  double current_lr() const;
  int64_t step_count() const { return step_; }
  void set_steps_per_epoch(int64_t n) { steps_per_epoch_ = std::max<int64_t>(1, n); }

  void save_checkpoint(const std::filesystem::path& path, const AudioDataset* data = nullptr);
  void load_checkpoint(const std::filesystem::path& path, AudioDataset* data = nullptr);

  CodecModel& model() { return model_; }
  Discriminators& discriminators() { return disc_; }
  UtilizationTracker& utilization() { return utilization_; }
  const ModelConfig& model_config() const { return model_->cfg; }
  const TrainConfig& config() const { return cfg_; }
  const LossWeights& weights() const { return weights_; }
  ForwardOptions forward_options() const;
  std::vector<MelScale> mel_scales() const;

 private:
  bool adversarial() const { return step_ >= cfg_.adversarial_start_step; }
  void apply_learning_rate();

  TrainConfig cfg_;
  LossWeights weights_;
  CodecModel model_{nullptr};
  Discriminators disc_{nullptr};
  std::unique_ptr<torch::optim::AdamW> opt_g_;
  std::unique_ptr<torch::optim::AdamW> opt_d_;
  UtilizationTracker utilization_;
  int64_t step_ = 0;
  int64_t steps_per_epoch_ = 1;
  double last_adv_d_ = 0.0;
};

/// Applies the ablation flags to the model/discriminator/loss configuration.
void apply_ablation(const AblationFlags& flags, ModelConfig& model, DiscriminatorConfig& disc, LossWeights& weights);

struct AblationReport {
  AblationVariant variant = AblationVariant::kFull;
  LossReport last_loss;
  bool finite = true;
  double lsd = 0.0;
  double vuv_f1 = 0.0;
  std::string note;
};

using StepCallback = std::function<void(AblationVariant, int64_t step, const LossReport&)>;

/// Trains each variant from scratch for `steps` on `data` and evaluates LSD and
/// V/UV F1 on the dataset clips.
std::vector<AblationReport> run_ablation(const std::vector<AblationVariant>& variants, const ModelConfig& model,
                                         const DiscriminatorConfig& disc, const LossWeights& weights,
                                         const TrainConfig& base, const AudioDataset& data, int64_t steps,
                                         const StepCallback& on_step = {});

void write_ablation_table(std::ostream& out, const std::vector<AblationReport>& rows);

}  // namespace stftcodec
