#pragma once

// Objective evaluation: log-mel spectral distance, voiced/unvoiced F1, and
// adapters for external perceptual-metric executables.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace stftcodec {

struct LsdConfig {
  int64_t win_length = 1024;
  int64_t hop_length = 256;
  int64_t n_mels = 80;
  double floor = 1e-5;
};

/// Mean over frames of the RMS (over mel bands) of the natural-log mel
/// spectrogram difference. Inputs are 1-D or [B, T] with equal shapes.
double lsd(const torch::Tensor& reference, const torch::Tensor& estimate, int64_t sample_rate,
           const LsdConfig& cfg = {});

struct VoicingConfig {
  double frame_ms = 10.0;
  double window_ms = 40.0;
  double min_f0 = 60.0;
  double max_f0 = 400.0;
  double threshold = 0.3;
  /// Frames quieter than this (dB relative to the loudest frame) are unvoiced.
  double energy_gate_db = -40.0;
};

/// Per-frame voicing from the normalized-autocorrelation peak over the
/// pitch-lag range.
std::vector<bool> voicing_decisions(const std::vector<float>& audio, int64_t sample_rate,
                                    const VoicingConfig& cfg = {});

/// F1 of `hypothesis` against `reference` with voiced as the positive class;
/// 1.0 when neither has a voiced frame.
double f1_score(const std::vector<bool>& reference, const std::vector<bool>& hypothesis);

double vuv_f1(const std::vector<float>& reference, const std::vector<float>& estimate, int64_t sample_rate,
              const VoicingConfig& cfg = {});

struct ExternalMetricResult {
  std::optional<double> value;  // empty means "unavailable"
  std::string tool_version;
  std::string diagnostic;
  bool available() const { return value.has_value(); }
};

/// Runs `tool_path reference.wav estimate.wav` and parses the last number it
/// prints. A missing or failing tool yields an unavailable result.
ExternalMetricResult external_metric(const std::string& name, const std::vector<float>& reference,
                                     const std::vector<float>& estimate, int64_t sample_rate,
                                     const std::filesystem::path& tool_path);

struct EvalRow {
  std::string file;
  double lsd = 0.0;
  double vuv_f1 = 0.0;
  double bitrate = 0.0;
  std::map<std::string, ExternalMetricResult> external;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  double mean_lsd() const;
  double mean_vuv_f1() const;
  void write_csv(std::ostream& out) const;
  void write_summary(std::ostream& out) const;
};

}  // namespace stftcodec
