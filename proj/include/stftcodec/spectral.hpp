#pragma once

// Spectral front end: STFT analysis, magnitude/phase feature extraction with
// time-wise phase unwrapping, and inverse-STFT synthesis.
//
// Layout convention: spectrogram-like tensors are [..., K bins, M frames];
// audio is [..., T]. Every function accepts arbitrary leading (batch) dims and
// keeps the dtype of its input, so the same code runs in float32 for training
// and float64 for round-trip verification. All operations are differentiable.

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace stftcodec {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kDefaultMagnitudeFloor = 1e-7;

enum class WindowType { kHann };

std::string to_string(WindowType w);
WindowType window_from_string(const std::string& name);

struct StftConfig {
  int64_t fft_size = 1024;
  int64_t win_length = 320;
  int64_t hop_length = 40;
  WindowType window = WindowType::kHann;
  int64_t sample_rate = 48000;

  int64_t num_bins() const { return fft_size / 2 + 1; }
  /// Frame count for T samples under center padding: ceil(T / hop).
  int64_t num_frames(int64_t num_samples) const;

  /// Throws InvalidArgument on inconsistent sizes or a window/hop pair that
  /// is not constant-overlap-add.
  void validate() const;

  /// Periodic analysis window of win_length samples.
  torch::Tensor window_tensor(torch::ScalarType dtype = torch::kFloat32) const;

  bool operator==(const StftConfig&) const = default;
};

/// Sum of hop-shifted windows is constant to within `rel_tol`.
bool satisfies_cola(const StftConfig& cfg, double rel_tol = 1e-6);

struct SpectralFeatures {
  torch::Tensor log_magnitude;   // natural log of clamped |X|
  torch::Tensor phase;           // wrapped, (-pi, pi]
  torch::Tensor phase_gradient;  // radians/frame, column 0 is zero
};

/// Complex spectrogram [..., K, ceil(T/hop)] of real audio [..., T].
/// Frames are centered on multiples of hop after win_length/2 reflection
/// padding; each windowed frame is zero-padded to fft_size.
torch::Tensor stft_analyze(const torch::Tensor& audio, const StftConfig& cfg);

SpectralFeatures extract_features(const torch::Tensor& spec,
                                  double magnitude_floor = kDefaultMagnitudeFloor);

/// Unwraps along the frame axis (last dim). A jump is corrected only when
/// |delta| > pi; the first frame is left untouched.
torch::Tensor unwrap_phase_time(const torch::Tensor& phase);

/// Number of 2*pi corrections applied per entry by unwrap_phase_time, as an
/// int64 tensor. unwrap(phase) == phase + 2*pi*jump_counts(phase).
torch::Tensor phase_jump_counts(const torch::Tensor& phase);

/// First difference along frames with a zero first column.
torch::Tensor phase_temporal_gradient(const torch::Tensor& unwrapped);

/// Maps angles into (-pi, pi].
torch::Tensor wrap_phase(const torch::Tensor& angle);

/// Weighted overlap-add inverse of stft_analyze, normalized by the summed
/// squared window, cropped or zero-padded to out_length samples.
torch::Tensor istft(const torch::Tensor& spec, const StftConfig& cfg, int64_t out_length);

/// istft(exp(log_magnitude) * exp(j*phase)).
torch::Tensor istft_synthesize(const torch::Tensor& log_magnitude, const torch::Tensor& phase,
                               const StftConfig& cfg, int64_t out_length);

}  // namespace stftcodec
