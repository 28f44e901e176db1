#include "stftcodec/spectral.hpp"

#include <cmath>
#include <vector>

#include "stftcodec/errors.hpp"

namespace stftcodec {

namespace F = torch::nn::functional;

std::string to_string(WindowType w) {
  switch (w) {
    case WindowType::kHann:
      return "hann";
  }
  return "unknown";
}

WindowType window_from_string(const std::string& name) {
  if (name == "hann") return WindowType::kHann;
  throw InvalidArgument("unknown window function '" + name + "'");
}

namespace {

std::vector<double> window_values(const StftConfig& cfg) {
  std::vector<double> w(static_cast<size_t>(cfg.win_length));
  for (int64_t n = 0; n < cfg.win_length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(n) / cfg.win_length);
  }
  return w;
}

// Collapses leading dims so tensors become [B, ...tail].
std::vector<int64_t> leading_dims(const torch::Tensor& t, int64_t tail) {
  auto sizes = t.sizes().vec();
  sizes.resize(sizes.size() - static_cast<size_t>(tail));
  return sizes;
}

}  // namespace

int64_t StftConfig::num_frames(int64_t num_samples) const {
  return (num_samples + hop_length - 1) / hop_length;
}

void StftConfig::validate() const {
  if (fft_size <= 0 || win_length <= 0 || hop_length <= 0 || sample_rate <= 0) {
    throw InvalidArgument("stft: fft_size, win_length, hop_length and sample_rate must be positive");
  }
  if (win_length > fft_size) {
    throw InvalidArgument("stft: win_length " + std::to_string(win_length) + " exceeds fft_size " +
                          std::to_string(fft_size));
  }
  if (hop_length > win_length) {
    throw InvalidArgument("stft: hop_length exceeds win_length");
  }
  if (!satisfies_cola(*this)) {
    throw InvalidArgument("stft: " + to_string(window) + " window of length " +
                          std::to_string(win_length) + " is not COLA at hop " +
                          std::to_string(hop_length));
  }
}

torch::Tensor StftConfig::window_tensor(torch::ScalarType dtype) const {
  return torch::hann_window(win_length, /*periodic=*/true, torch::TensorOptions().dtype(dtype));
}

bool satisfies_cola(const StftConfig& cfg, double rel_tol) {
  if (cfg.hop_length <= 0 || cfg.win_length <= 0) return false;
  const auto w = window_values(cfg);
  double lo = INFINITY, hi = -INFINITY;
  for (int64_t n = 0; n < cfg.hop_length; ++n) {
    double s = 0.0;
    for (int64_t i = n; i < cfg.win_length; i += cfg.hop_length) s += w[i];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return hi > 0.0 && (hi - lo) <= rel_tol * hi;
}

torch::Tensor stft_analyze(const torch::Tensor& audio, const StftConfig& cfg) {
  cfg.validate();
  if (audio.dim() < 1) throw InvalidArgument("stft_analyze: audio must have a time axis");
  const int64_t num_samples = audio.size(-1);
  if (num_samples < cfg.win_length) {
    throw InvalidArgument("stft_analyze: signal too short (" + std::to_string(num_samples) +
                          " samples < win_length " + std::to_string(cfg.win_length) + ")");
  }
  if (!torch::isfinite(audio).all().item<bool>()) {
    throw InvalidArgument("stft_analyze: audio contains non-finite samples");
  }

  auto lead = leading_dims(audio, 1);
  const int64_t pad = cfg.win_length / 2;
  auto x = audio.reshape({-1, 1, num_samples});
  x = F::pad(x, F::PadFuncOptions({pad, pad}).mode(torch::kReflect)).squeeze(1);

  const int64_t frames = cfg.num_frames(num_samples);
  auto framed = x.unfold(-1, cfg.win_length, cfg.hop_length).narrow(1, 0, frames);
  framed = framed * cfg.window_tensor(audio.scalar_type());
  auto spec = torch::fft::rfft(framed, cfg.fft_size, -1).transpose(1, 2);

  lead.push_back(cfg.num_bins());
  lead.push_back(frames);
  return spec.reshape(lead);
}

torch::Tensor phase_jump_counts(const torch::Tensor& phase) {
  auto opts = phase.options().dtype(torch::kLong);
  if (phase.size(-1) < 2) return torch::zeros(phase.sizes(), opts);
  auto d = torch::diff(phase, 1, -1);
  auto mag = d.abs();
  // Smallest integer count bringing |d + 2*pi*k| back into [-pi, pi).
  auto k = -torch::sign(d) * torch::floor((mag + kPi) / kTwoPi);
  k = torch::where(mag > kPi, k, torch::zeros_like(k));
  auto first = torch::zeros_like(phase.narrow(-1, 0, 1));
  return torch::cat({first, k.cumsum(-1)}, -1).to(torch::kLong);
}

torch::Tensor unwrap_phase_time(const torch::Tensor& phase) {
  auto counts = phase_jump_counts(phase.detach()).to(phase.scalar_type());
  return phase + kTwoPi * counts;
}

torch::Tensor phase_temporal_gradient(const torch::Tensor& unwrapped) {
  auto first = torch::zeros_like(unwrapped.narrow(-1, 0, 1));
  if (unwrapped.size(-1) < 2) return first.expand(unwrapped.sizes()).clone();
  return torch::cat({first, torch::diff(unwrapped, 1, -1)}, -1);
}

torch::Tensor wrap_phase(const torch::Tensor& angle) {
  return angle - kTwoPi * torch::ceil((angle - kPi) / kTwoPi).detach();
}

SpectralFeatures extract_features(const torch::Tensor& spec, double magnitude_floor) {
  if (!(magnitude_floor > 0.0)) {
    throw InvalidArgument("extract_features: magnitude_floor must be positive");
  }
  if (!spec.is_complex()) throw InvalidArgument("extract_features: expected a complex spectrogram");
  SpectralFeatures f;
  f.log_magnitude = torch::log(torch::clamp_min(spec.abs(), magnitude_floor));
  auto phi = torch::angle(spec);
  // angle() yields -pi for a negative real part with -0 imaginary part.
  f.phase = torch::where(phi <= -kPi, phi + kTwoPi, phi);
  f.phase_gradient = phase_temporal_gradient(unwrap_phase_time(f.phase));
  return f;
}

torch::Tensor istft(const torch::Tensor& spec, const StftConfig& cfg, int64_t out_length) {
  cfg.validate();
  if (spec.dim() < 2 || spec.size(-2) != cfg.num_bins()) {
    throw InvalidArgument("istft: expected " + std::to_string(cfg.num_bins()) +
                          " frequency bins, got shape " + c10::str(spec.sizes()));
  }
  if (out_length < 0) throw InvalidArgument("istft: negative out_length");
  const int64_t bins = spec.size(-2);
  const int64_t frames = spec.size(-1);
  auto lead = leading_dims(spec, 2);
  const auto real_type = c10::toRealValueType(spec.scalar_type());

  auto s = spec.reshape({-1, bins, frames}).transpose(1, 2);
  const int64_t batch = s.size(0);
  if (frames == 0) {
    lead.push_back(out_length);
    return torch::zeros(lead, spec.options().dtype(real_type));
  }
  auto window = cfg.window_tensor(real_type);
  auto framed = torch::fft::irfft(s, cfg.fft_size, -1).narrow(-1, 0, cfg.win_length) * window;

  const int64_t total = (frames - 1) * cfg.hop_length + cfg.win_length;
  auto fold = F::FoldFuncOptions({1, total}, {1, cfg.win_length}).stride({1, cfg.hop_length});
  auto y = F::fold(framed.transpose(1, 2), fold).reshape({batch, total});

  auto sq = (window * window).reshape({1, cfg.win_length, 1}).expand({1, cfg.win_length, frames});
  auto envelope = F::fold(sq, fold).reshape({1, total});
  auto valid = envelope > 1e-11;
  auto safe = torch::where(valid, envelope, torch::ones_like(envelope));
  y = y / safe * valid.to(real_type);

  const int64_t pad = cfg.win_length / 2;
  const int64_t available = std::max<int64_t>(0, std::min(total - pad, out_length));
  auto out = y.narrow(1, pad, available);
  if (available < out_length) out = F::pad(out, F::PadFuncOptions({0, out_length - available}));

  lead.push_back(out_length);
  return out.reshape(lead);
}

torch::Tensor istft_synthesize(const torch::Tensor& log_magnitude, const torch::Tensor& phase,
                               const StftConfig& cfg, int64_t out_length) {
  if (log_magnitude.sizes() != phase.sizes()) {
    throw InvalidArgument("istft_synthesize: magnitude shape " + c10::str(log_magnitude.sizes()) +
                          " != phase shape " + c10::str(phase.sizes()));
  }
  auto amplitude = torch::exp(log_magnitude);
  auto spec = torch::complex(amplitude * torch::cos(phase), amplitude * torch::sin(phase));
  return istft(spec, cfg, out_length);
}

}  // namespace stftcodec
