#pragma once

// Slow, loop-based reference implementations used to check the tensor code.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

constexpr double kPi = 3.14159265358979323846;

using Matrix = std::vector<std::vector<double>>;  // [rows][cols]

inline double reflect_at(const std::vector<double>& x, int64_t i) {
  const auto n = static_cast<int64_t>(x.size());
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return x[static_cast<size_t>(i)];
}

/// Magnitude spectrogram [bins][frames]; window = fft size, centered frames,
/// periodic Hann, reflect padding of win/2.
inline Matrix magnitude(const std::vector<double>& x, int64_t win, int64_t hop) {
  const int64_t frames = (static_cast<int64_t>(x.size()) + hop - 1) / hop;
  const int64_t bins = win / 2 + 1;
  Matrix out(static_cast<size_t>(bins), std::vector<double>(static_cast<size_t>(frames)));
  std::vector<double> w(static_cast<size_t>(win));
  for (int64_t n = 0; n < win; ++n) w[n] = 0.5 - 0.5 * std::cos(2 * kPi * n / win);
  std::vector<double> frame(static_cast<size_t>(win));
  for (int64_t m = 0; m < frames; ++m) {
    for (int64_t n = 0; n < win; ++n) frame[n] = w[n] * reflect_at(x, m * hop + n - win / 2);
    for (int64_t k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int64_t n = 0; n < win; ++n) {
        const double a = -2 * kPi * static_cast<double>((k * n) % win) / win;
        re += frame[n] * std::cos(a);
        im += frame[n] * std::sin(a);
      }
      out[k][m] = std::sqrt(std::max(re * re + im * im, 1e-20));
    }
  }
  return out;
}

inline double slaney_mel(double hz) {
  const double f_sp = 200.0 / 3.0;
  if (hz < 1000.0) return hz / f_sp;
  return 1000.0 / f_sp + std::log(hz / 1000.0) / (std::log(6.4) / 27.0);
}

inline double slaney_hz(double mel) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_mel = 1000.0 / f_sp;
  if (mel < min_log_mel) return mel * f_sp;
  return 1000.0 * std::exp((std::log(6.4) / 27.0) * (mel - min_log_mel));
}

/// Triangular, area-normalized mel filterbank [n_mels][n_fft/2+1].
inline Matrix mel_filterbank(int64_t sr, int64_t n_fft, int64_t n_mels) {
  const int64_t bins = n_fft / 2 + 1;
  std::vector<double> mel_f(static_cast<size_t>(n_mels + 2));
  const double max_mel = slaney_mel(sr / 2.0);
  for (int64_t i = 0; i < n_mels + 2; ++i) mel_f[i] = slaney_hz(max_mel * i / (n_mels + 1));
  Matrix fb(static_cast<size_t>(n_mels), std::vector<double>(static_cast<size_t>(bins), 0.0));
  for (int64_t m = 0; m < n_mels; ++m) {
    const double fdiff_lo = mel_f[m + 1] - mel_f[m];
    const double fdiff_hi = mel_f[m + 2] - mel_f[m + 1];
    for (int64_t k = 0; k < bins; ++k) {
      const double freq = static_cast<double>(k) * sr / n_fft;
      const double lower = (freq - mel_f[m]) / fdiff_lo;
      const double upper = (mel_f[m + 2] - freq) / fdiff_hi;
      fb[m][k] = std::max(0.0, std::min(lower, upper)) * 2.0 / (mel_f[m + 2] - mel_f[m]);
    }
  }
  return fb;
}

inline Matrix mel_spectrogram(const std::vector<double>& x, int64_t sr, int64_t win, int64_t hop, int64_t n_mels) {
  const auto mag = magnitude(x, win, hop);
  const auto fb = mel_filterbank(sr, win, n_mels);
  const size_t frames = mag[0].size();
  Matrix out(static_cast<size_t>(n_mels), std::vector<double>(frames, 0.0));
  for (size_t m = 0; m < out.size(); ++m) {
    for (size_t t = 0; t < frames; ++t) {
      double s = 0.0;
      for (size_t k = 0; k < mag.size(); ++k) s += fb[m][k] * mag[k][t];
      out[m][t] = s;
    }
  }
  return out;
}

struct Scale {
  int64_t win, hop, n_mels;
};

inline double mel_loss(std::vector<double> x, std::vector<double> y, int64_t sr, const std::vector<Scale>& scales) {
  int64_t longest = 0;
  for (const auto& s : scales) longest = std::max(longest, s.win);
  if (static_cast<int64_t>(x.size()) < longest) {
    x.resize(static_cast<size_t>(longest), 0.0);
    y.resize(static_cast<size_t>(longest), 0.0);
  }
  double total = 0.0;
  for (const auto& s : scales) {
    const auto mx = mel_spectrogram(x, sr, s.win, s.hop, s.n_mels);
    const auto my = mel_spectrogram(y, sr, s.win, s.hop, s.n_mels);
    double lin = 0.0, lg = 0.0;
    size_t count = 0;
    for (size_t m = 0; m < mx.size(); ++m) {
      for (size_t t = 0; t < mx[m].size(); ++t) {
        lin += std::abs(mx[m][t] - my[m][t]);
        lg += std::abs(std::log(std::max(mx[m][t], 1e-5)) - std::log(std::max(my[m][t], 1e-5)));
        ++count;
      }
    }
    total += (lin + lg) / static_cast<double>(count);
  }
  return total;
}

/// Log-mel distance: mean over frames of the RMS over bands.
inline double lsd(const std::vector<double>& x, const std::vector<double>& y, int64_t sr) {
  const auto mx = mel_spectrogram(x, sr, 1024, 256, 80);
  const auto my = mel_spectrogram(y, sr, 1024, 256, 80);
  const size_t frames = mx[0].size();
  double total = 0.0;
  for (size_t t = 0; t < frames; ++t) {
    double s = 0.0;
    for (size_t m = 0; m < mx.size(); ++m) {
      const double d = std::log(std::max(mx[m][t], 1e-5)) - std::log(std::max(my[m][t], 1e-5));
      s += d * d;
    }
    total += std::sqrt(s / static_cast<double>(mx.size()));
  }
  return total / static_cast<double>(frames);
}

inline double mean_sq_dev(const std::vector<double>& v, double target) {
  double s = 0.0;
  for (double a : v) s += (a - target) * (a - target);
  return s / static_cast<double>(v.size());
}

/// (adv_g, adv_d) for lists of flattened logits.
inline std::pair<double, double> lsgan(const std::vector<std::vector<double>>& real,
                                       const std::vector<std::vector<double>>& fake) {
  double g = 0.0, d = 0.0;
  for (size_t i = 0; i < real.size(); ++i) {
    g += mean_sq_dev(fake[i], 1.0);
    d += mean_sq_dev(real[i], 1.0) + mean_sq_dev(fake[i], 0.0);
  }
  return {g, d};
}

/// Features as [sub-discriminator][layer][flattened values].
inline double feature_matching(const std::vector<std::vector<std::vector<double>>>& real,
                               const std::vector<std::vector<std::vector<double>>>& fake) {
  double total = 0.0;
  size_t layers = 0;
  for (size_t d = 0; d < real.size(); ++d) {
    for (size_t l = 0; l < real[d].size(); ++l) {
      double diff = 0.0, mag = 0.0;
      for (size_t i = 0; i < real[d][l].size(); ++i) {
        diff += std::abs(real[d][l][i] - fake[d][l][i]);
        mag += std::abs(real[d][l][i]);
      }
      const double n = static_cast<double>(real[d][l].size());
      total += (diff / n) / std::max(mag / n, 1e-8);
      ++layers;
    }
  }
  return total / static_cast<double>(layers);
}

}  // namespace oracle
