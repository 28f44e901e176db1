#pragma once

#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stftcodec/spectral.hpp"

namespace testutil {

inline std::vector<float> tone(int64_t n, double freq, int64_t sr = 48000, double amp = 0.5) {
  std::vector<float> x(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) x[i] = static_cast<float>(amp * std::sin(stftcodec::kTwoPi * freq * i / sr));
  return x;
}

inline torch::Tensor to_tensor(const std::vector<float>& x) {
  return torch::from_blob(const_cast<float*>(x.data()), {static_cast<int64_t>(x.size())}).clone();
}

inline std::vector<float> to_vector(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  return {c.data_ptr<float>(), c.data_ptr<float>() + c.numel()};
}

// Speech-like test clip: a glottal-pulse-ish harmonic source with a slow
// pitch glide and amplitude envelope, plus a burst of noise.
inline std::vector<float> speechlike(int64_t n, uint64_t seed = 0, int64_t sr = 48000) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<float> x(static_cast<size_t>(n));
  double phase = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f0 = 120.0 + 40.0 * std::sin(stftcodec::kTwoPi * 1.5 * t);
    phase += stftcodec::kTwoPi * f0 / sr;
    double v = 0.0;
    for (int h = 1; h <= 12; ++h) v += std::sin(h * phase) / h;
    const double env = 0.5 + 0.5 * std::sin(stftcodec::kTwoPi * 2.0 * t);
    x[i] = static_cast<float>(0.15 * env * v + 0.01 * noise(rng));
  }
  return x;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
