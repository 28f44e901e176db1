#include <gtest/gtest.h>

#include <complex>

#include "stftcodec/errors.hpp"
#include "stftcodec/spectral.hpp"
#include "test_util.hpp"

using namespace stftcodec;

namespace {

StftConfig small_config() {
  StftConfig c;
  c.fft_size = 64;
  c.win_length = 32;
  c.hop_length = 8;
  c.sample_rate = 16000;
  return c;
}

// Direct evaluation of one STFT coefficient: reflect-padded frame, periodic
// Hann window, zero-padded DFT.
std::complex<double> dft_oracle(const std::vector<double>& x, const StftConfig& c, int64_t frame, int64_t bin) {
  const int64_t pad = c.win_length / 2;
  const auto n_total = static_cast<int64_t>(x.size());
  std::complex<double> acc = 0.0;
  for (int64_t n = 0; n < c.win_length; ++n) {
    int64_t idx = frame * c.hop_length + n - pad;
    if (idx < 0) idx = -idx;
    if (idx >= n_total) idx = 2 * (n_total - 1) - idx;
    const double w = 0.5 - 0.5 * std::cos(kTwoPi * n / c.win_length);
    acc += w * x[idx] * std::polar(1.0, -kTwoPi * bin * n / c.fft_size);
  }
  return acc;
}

}  // namespace

TEST(Stft, MatchesScalarDft) {
  const auto c = small_config();
  torch::manual_seed(1);
  auto x = torch::randn({203}, torch::kFloat64);
  std::vector<double> xs(x.data_ptr<double>(), x.data_ptr<double>() + x.numel());
  auto spec = stft_analyze(x, c);
  ASSERT_EQ(spec.size(0), c.num_bins());
  ASSERT_EQ(spec.size(1), c.num_frames(203));
  auto acc = spec.accessor<c10::complex<double>, 2>();
  for (int64_t m = 0; m < spec.size(1); ++m) {
    for (int64_t k = 0; k < spec.size(0); ++k) {
      const auto ref = dft_oracle(xs, c, m, k);
      EXPECT_NEAR(acc[k][m].real(), ref.real(), 1e-10) << "frame " << m << " bin " << k;
      EXPECT_NEAR(acc[k][m].imag(), ref.imag(), 1e-10) << "frame " << m << " bin " << k;
    }
  }
}

TEST(Stft, ReferenceShapes) {
  StftConfig c;
  auto x = torch::zeros({2, 15960});
  auto spec = stft_analyze(x, c);
  EXPECT_EQ(spec.sizes(), (std::vector<int64_t>{2, 513, 399}));
}

TEST(Stft, RoundTripFloat64) {
  StftConfig c;
  torch::manual_seed(2);
  for (int64_t len : {320, 4000, 4040, 9600}) {
    auto x = torch::randn({len}, torch::kFloat64);
    auto y = istft(stft_analyze(x, c), c, len);
    EXPECT_LT((x - y).abs().max().item<double>(), 1e-10) << "length " << len;
  }
}

TEST(Stft, RoundTripViaLogMagnitudeAndPhase) {
  StftConfig c;
  torch::manual_seed(3);
  auto x = torch::randn({3, 4800}, torch::kFloat64);
  auto f = extract_features(stft_analyze(x, c), 1e-300);
  auto y = istft_synthesize(f.log_magnitude, f.phase, c, 4800);
  EXPECT_LT((x - y).abs().max().item<double>(), 1e-9);
}

TEST(Stft, ColaDetection) {
  StftConfig c;
  EXPECT_TRUE(satisfies_cola(c));
  c.hop_length = 80;
  EXPECT_TRUE(satisfies_cola(c));
  c.hop_length = 70;  // 320 / 70 is not an integer: Hann sum ripples
  EXPECT_FALSE(satisfies_cola(c));
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Stft, RejectsBadInput) {
  StftConfig c;
  EXPECT_THROW(stft_analyze(torch::zeros({100}), c), InvalidArgument);
  auto x = torch::zeros({1000});
  x[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(stft_analyze(x, c), InvalidArgument);
  StftConfig bad = c;
  bad.win_length = 2048;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_THROW(istft(torch::zeros({100, 4}, torch::kComplexFloat), c, 100), InvalidArgument);
}

TEST(Phase, WrapRange) {
  auto a = torch::linspace(-40.0, 40.0, 100001, torch::kFloat64);
  auto w = wrap_phase(a);
  EXPECT_GT(w.min().item<double>(), -kPi);
  EXPECT_LE(w.max().item<double>(), kPi);
  auto k = (a - w) / kTwoPi;
  EXPECT_LT((k - k.round()).abs().max().item<double>(), 1e-9);
  EXPECT_DOUBLE_EQ(wrap_phase(torch::tensor({-kPi}, torch::kFloat64)).item<double>(), kPi);
}

TEST(Phase, UnwrapProperties) {
  torch::manual_seed(4);
  auto phase = (torch::rand({16, 200}, torch::kFloat64) * 2 - 1) * kPi;
  auto counts = phase_jump_counts(phase);
  auto unwrapped = unwrap_phase_time(phase);
  EXPECT_TRUE(torch::equal(unwrapped, phase + kTwoPi * counts.to(torch::kFloat64)));
  auto d = torch::diff(unwrapped, 1, -1);
  EXPECT_LE(d.abs().max().item<double>(), kPi + 1e-12);
  EXPECT_TRUE(torch::equal(unwrapped.select(1, 0), phase.select(1, 0)));
  EXPECT_LT((wrap_phase(unwrapped) - phase).abs().max().item<double>(), 1e-12);
}

TEST(Phase, UnwrapRecoversLinearRamp) {
  auto ramp = torch::arange(0, 100, torch::kFloat64) * 2.5;  // 2.5 rad/frame < pi
  auto unwrapped = unwrap_phase_time(wrap_phase(ramp));
  EXPECT_LT((unwrapped - ramp).abs().max().item<double>(), 1e-9);
}

TEST(Phase, GradientFirstColumnZero) {
  auto u = torch::tensor({{1.0, 2.0, 4.0}, {0.0, -1.0, 3.0}}, torch::kFloat64);
  auto g = phase_temporal_gradient(u);
  auto expect = torch::tensor({{0.0, 1.0, 2.0}, {0.0, -1.0, 4.0}}, torch::kFloat64);
  EXPECT_TRUE(torch::equal(g, expect));
}

TEST(Phase, PureToneAdvance) {
  StftConfig c;
  // Bin-centered tone: its phase advances by 2*pi*f*hop/sr per frame.
  const int64_t bin = 64;
  const double f = bin * static_cast<double>(c.sample_rate) / c.fft_size;
  std::vector<double> x(9600);
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::cos(kTwoPi * f * i / c.sample_rate);
  auto t = torch::from_blob(x.data(), {9600}, torch::kFloat64).clone();
  auto feats = extract_features(stft_analyze(t, c));
  auto grad = feats.phase_gradient.select(0, bin).slice(0, 10, -10);
  const double expected = wrap_phase(torch::tensor({kTwoPi * f * c.hop_length / c.sample_rate}, torch::kFloat64))
                              .item<double>();
  EXPECT_LT(wrap_phase(grad - expected).abs().max().item<double>(), 1e-3);
}

TEST(Features, LogMagnitudeFloor) {
  StftConfig c;
  auto feats = extract_features(stft_analyze(torch::zeros({1000}), c));
  EXPECT_NEAR(feats.log_magnitude.max().item<double>(), std::log(kDefaultMagnitudeFloor), 1e-5);
  EXPECT_THROW(extract_features(stft_analyze(torch::zeros({1000}), c), 0.0), InvalidArgument);
}

TEST(Features, PhaseRange) {
  StftConfig c;
  torch::manual_seed(5);
  auto feats = extract_features(stft_analyze(torch::randn({4000}), c));
  // float32 cannot hold pi itself; its nearest value bounds the range.
  const float pi32 = static_cast<float>(kPi);
  EXPECT_GT(feats.phase.min().item<float>(), -pi32);
  EXPECT_LE(feats.phase.max().item<float>(), pi32);
  EXPECT_EQ(feats.phase_gradient.select(-1, 0).abs().max().item<double>(), 0.0);
}
