#include <gtest/gtest.h>

#include "stftcodec/errors.hpp"
#include "stftcodec/generator.hpp"

using namespace stftcodec;

namespace {

GeneratorConfig tiny() {
  GeneratorConfig c;
  c.freq_bins = 33;
  c.mag_channels = 8;
  c.phase_channels = 4;
  c.grad_channels = 4;
  c.latent_channels = 16;
  c.decoder_head_channels = 8;
  c.convnext_blocks_enc = 1;
  c.convnext_blocks_dec = 2;
  return c;
}

template <typename T>
int count_modules(torch::nn::Module& m) {
  int n = 0;
  for (const auto& child : m.modules(/*include_self=*/false)) {
    if (dynamic_cast<T*>(child.get())) ++n;
  }
  return n;
}

}  // namespace

TEST(Generator, EncoderShapes) {
  torch::manual_seed(0);
  Encoder enc(tiny());
  for (int64_t frames : {8, 50, 399}) {
    auto x = torch::randn({2, 33, frames});
    auto z = enc(x, x, x);
    EXPECT_EQ(z.sizes(), (std::vector<int64_t>{2, 16, (frames + 7) / 8})) << frames;
  }
}

TEST(Generator, ProbeSeesConcatenatedStreams) {
  Encoder enc(tiny());
  std::vector<int64_t> seen;
  enc->set_probe([&](const std::string& name, const torch::Tensor& t) {
    if (name == "concat") seen = t.sizes().vec();
  });
  auto x = torch::randn({1, 33, 20});
  enc(x, x, x);
  EXPECT_EQ(seen, (std::vector<int64_t>{1, 16, 20}));
}

TEST(Generator, EncoderRejectsMismatchedStreams) {
  Encoder enc(tiny());
  auto x = torch::randn({1, 33, 20});
  EXPECT_THROW(enc(x, x, torch::randn({1, 33, 21})), InvalidArgument);
  EXPECT_THROW(enc(torch::randn({1, 32, 20}), x, x), InvalidArgument);
}

TEST(Generator, DecoderShapesAndPhaseRange) {
  torch::manual_seed(1);
  Decoder dec(tiny());
  auto out = dec(torch::randn({2, 16, 7}), 53);
  EXPECT_EQ(out.log_magnitude.sizes(), (std::vector<int64_t>{2, 33, 53}));
  EXPECT_EQ(out.phase.sizes(), out.log_magnitude.sizes());
  EXPECT_GT(out.phase.min().item<double>(), -kPi);
  EXPECT_LE(out.phase.max().item<double>(), kPi);
  auto expect = torch::atan2(out.imag_part, out.real_part);
  EXPECT_TRUE(torch::allclose(out.phase, torch::where(expect <= -kPi, expect + kTwoPi, expect)));
  EXPECT_THROW(dec(torch::randn({2, 16, 7}), 57), InvalidArgument);
}

TEST(Generator, PhaseFromComponentsFoldsMinusPi) {
  auto re = torch::tensor({-1.0, -1.0, 1.0, 0.0});
  auto im = torch::tensor({-0.0, 0.0, 0.0, 1.0});
  auto phi = phase_from_components(re, im);
  EXPECT_FLOAT_EQ(phi[0].item<float>(), static_cast<float>(kPi));
  EXPECT_FLOAT_EQ(phi[1].item<float>(), static_cast<float>(kPi));
  EXPECT_FLOAT_EQ(phi[2].item<float>(), 0.0f);
  EXPECT_FLOAT_EQ(phi[3].item<float>(), static_cast<float>(kPi / 2));
}

TEST(Generator, GrnStartsAsIdentity) {
  GlobalResponseNorm grn(6);
  auto x = torch::randn({2, 10, 6});
  EXPECT_TRUE(torch::equal(grn(x), x));
}

TEST(Generator, GrnMatchesLoopOracle) {
  GlobalResponseNorm grn(3, 1e-6);
  torch::NoGradGuard no_grad;
  grn->gamma.copy_(torch::tensor({0.5, -1.0, 2.0}).view({1, 1, 3}));
  grn->beta.copy_(torch::tensor({0.1, 0.2, 0.3}).view({1, 1, 3}));
  auto x = torch::randn({1, 5, 3}, torch::kFloat32);
  auto y = grn(x);
  auto xa = x.accessor<float, 3>();
  double g[3];
  for (int c = 0; c < 3; ++c) {
    double s = 0;
    for (int t = 0; t < 5; ++t) s += double(xa[0][t][c]) * xa[0][t][c];
    g[c] = std::sqrt(s);
  }
  const double mean = (g[0] + g[1] + g[2]) / 3.0;
  const double gamma[3] = {0.5, -1.0, 2.0}, beta[3] = {0.1, 0.2, 0.3};
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 3; ++c) {
      const double n = g[c] / (mean + 1e-6);
      const double ref = gamma[c] * xa[0][t][c] * n + beta[c] + xa[0][t][c];
      EXPECT_NEAR(y[0][t][c].item<double>(), ref, 1e-5);
    }
  }
}

TEST(Generator, ResidualBlockSubstitution) {
  auto with = tiny();
  auto without = tiny();
  without.use_convnext = false;
  Encoder a(with), b(without);
  Decoder c(with), d(without);
  EXPECT_EQ(count_modules<ConvNeXtBlockImpl>(*a), 3);  // one per branch
  EXPECT_EQ(count_modules<ConvNeXtBlockImpl>(*c), 4);  // two per head
  EXPECT_EQ(count_modules<ConvNeXtBlockImpl>(*b), 0);
  EXPECT_EQ(count_modules<ConvNeXtBlockImpl>(*d), 0);
  EXPECT_EQ(count_modules<ResidualBlockImpl>(*b), 3 + 3);  // branches + downsampling stages
  EXPECT_EQ(count_modules<ResidualBlockImpl>(*d), 4 + 3);
  auto x = torch::randn({1, 33, 16});
  EXPECT_EQ(b(x, x, x).sizes(), a(x, x, x).sizes());
}

TEST(Generator, AttentionToggle) {
  auto cfg = tiny();
  EXPECT_EQ(count_modules<SelfAttentionImpl>(*Encoder(cfg)), 3);
  EXPECT_EQ(count_modules<SelfAttentionImpl>(*Decoder(cfg)), 3);
  cfg.attention_encoder = false;
  EXPECT_EQ(count_modules<SelfAttentionImpl>(*Encoder(cfg)), 0);
  EXPECT_EQ(count_modules<SelfAttentionImpl>(*Decoder(cfg)), 3);
}

TEST(Generator, ConfigValidation) {
  auto cfg = tiny();
  cfg.grad_channels = 5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  EXPECT_THROW(Encoder{cfg}, InvalidArgument);
  GeneratorConfig ref;
  EXPECT_NO_THROW(ref.validate());
  EXPECT_EQ(ref.downsample_factor(), 8);
  EXPECT_EQ(ref.latent_frames(399), 50);
}
