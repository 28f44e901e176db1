#include <gtest/gtest.h>

#include "stftcodec/discriminators.hpp"
#include "stftcodec/errors.hpp"

using namespace stftcodec;
namespace F = torch::nn::functional;

TEST(Discriminators, WeightNormMatchesExplicitFormula) {
  torch::manual_seed(0);
  WNConv2d conv(std::make_shared<WNConv2dImpl>(3, 5, std::array<int64_t, 2>{3, 1}, std::array<int64_t, 2>{2, 1},
                                               std::array<int64_t, 2>{1, 0}));
  {
    torch::NoGradGuard no_grad;
    conv->weight_g.mul_(torch::rand({5, 1, 1, 1}) + 0.5);
  }
  auto v = conv->weight_v.detach();
  auto norm = v.flatten(1).norm(2, 1).view({5, 1, 1, 1});
  auto w = conv->weight_g.detach() * v / norm;
  auto x = torch::randn({2, 3, 11, 4});
  auto expected = F::conv2d(x, w, F::Conv2dFuncOptions().bias(conv->bias.detach()).stride({2, 1}).padding({1, 0}));
  EXPECT_TRUE(torch::allclose(conv(x), expected, 1e-5, 1e-6));
}

TEST(Discriminators, WeightNormInitPreservesWeights) {
  WNConv2d conv(std::make_shared<WNConv2dImpl>(2, 4, std::array<int64_t, 2>{3, 3}, std::array<int64_t, 2>{1, 1},
                                               std::array<int64_t, 2>{1, 1}));
  auto w = torch::_weight_norm(conv->weight_v, conv->weight_g, 0);
  EXPECT_TRUE(torch::allclose(w, conv->weight_v, 1e-5, 1e-7));
}

TEST(Discriminators, OutputStructure) {
  torch::manual_seed(1);
  DiscriminatorConfig cfg = DiscriminatorConfig::toy();
  Discriminators d(cfg);
  auto out = d(torch::randn({2, 4000}));
  ASSERT_EQ(out.size(), cfg.periods.size() + cfg.stft_sizes.size());
  ASSERT_EQ(out.feature_maps.size(), out.size());
  for (size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out.logits[i].dim(), 2);
    EXPECT_EQ(out.logits[i].size(0), 2);
    EXPECT_EQ(out.feature_maps[i].size(), 6u) << i;
    EXPECT_TRUE(torch::isfinite(out.logits[i]).all().item<bool>());
  }
}

TEST(Discriminators, PeriodReshapeHandlesRemainder) {
  PeriodDiscriminator p(7, std::vector<int64_t>{2, 4});
  auto [logits, features] = p(torch::randn({1, 1003}));
  // 1003 pads to 1008 = 144 rows of period 7.
  EXPECT_EQ(features.front().size(3), 7);
  EXPECT_EQ(features.front().size(2), 48);  // ceil(144 / 3) after the stride-3 layer
}

TEST(Discriminators, SingleScale) {
  DiscriminatorConfig cfg = DiscriminatorConfig::toy();
  auto single = cfg.single_scale();
  ASSERT_EQ(single.stft_sizes.size(), 1u);
  EXPECT_EQ(single.stft_sizes[0], cfg.stft_sizes[0]);
  EXPECT_EQ(single.periods, cfg.periods);
  Discriminators d(single);
  EXPECT_EQ(d(torch::randn({1, 4000})).size(), cfg.periods.size() + 1);
}

TEST(Discriminators, ReferenceChannelWidths) {
  DiscriminatorConfig cfg;
  EXPECT_EQ(cfg.periods, (std::vector<int64_t>{2, 3, 5, 7, 11}));
  EXPECT_EQ(cfg.stft_sizes, (std::vector<int64_t>{2048, 1024, 512, 256, 128}));
  MultiPeriodDiscriminator mpd(cfg);
  auto* first = mpd->discriminators->ptr<PeriodDiscriminatorImpl>(0).get();
  EXPECT_EQ(first->convs->ptr<WNConv2dImpl>(4)->weight_v.size(0), 1024);
}

TEST(Discriminators, RejectsShortAudioAndBadConfig) {
  Discriminators d(DiscriminatorConfig::toy());
  EXPECT_THROW(d(torch::randn({1, 1000})), InvalidArgument);
  DiscriminatorConfig bad;
  bad.stft_sizes = {30};
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Discriminators, GradientsReachInput) {
  Discriminators d(DiscriminatorConfig::toy());
  auto x = torch::randn({1, 2048}, torch::requires_grad());
  auto out = d(x);
  torch::Tensor total = torch::zeros({});
  for (auto& l : out.logits) total = total + l.sum();
  total.backward();
  EXPECT_GT(x.grad().abs().sum().item<double>(), 0.0);
}
