#include <gtest/gtest.h>

#include "stftcodec/errors.hpp"
#include "stftcodec/quantizer.hpp"

using namespace stftcodec;

namespace {

// Exhaustive search with explicit normalization and squared distance.
int64_t brute_force_nearest(const torch::Tensor& v, const torch::Tensor& codebook) {
  auto vv = v.to(torch::kFloat64);
  vv = vv / vv.norm();
  int64_t best = -1;
  double best_d = INFINITY;
  for (int64_t k = 0; k < codebook.size(0); ++k) {
    auto c = codebook[k].to(torch::kFloat64);
    c = c / c.norm();
    const double d = (vv - c).pow(2).sum().item<double>();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST(Codebooks, BitsAndLadder) {
  EXPECT_EQ(CodebookSpec::uniform(8).bits_per_frame(), 80);
  EXPECT_EQ(CodebookSpec::variable_ladder().bits_per_frame(), 80);
  EXPECT_EQ(CodebookSpec::uniform(8).truncated(2).bits_per_frame(), 20);
  EXPECT_THROW(CodebookSpec::uniform(8).truncated(9), InvalidArgument);
  auto bad = CodebookSpec::uniform(2, 1000);
  EXPECT_THROW(bad.validate(), InvalidArgument);
  auto mismatch = CodebookSpec::uniform(2);
  mismatch.num_codebooks = 3;
  EXPECT_THROW(mismatch.validate(), InvalidArgument);
}

TEST(Quantizer, NearestMatchesBruteForce) {
  torch::manual_seed(0);
  auto codebook = torch::randn({64, 8});
  auto vectors = torch::randn({300, 8});
  auto idx = nearest_codeword(vectors, codebook);
  for (int64_t i = 0; i < vectors.size(0); ++i) {
    EXPECT_EQ(idx[i].item<int64_t>(), brute_force_nearest(vectors[i], codebook)) << i;
  }
}

TEST(Quantizer, TiesResolveToLowestIndex) {
  auto codebook = torch::tensor({{0.0f, 1.0f}, {1.0f, 0.0f}, {1.0f, 0.0f}, {0.0f, 1.0f}});
  auto v = torch::tensor({{2.0f, 0.0f}, {0.0f, 3.0f}});
  auto idx = nearest_codeword(v, codebook);
  EXPECT_EQ(idx[0].item<int64_t>(), 1);
  EXPECT_EQ(idx[1].item<int64_t>(), 0);
}

TEST(Quantizer, PositiveScaleInvariance) {
  torch::manual_seed(1);
  auto codebook = torch::randn({32, 8});
  auto v = torch::randn({100, 8});
  auto a = nearest_codeword(v, codebook);
  for (double s : {1e-3, 0.5, 7.0, 1e3}) {
    EXPECT_TRUE(torch::equal(a, nearest_codeword(v * s, codebook))) << s;
    EXPECT_TRUE(torch::equal(a, nearest_codeword(v, codebook * s))) << s;
  }
}

TEST(Quantizer, ShapesAndDequantizeBitExact) {
  torch::manual_seed(2);
  ResidualVectorQuantizer rvq(CodebookSpec::uniform(4, 16, 12));
  auto latent = torch::randn({3, 12, 9});
  auto r = rvq(latent);
  EXPECT_EQ(r.tokens.sizes(), (std::vector<int64_t>{3, 4, 9}));
  EXPECT_EQ(r.quantized.sizes(), latent.sizes());
  EXPECT_TRUE(torch::equal(rvq->dequantize(r.tokens), r.quantized));
  EXPECT_TRUE(torch::equal(r.reconstruction, r.quantized));
  EXPECT_EQ(r.per_stage_residual_norm.size(), 4u);

  auto r2 = rvq(latent, 2);
  EXPECT_EQ(r2.tokens.size(1), 2);
  EXPECT_TRUE(torch::equal(rvq->dequantize(r2.tokens), r2.quantized));
  EXPECT_TRUE(torch::equal(r2.tokens, r.tokens.narrow(1, 0, 2)));
}

TEST(Quantizer, DequantizeRejectsOutOfRange) {
  ResidualVectorQuantizer rvq(CodebookSpec::uniform(2, 16, 12));
  auto tokens = torch::zeros({1, 2, 4}, torch::kLong);
  tokens[0][1][2] = 16;
  EXPECT_THROW(rvq->dequantize(tokens), BitstreamError);
  EXPECT_THROW(rvq->dequantize(torch::zeros({1, 3, 4}, torch::kLong)), InvalidArgument);
  EXPECT_THROW(rvq(torch::randn({1, 11, 4})), InvalidArgument);
  EXPECT_THROW(rvq(torch::randn({1, 12, 4}), 3), InvalidArgument);
}

TEST(Quantizer, StraightThroughIsIdentity) {
  torch::manual_seed(3);
  ResidualVectorQuantizer rvq(CodebookSpec::uniform(3, 16, 12));
  auto latent = torch::randn({2, 12, 5}, torch::requires_grad());
  auto weights = torch::randn({2, 12, 5});
  (rvq(latent).quantized * weights).sum().backward();
  EXPECT_TRUE(torch::equal(latent.grad(), weights));
}

TEST(Quantizer, StopGradientPlacement) {
  torch::manual_seed(4);
  ResidualVectorQuantizer rvq(CodebookSpec::uniform(2, 16, 12));
  auto latent = torch::randn({2, 12, 5}, torch::requires_grad());

  auto r = rvq(latent);
  r.vq_loss.backward();
  EXPECT_FALSE(latent.grad().defined() && latent.grad().abs().max().item<double>() != 0.0);
  EXPECT_GT(rvq->stage(0)->codebook.grad().abs().sum().item<double>(), 0.0);

  rvq->zero_grad();
  auto latent2 = latent.detach().clone().requires_grad_(true);
  auto r2 = rvq(latent2);
  r2.commit_loss.backward();
  auto g = rvq->stage(0)->codebook.grad();
  EXPECT_TRUE(!g.defined() || g.abs().max().item<double>() == 0.0);
  EXPECT_GT(latent2.grad().abs().sum().item<double>(), 0.0);
}

TEST(Quantizer, InputProjectionReceivesGradient) {
  torch::manual_seed(5);
  ResidualVectorQuantizer rvq(CodebookSpec::uniform(2, 16, 12));
  auto r = rvq(torch::randn({2, 12, 5}));
  r.vq_loss.backward();
  EXPECT_GT(rvq->stage(0)->in_proj->weight.grad().abs().sum().item<double>(), 0.0);
  EXPECT_GT(rvq->stage(0)->out_proj->weight.grad().abs().sum().item<double>(), 0.0);
}

TEST(Quantizer, UtilizationStats) {
  auto spec = CodebookSpec::uniform(2, 4, 8);
  UtilizationTracker tracker(spec);
  tracker.add(torch::tensor({{0, 1, 2, 3}, {0, 0, 0, 0}}, torch::kLong));
  auto s = tracker.stats();
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0].fraction_used, 1.0);
  EXPECT_NEAR(s[0].perplexity, 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(s[1].fraction_used, 0.25);
  EXPECT_NEAR(s[1].perplexity, 1.0, 1e-12);
  auto same = utilization_stats({torch::tensor({{0, 1}, {0, 0}}), torch::tensor({{2, 3}, {0, 0}})}, spec);
  EXPECT_DOUBLE_EQ(same[0].fraction_used, 1.0);
  tracker.reset();
  EXPECT_DOUBLE_EQ(tracker.stats()[0].fraction_used, 0.0);
}

TEST(Quantizer, EarlierStagesGetExactGradients) {
  // The pass-through term of stage 2 must not leak into stage 1's parameters,
  // so stage 1's output bias gradient equals its finite difference.
  torch::manual_seed(6);
  ResidualVectorQuantizer rvq(CodebookSpec::uniform(2, 16, 6));
  rvq->to(torch::kFloat64);
  auto latent = torch::randn({1, 6, 7}, torch::kFloat64);
  auto w = torch::randn({1, 6, 7}, torch::kFloat64);
  auto probe = [&] { return (rvq(latent).reconstruction * w).sum(); };
  probe().backward();
  auto bias = rvq->stage(0)->out_proj->bias;
  auto grad = bias.grad().clone();
  torch::NoGradGuard no_grad;
  for (int64_t j = 0; j < 6; ++j) {
    const double orig = bias[j].item<double>();
    bias[j] = orig + 1e-6;
    const double up = probe().item<double>();
    bias[j] = orig - 1e-6;
    const double down = probe().item<double>();
    bias[j] = orig;
    EXPECT_NEAR((up - down) / 2e-6, grad[j].item<double>(), 1e-6) << j;
  }
}
