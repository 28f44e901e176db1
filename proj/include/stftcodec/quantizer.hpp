#pragma once

// Residual vector quantizer with factorized (low-dimensional) codes and
// L2-normalized code lookup.
//
// Each stage projects the running residual 512 -> 8, picks the codeword with
// the smallest Euclidean distance between unit-normalized vectors (ties go to
// the lowest index), projects that codeword back 8 -> 512 and subtracts it
// from the residual. The decoder sees the sum of stage outputs in the forward
// pass and an identity Jacobian in the backward pass.

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace stftcodec {

struct CodebookSpec {
  int64_t num_codebooks = 8;
  std::vector<int64_t> sizes = std::vector<int64_t>(8, 1024);
  int64_t code_dim = 8;
  int64_t input_dim = 512;

  static CodebookSpec uniform(int64_t num_codebooks, int64_t size = 1024, int64_t input_dim = 512);
  /// Eight stages front-loaded with capacity (4096, 4096, 256, 256, 1024 x 4);
  /// same 80 bits/frame as the uniform 1024-word layout.
  static CodebookSpec variable_ladder(int64_t input_dim = 512);

  /// Sum of log2(size) over stages.
  int64_t bits_per_frame() const;
  /// Spec restricted to its first n stages.
  CodebookSpec truncated(int64_t n) const;
  /// Throws InvalidArgument: sizes must be powers of two >= 2, one per stage.
  void validate() const;
  bool operator==(const CodebookSpec&) const = default;
};

struct QuantizeResult {
  /// Forward value: sum of stage outputs; backward: identity to the latent.
  torch::Tensor quantized;
  /// Same value as `quantized`, but differentiable w.r.t. codebooks and
  /// projections only (feeds the codebook loss).
  torch::Tensor reconstruction;
  torch::Tensor tokens;  // int64 [B, n_q, M']
  torch::Tensor vq_loss;
  torch::Tensor commit_loss;
  std::vector<double> per_stage_residual_norm;  // mean L2 norm after each stage
};

/// Index of the nearest codeword for each row of `vectors` [N, D] against
/// `codebook` [K, D], after L2-normalizing both. Lowest index wins ties.
torch::Tensor nearest_codeword(const torch::Tensor& vectors, const torch::Tensor& codebook);

struct QuantizerStageImpl : torch::nn::Module {
  QuantizerStageImpl(int64_t input_dim, int64_t code_dim, int64_t size);
  /// residual [B, C, T] -> (stage output [B, C, T], tokens [B, T]).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& residual);
  torch::Tensor decode(const torch::Tensor& tokens);

  torch::nn::Conv1d in_proj{nullptr}, out_proj{nullptr};
  torch::Tensor codebook;  // [size, code_dim]
};
TORCH_MODULE(QuantizerStage);

struct ResidualVectorQuantizerImpl : torch::nn::Module {
  explicit ResidualVectorQuantizerImpl(CodebookSpec spec);

  /// latent [B, input_dim, M']. `num_codebooks` < 0 uses every stage.
  QuantizeResult forward(const torch::Tensor& latent, int64_t num_codebooks = -1);
  /// tokens [B, n_q, M'] with n_q <= num stages; out-of-range tokens raise
  /// BitstreamError.
  torch::Tensor dequantize(const torch::Tensor& tokens);

  CodebookSpec spec;
  torch::nn::ModuleList stages{nullptr};

  QuantizerStage stage(size_t i) const { return stages->ptr<QuantizerStageImpl>(i); }
};
TORCH_MODULE(ResidualVectorQuantizer);

struct StageUtilization {
  double fraction_used = 0.0;  // distinct codewords / size
  double perplexity = 0.0;     // exp(entropy of the empirical index distribution)
};

/// Accumulates codeword usage counts across batches of tokens.
class UtilizationTracker {
 public:
  explicit UtilizationTracker(CodebookSpec spec);
  /// tokens [B, n_q, M'] or [n_q, M'].
  void add(const torch::Tensor& tokens);
  std::vector<StageUtilization> stats() const;
  void reset();

 private:
  CodebookSpec spec_;
  std::vector<std::vector<int64_t>> counts_;
};

std::vector<StageUtilization> utilization_stats(const std::vector<torch::Tensor>& token_history,
                                                const CodebookSpec& spec);

}  // namespace stftcodec
