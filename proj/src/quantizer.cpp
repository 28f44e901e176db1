#include "stftcodec/quantizer.hpp"

#include <bit>
#include <cmath>

#include "stftcodec/errors.hpp"
#include "stftcodec/losses.hpp"

namespace stftcodec {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

CodebookSpec CodebookSpec::uniform(int64_t num_codebooks, int64_t size, int64_t input_dim) {
  CodebookSpec s;
  s.num_codebooks = num_codebooks;
  s.sizes.assign(static_cast<size_t>(std::max<int64_t>(num_codebooks, 0)), size);
  s.input_dim = input_dim;
  return s;
}

CodebookSpec CodebookSpec::variable_ladder(int64_t input_dim) {
  CodebookSpec s;
  s.num_codebooks = 8;
  s.sizes = {4096, 4096, 256, 256, 1024, 1024, 1024, 1024};
  s.input_dim = input_dim;
  return s;
}

int64_t CodebookSpec::bits_per_frame() const {
  int64_t bits = 0;
  for (auto size : sizes) bits += std::countr_zero(static_cast<uint64_t>(size));
  return bits;
}

CodebookSpec CodebookSpec::truncated(int64_t n) const {
  if (n < 1 || n > num_codebooks) {
    throw InvalidArgument("codebooks: cannot use " + std::to_string(n) + " of " +
                          std::to_string(num_codebooks) + " stages");
  }
  CodebookSpec s = *this;
  s.num_codebooks = n;
  s.sizes.resize(static_cast<size_t>(n));
  return s;
}

void CodebookSpec::validate() const {
  if (num_codebooks < 1 || static_cast<size_t>(num_codebooks) != sizes.size()) {
    throw InvalidArgument("codebooks: num_codebooks must be >= 1 and match the number of sizes");
  }
  for (auto size : sizes) {
    if (size < 2 || size > 32768 || !std::has_single_bit(static_cast<uint64_t>(size))) {
      throw InvalidArgument("codebooks: size " + std::to_string(size) +
                            " is not a power of two in [2, 32768]");
    }
  }
  if (code_dim < 1 || input_dim < 1) throw InvalidArgument("codebooks: dimensions must be positive");
}

torch::Tensor nearest_codeword(const torch::Tensor& vectors, const torch::Tensor& codebook) {
  auto v = F::normalize(vectors, F::NormalizeFuncOptions().dim(1));
  auto c = F::normalize(codebook, F::NormalizeFuncOptions().dim(1));
  auto dist = v.pow(2).sum(1, /*keepdim=*/true) - 2.0 * torch::matmul(v, c.t()) +
              c.pow(2).sum(1).unsqueeze(0);
  // argmin reports the first minimum, so ties resolve to the lowest index.
  return dist.argmin(1);
}

QuantizerStageImpl::QuantizerStageImpl(int64_t input_dim, int64_t code_dim, int64_t size) {
  in_proj = register_module("in_proj", nn::Conv1d(nn::Conv1dOptions(input_dim, code_dim, 1)));
  out_proj = register_module("out_proj", nn::Conv1d(nn::Conv1dOptions(code_dim, input_dim, 1)));
  codebook = register_parameter("codebook", F::normalize(torch::randn({size, code_dim}),
                                                         F::NormalizeFuncOptions().dim(1)));
}

std::pair<torch::Tensor, torch::Tensor> QuantizerStageImpl::forward(const torch::Tensor& residual) {
  const int64_t batch = residual.size(0), frames = residual.size(2);
  auto projected = in_proj(residual).transpose(1, 2).reshape({batch * frames, -1});
  auto tokens = nearest_codeword(projected.detach(), codebook.detach());
  // Value is the selected codeword; gradient reaches both the codebook and
  // the input projection.
  auto code = F::embedding(tokens, codebook) + (projected - projected.detach());
  auto out = out_proj(code.view({batch, frames, -1}).transpose(1, 2));
  return {out, tokens.view({batch, frames})};
}

torch::Tensor QuantizerStageImpl::decode(const torch::Tensor& tokens) {
  const int64_t batch = tokens.size(0), frames = tokens.size(1);
  auto code = F::embedding(tokens.reshape({batch * frames}), codebook);
  return out_proj(code.view({batch, frames, -1}).transpose(1, 2));
}

ResidualVectorQuantizerImpl::ResidualVectorQuantizerImpl(CodebookSpec spec_) : spec(std::move(spec_)) {
  spec.validate();
  stages = nn::ModuleList();
  for (auto size : spec.sizes) stages->push_back(QuantizerStage(spec.input_dim, spec.code_dim, size));
  register_module("stages", stages);
}

QuantizeResult ResidualVectorQuantizerImpl::forward(const torch::Tensor& latent, int64_t num_codebooks) {
  if (latent.dim() != 3 || latent.size(1) != spec.input_dim) {
    throw InvalidArgument("quantize: expected [B, " + std::to_string(spec.input_dim) +
                          ", M'] latent, got " + c10::str(latent.sizes()));
  }
  if (latent.size(0) == 0 || latent.size(2) == 0) throw InvalidArgument("quantize: empty latent");
  const int64_t n = num_codebooks < 0 ? spec.num_codebooks : num_codebooks;
  if (n < 1 || n > spec.num_codebooks) {
    throw InvalidArgument("quantize: requested " + std::to_string(n) + " codebooks of " +
                          std::to_string(spec.num_codebooks));
  }

  QuantizeResult result;
  auto residual = latent.detach();
  auto reconstruction = torch::zeros_like(residual);
  std::vector<torch::Tensor> tokens;
  for (int64_t i = 0; i < n; ++i) {
    auto [out, tok] = stage(static_cast<size_t>(i))->forward(residual);
    reconstruction = reconstruction + out;
    // Each stage sees a constant residual: the pass-through term of a later
    // stage must not feed gradient back into earlier stages.
    residual = residual - out.detach();
    tokens.push_back(tok);
    result.per_stage_residual_norm.push_back(
        residual.detach().pow(2).sum(1).sqrt().mean().item<double>());
  }
  result.reconstruction = reconstruction;
  result.quantized = reconstruction.detach() + (latent - latent.detach());
  result.tokens = torch::stack(tokens, 1);
  std::tie(result.vq_loss, result.commit_loss) = vq_commit_losses(latent, reconstruction);
  return result;
}

torch::Tensor ResidualVectorQuantizerImpl::dequantize(const torch::Tensor& tokens) {
  if (tokens.dim() != 3 || tokens.size(1) < 1 || tokens.size(1) > spec.num_codebooks) {
    throw InvalidArgument("dequantize: expected [B, n_q <= " + std::to_string(spec.num_codebooks) +
                          ", M'] tokens, got " + c10::str(tokens.sizes()));
  }
  auto tok = tokens.to(torch::kLong);
  const auto& ref = stage(0)->codebook;
  auto reconstruction =
      torch::zeros({tok.size(0), spec.input_dim, tok.size(2)}, ref.options());
  for (int64_t i = 0; i < tok.size(1); ++i) {
    auto t = tok.select(1, i);
    const int64_t size = spec.sizes[static_cast<size_t>(i)];
    if (t.numel() > 0 && (t.min().item<int64_t>() < 0 || t.max().item<int64_t>() >= size)) {
      throw BitstreamError("dequantize: token out of range for stage " + std::to_string(i) +
                           " (size " + std::to_string(size) + ")");
    }
    reconstruction = reconstruction + stage(static_cast<size_t>(i))->decode(t);
  }
  return reconstruction;
}

// ----------------------------------------------------------------------------

UtilizationTracker::UtilizationTracker(CodebookSpec spec) : spec_(std::move(spec)) { reset(); }

void UtilizationTracker::reset() {
  counts_.clear();
  for (auto size : spec_.sizes) counts_.emplace_back(static_cast<size_t>(size), 0);
}

void UtilizationTracker::add(const torch::Tensor& tokens) {
  auto t = tokens.dim() == 2 ? tokens.unsqueeze(0) : tokens;
  t = t.to(torch::kCPU, torch::kLong).contiguous();
  const int64_t stages = std::min<int64_t>(t.size(1), spec_.num_codebooks);
  for (int64_t s = 0; s < stages; ++s) {
    auto flat = t.select(1, s).reshape({-1}).contiguous();
    const auto* p = flat.data_ptr<int64_t>();
    auto& c = counts_[static_cast<size_t>(s)];
    for (int64_t i = 0; i < flat.numel(); ++i) {
      if (p[i] >= 0 && p[i] < static_cast<int64_t>(c.size())) ++c[static_cast<size_t>(p[i])];
    }
  }
}

std::vector<StageUtilization> UtilizationTracker::stats() const {
  std::vector<StageUtilization> out;
  for (const auto& c : counts_) {
    int64_t total = 0, used = 0;
    for (auto v : c) {
      total += v;
      used += v > 0;
    }
    StageUtilization u;
    u.fraction_used = static_cast<double>(used) / static_cast<double>(c.size());
    double entropy = 0.0;
    for (auto v : c) {
      if (v == 0) continue;
      const double p = static_cast<double>(v) / static_cast<double>(total);
      entropy -= p * std::log(p);
    }
    u.perplexity = total > 0 ? std::exp(entropy) : 0.0;
    out.push_back(u);
  }
  return out;
}

std::vector<StageUtilization> utilization_stats(const std::vector<torch::Tensor>& token_history,
                                                const CodebookSpec& spec) {
  UtilizationTracker tracker(spec);
  for (const auto& t : token_history) tracker.add(t);
  return tracker.stats();
}

}  // namespace stftcodec
