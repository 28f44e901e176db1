#pragma once

#include <stdexcept>
#include <string>

namespace stftcodec {

/// Caller handed in something that violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data (audio files, bitstreams, checkpoints) is malformed or incompatible.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bitstream-level decode failure: bad magic, truncated payload, token out of range.
class BitstreamError : public DataError {
 public:
  using DataError::DataError;
};

/// A training step produced a non-finite loss; `term()` names the culprit.
class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(std::string term)
      : std::runtime_error("non-finite loss term: " + term), term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace stftcodec
