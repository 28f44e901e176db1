#pragma once

// `.stfc` container: fixed little-endian header followed by fixed-width,
// LSB-first bit-packed RVQ indices (frame-major, then stage-major), zero
// padded to a byte boundary.
//
//   offset  size  field
//   0       4     magic "STFC"
//   4       1     version
//   5       4     sample_rate (Hz)
//   9       2     hop_length
//   11      2     fft_size
//   13      2     win_length
//   15      1     downsample_ratio
//   16      1     num_codebooks (n)
//   17      2n    codebook sizes
//   17+2n   4     num_latent_frames
//   21+2n   8     original_num_samples
//   29+2n   16    model hash

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "stftcodec/codec_model.hpp"
#include "stftcodec/quantizer.hpp"
#include "stftcodec/wav.hpp"

namespace stftcodec {

inline constexpr std::array<uint8_t, 4> kBitstreamMagic{'S', 'T', 'F', 'C'};
inline constexpr uint8_t kBitstreamVersion = 1;
inline constexpr size_t kHeaderFixedBytes = 45;

struct BitstreamHeader {
  uint8_t version = kBitstreamVersion;
  uint32_t sample_rate = 48000;
  uint16_t hop_length = 40;
  uint16_t fft_size = 1024;
  uint16_t win_length = 320;
  uint8_t downsample_ratio = 8;
  std::vector<uint16_t> codebook_sizes;
  uint32_t num_latent_frames = 0;
  uint64_t original_num_samples = 0;
  ModelHash model_hash{};

  size_t byte_size() const { return kHeaderFixedBytes + 2 * codebook_sizes.size(); }
  int64_t bits_per_frame() const;
  size_t payload_bytes() const;
  bool operator==(const BitstreamHeader&) const = default;
};

struct Bitstream {
  BitstreamHeader header;
  std::vector<uint8_t> payload;
  bool operator==(const Bitstream&) const = default;
};

/// tokens [n_q, frames]; each index uses log2(size) bits.
std::vector<uint8_t> pack_tokens(const torch::Tensor& tokens, const std::vector<uint16_t>& sizes);
torch::Tensor unpack_tokens(const std::vector<uint8_t>& payload, const std::vector<uint16_t>& sizes,
                            int64_t frames);

std::vector<uint8_t> serialize_bitstream(const Bitstream& stream);
/// Throws BitstreamError on bad magic/version, malformed sizes, or a payload
/// whose length disagrees with the header.
Bitstream parse_bitstream(const std::vector<uint8_t>& bytes);

void write_bitstream(const std::filesystem::path& path, const Bitstream& stream);
Bitstream read_bitstream(const std::filesystem::path& path);

/// Bits per second: sample_rate / (hop * downsample) * sum(log2(sizes)).
double bitrate(const CodebookSpec& spec, int64_t sample_rate, int64_t hop_length, int64_t downsample_ratio);
double bitrate(const BitstreamHeader& header);

/// `num_codebooks` < 0 uses every stage of the model.
Bitstream encode_audio(CodecModel& model, const std::vector<float>& audio, int64_t sample_rate,
                       int64_t num_codebooks = -1);
Bitstream encode_file(const std::filesystem::path& wav_in, CodecModel& model, int64_t num_codebooks = -1);

/// Throws BitstreamError when the stream does not match the model (STFT
/// geometry, codebooks, or hash unless `ignore_hash`).
std::vector<float> decode_bitstream(const Bitstream& stream, CodecModel& model, bool ignore_hash = false);
WavAudio decode_file(const Bitstream& stream, CodecModel& model, bool ignore_hash = false);

}  // namespace stftcodec
