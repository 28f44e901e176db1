#pragma once

// Minimal mono RIFF/WAVE reader and writer (16-bit PCM and 32-bit float).

#include <cstdint>
#include <filesystem>
#include <vector>

namespace stftcodec {

enum class SampleFormat { kPcm16, kFloat32 };

struct WavAudio {
  std::vector<float> samples;  // nominal range [-1, 1]
  int64_t sample_rate = 48000;
};

/// Supported rates are 48 kHz and 24 kHz; anything else is a DataError, as is
/// multichannel audio or an unsupported encoding.
WavAudio read_wav(const std::filesystem::path& path);
WavAudio parse_wav(const std::vector<uint8_t>& bytes);

void write_wav(const std::filesystem::path& path, const WavAudio& audio,
               SampleFormat format = SampleFormat::kPcm16);
std::vector<uint8_t> serialize_wav(const WavAudio& audio, SampleFormat format);

bool is_supported_sample_rate(int64_t rate);

}  // namespace stftcodec
