#include "stftcodec/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "stftcodec/errors.hpp"

namespace stftcodec {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

bool is_supported_sample_rate(int64_t rate) { return rate == 48000 || rate == 24000; }

WavAudio parse_wav(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("wav: not a RIFF/WAVE file");
  }
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const uint8_t* data = nullptr;
  size_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* chunk = bytes.data() + pos;
    const size_t size = get_u32(chunk + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a truncated trailing data chunk (common with streamed writers).
      if (std::memcmp(chunk, "data", 4) != 0) throw DataError("wav: truncated chunk");
    }
    const size_t avail = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError("wav: fmt chunk too small");
      format = get_u16(chunk + 8);
      channels = get_u16(chunk + 10);
      rate = get_u32(chunk + 12);
      bits = get_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (avail < 40) throw DataError("wav: extensible fmt chunk too small");
        format = get_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt || data == nullptr) throw DataError("wav: missing fmt or data chunk");
  if (channels != 1) {
    throw DataError("wav: expected mono audio, got " + std::to_string(channels) + " channels");
  }
  if (!is_supported_sample_rate(rate)) {
    throw DataError("wav: unsupported sample rate " + std::to_string(rate) +
                    " Hz (expected 48000 or 24000)");
  }

  WavAudio audio;
  audio.sample_rate = rate;
  if (format == kFormatPcm && bits == 16) {
    const size_t n = data_size / 2;
    audio.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      audio.samples[i] = static_cast<int16_t>(get_u16(data + 2 * i)) / 32768.0f;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const size_t n = data_size / 4;
    audio.samples.resize(n);
    std::memcpy(audio.samples.data(), data, n * 4);
  } else {
    throw DataError("wav: unsupported encoding (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits); expected 16-bit PCM or 32-bit float");
  }
  return audio;
}

WavAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("wav: cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<uint8_t> serialize_wav(const WavAudio& audio, SampleFormat format) {
  const uint16_t bits = format == SampleFormat::kPcm16 ? 16 : 32;
  const uint16_t block = bits / 8;
  const uint32_t data_size = static_cast<uint32_t>(audio.samples.size() * block);
  std::vector<uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format == SampleFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<uint32_t>(audio.sample_rate) * block);
  put_u16(out, block);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (float s : audio.samples) {
    if (format == SampleFormat::kPcm16) {
      const float clipped = std::clamp(s, -1.0f, 1.0f);
      const auto q = static_cast<int16_t>(std::lround(std::clamp(clipped * 32768.0f, -32768.0f, 32767.0f)));
      put_u16(out, static_cast<uint16_t>(q));
    } else {
      uint32_t raw;
      std::memcpy(&raw, &s, 4);
      put_u32(out, raw);
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const WavAudio& audio, SampleFormat format) {
  const auto bytes = serialize_wav(audio, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("wav: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace stftcodec
