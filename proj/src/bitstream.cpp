#include "stftcodec/bitstream.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "stftcodec/errors.hpp"

namespace stftcodec {

namespace {

int bits_for(uint16_t size) {
  if (size < 2 || !std::has_single_bit(size)) {
    throw BitstreamError("bitstream: codebook size " + std::to_string(size) + " is not a power of two >= 2");
  }
  return std::countr_zero(size);
}

template <typename T>
void put(std::vector<uint8_t>& out, T value) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>(value >> (8 * i)));
}

template <typename T>
T get(const std::vector<uint8_t>& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw BitstreamError("bitstream: truncated header");
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
  pos += sizeof(T);
  return value;
}

// The analysis needs at least one window of samples; shorter clips are
// zero-extended and cropped after synthesis.
int64_t analysis_length(int64_t samples, const StftConfig& stft) {
  return std::max<int64_t>(samples, stft.win_length);
}

}  // namespace

int64_t BitstreamHeader::bits_per_frame() const {
  int64_t bits = 0;
  for (auto s : codebook_sizes) bits += bits_for(s);
  return bits;
}

size_t BitstreamHeader::payload_bytes() const {
  const uint64_t bits = static_cast<uint64_t>(bits_per_frame()) * num_latent_frames;
  return static_cast<size_t>((bits + 7) / 8);
}

std::vector<uint8_t> pack_tokens(const torch::Tensor& tokens, const std::vector<uint16_t>& sizes) {
  if (tokens.dim() != 2 || tokens.size(0) != static_cast<int64_t>(sizes.size())) {
    throw InvalidArgument("pack_tokens: expected tokens [" + std::to_string(sizes.size()) + ", frames], got " +
                          c10::str(tokens.sizes()));
  }
  auto t = tokens.to(torch::kInt64).contiguous();
  auto acc = t.accessor<int64_t, 2>();
  const int64_t nq = t.size(0), frames = t.size(1);
  std::vector<int> widths;
  int64_t bits_per_frame = 0;
  for (auto s : sizes) {
    widths.push_back(bits_for(s));
    bits_per_frame += widths.back();
  }
  std::vector<uint8_t> out(static_cast<size_t>((bits_per_frame * frames + 7) / 8), 0);
  uint64_t pos = 0;
  for (int64_t f = 0; f < frames; ++f) {
    for (int64_t q = 0; q < nq; ++q) {
      const int64_t v = acc[q][f];
      if (v < 0 || v >= sizes[q]) {
        throw InvalidArgument("pack_tokens: index " + std::to_string(v) + " out of range for stage " +
                              std::to_string(q));
      }
      for (int b = 0; b < widths[q]; ++b, ++pos) {
        if ((v >> b) & 1) out[pos / 8] |= static_cast<uint8_t>(1u << (pos % 8));
      }
    }
  }
  return out;
}

torch::Tensor unpack_tokens(const std::vector<uint8_t>& payload, const std::vector<uint16_t>& sizes,
                            int64_t frames) {
  std::vector<int> widths;
  int64_t bits_per_frame = 0;
  for (auto s : sizes) {
    widths.push_back(bits_for(s));
    bits_per_frame += widths.back();
  }
  const auto need = static_cast<size_t>((bits_per_frame * frames + 7) / 8);
  if (payload.size() != need) {
    throw BitstreamError("bitstream: payload has " + std::to_string(payload.size()) + " bytes, expected " +
                         std::to_string(need));
  }
  const auto nq = static_cast<int64_t>(sizes.size());
  auto tokens = torch::empty({nq, frames}, torch::kInt64);
  auto acc = tokens.accessor<int64_t, 2>();
  uint64_t pos = 0;
  for (int64_t f = 0; f < frames; ++f) {
    for (int64_t q = 0; q < nq; ++q) {
      int64_t v = 0;
      for (int b = 0; b < widths[q]; ++b, ++pos) v |= static_cast<int64_t>((payload[pos / 8] >> (pos % 8)) & 1) << b;
      acc[q][f] = v;
    }
  }
  return tokens;
}

std::vector<uint8_t> serialize_bitstream(const Bitstream& stream) {
  const auto& h = stream.header;
  if (h.codebook_sizes.empty() || h.codebook_sizes.size() > 255) {
    throw InvalidArgument("bitstream: number of codebooks must be in [1, 255]");
  }
  if (stream.payload.size() != h.payload_bytes()) {
    throw InvalidArgument("bitstream: payload size does not match header");
  }
  std::vector<uint8_t> out(kBitstreamMagic.begin(), kBitstreamMagic.end());
  put<uint8_t>(out, h.version);
  put<uint32_t>(out, h.sample_rate);
  put<uint16_t>(out, h.hop_length);
  put<uint16_t>(out, h.fft_size);
  put<uint16_t>(out, h.win_length);
  put<uint8_t>(out, h.downsample_ratio);
  put<uint8_t>(out, static_cast<uint8_t>(h.codebook_sizes.size()));
  for (auto s : h.codebook_sizes) put<uint16_t>(out, s);
  put<uint32_t>(out, h.num_latent_frames);
  put<uint64_t>(out, h.original_num_samples);
  out.insert(out.end(), h.model_hash.begin(), h.model_hash.end());
  out.insert(out.end(), stream.payload.begin(), stream.payload.end());
  return out;
}

Bitstream parse_bitstream(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kHeaderFixedBytes || !std::equal(kBitstreamMagic.begin(), kBitstreamMagic.end(), bytes.begin())) {
    throw BitstreamError("bitstream: bad magic");
  }
  size_t pos = 4;
  Bitstream s;
  auto& h = s.header;
  h.version = get<uint8_t>(bytes, pos);
  if (h.version != kBitstreamVersion) {
    throw BitstreamError("bitstream: unsupported version " + std::to_string(h.version));
  }
  h.sample_rate = get<uint32_t>(bytes, pos);
  h.hop_length = get<uint16_t>(bytes, pos);
  h.fft_size = get<uint16_t>(bytes, pos);
  h.win_length = get<uint16_t>(bytes, pos);
  h.downsample_ratio = get<uint8_t>(bytes, pos);
  const auto n = get<uint8_t>(bytes, pos);
  if (n == 0) throw BitstreamError("bitstream: zero codebooks");
  for (int i = 0; i < n; ++i) {
    h.codebook_sizes.push_back(get<uint16_t>(bytes, pos));
    bits_for(h.codebook_sizes.back());
  }
  h.num_latent_frames = get<uint32_t>(bytes, pos);
  h.original_num_samples = get<uint64_t>(bytes, pos);
  if (pos + h.model_hash.size() > bytes.size()) throw BitstreamError("bitstream: truncated header");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), h.model_hash.size(), h.model_hash.begin());
  pos += h.model_hash.size();
  if (bytes.size() - pos != h.payload_bytes()) {
    throw BitstreamError("bitstream: payload has " + std::to_string(bytes.size() - pos) + " bytes, header implies " +
                         std::to_string(h.payload_bytes()));
  }
  s.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return s;
}

void write_bitstream(const std::filesystem::path& path, const Bitstream& stream) {
  const auto bytes = serialize_bitstream(stream);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Bitstream read_bitstream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_bitstream(bytes);
}

double bitrate(const CodebookSpec& spec, int64_t sample_rate, int64_t hop_length, int64_t downsample_ratio) {
  return static_cast<double>(sample_rate) / static_cast<double>(hop_length * downsample_ratio) *
         static_cast<double>(spec.bits_per_frame());
}

double bitrate(const BitstreamHeader& h) {
  return static_cast<double>(h.sample_rate) / (static_cast<double>(h.hop_length) * h.downsample_ratio) *
         static_cast<double>(h.bits_per_frame());
}

Bitstream encode_audio(CodecModel& model, const std::vector<float>& audio, int64_t sample_rate,
                       int64_t num_codebooks) {
  const auto& cfg = model->cfg;
  if (sample_rate != cfg.stft.sample_rate) {
    throw DataError("encode: input is " + std::to_string(sample_rate) + " Hz but the model expects " +
                    std::to_string(cfg.stft.sample_rate) + " Hz");
  }
  if (audio.empty()) throw DataError("encode: empty input");
  const auto nq = num_codebooks < 0 ? cfg.codebooks.num_codebooks : num_codebooks;
  if (nq < 1 || nq > cfg.codebooks.num_codebooks) {
    throw InvalidArgument("encode: num_codebooks must be in [1, " + std::to_string(cfg.codebooks.num_codebooks) + "]");
  }
  const auto samples = static_cast<int64_t>(audio.size());
  auto x = torch::zeros({analysis_length(samples, cfg.stft)});
  std::copy(audio.begin(), audio.end(), x.data_ptr<float>());

  model->eval();
  auto tokens = model->encode_tokens(x, nq).squeeze(0);

  Bitstream s;
  auto& h = s.header;
  h.sample_rate = static_cast<uint32_t>(cfg.stft.sample_rate);
  h.hop_length = static_cast<uint16_t>(cfg.stft.hop_length);
  h.fft_size = static_cast<uint16_t>(cfg.stft.fft_size);
  h.win_length = static_cast<uint16_t>(cfg.stft.win_length);
  h.downsample_ratio = static_cast<uint8_t>(cfg.generator.downsample_factor());
  for (int64_t i = 0; i < nq; ++i) h.codebook_sizes.push_back(static_cast<uint16_t>(cfg.codebooks.sizes[i]));
  h.num_latent_frames = static_cast<uint32_t>(tokens.size(1));
  h.original_num_samples = static_cast<uint64_t>(samples);
  h.model_hash = model->fingerprint();
  s.payload = pack_tokens(tokens, h.codebook_sizes);
  return s;
}

Bitstream encode_file(const std::filesystem::path& wav_in, CodecModel& model, int64_t num_codebooks) {
  const auto wav = read_wav(wav_in);
  return encode_audio(model, wav.samples, wav.sample_rate, num_codebooks);
}

std::vector<float> decode_bitstream(const Bitstream& stream, CodecModel& model, bool ignore_hash) {
  const auto& cfg = model->cfg;
  const auto& h = stream.header;
  if (h.sample_rate != cfg.stft.sample_rate || h.hop_length != cfg.stft.hop_length ||
      h.fft_size != cfg.stft.fft_size || h.win_length != cfg.stft.win_length ||
      h.downsample_ratio != cfg.generator.downsample_factor()) {
    throw BitstreamError("decode: stream STFT geometry does not match the model");
  }
  if (h.codebook_sizes.size() > static_cast<size_t>(cfg.codebooks.num_codebooks)) {
    throw BitstreamError("decode: stream uses more codebooks than the model has");
  }
  for (size_t i = 0; i < h.codebook_sizes.size(); ++i) {
    if (h.codebook_sizes[i] != cfg.codebooks.sizes[i]) {
      throw BitstreamError("decode: codebook " + std::to_string(i) + " size differs from the model");
    }
  }
  if (!ignore_hash && h.model_hash != model->fingerprint()) {
    throw BitstreamError("decode: model hash mismatch (stream was encoded with a different model)");
  }
  if (h.original_num_samples == 0) throw BitstreamError("decode: zero-length stream");
  const auto samples = static_cast<int64_t>(h.original_num_samples);
  const auto padded = analysis_length(samples, cfg.stft);
  const auto expected = cfg.generator.latent_frames(cfg.stft.num_frames(padded));
  if (expected != h.num_latent_frames) {
    throw BitstreamError("decode: header claims " + std::to_string(h.num_latent_frames) + " frames, " +
                         std::to_string(expected) + " expected for " + std::to_string(samples) + " samples");
  }
  auto tokens = unpack_tokens(stream.payload, h.codebook_sizes, h.num_latent_frames).unsqueeze(0);
  model->eval();
  auto audio = model->decode_tokens(tokens, padded).squeeze(0).slice(0, 0, samples).contiguous();
  return std::vector<float>(audio.data_ptr<float>(), audio.data_ptr<float>() + audio.numel());
}

WavAudio decode_file(const Bitstream& stream, CodecModel& model, bool ignore_hash) {
  WavAudio out;
  out.samples = decode_bitstream(stream, model, ignore_hash);
  out.sample_rate = static_cast<int>(stream.header.sample_rate);
  return out;
}

}  // namespace stftcodec
