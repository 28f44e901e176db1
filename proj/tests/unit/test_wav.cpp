#include <gtest/gtest.h>

#include "stftcodec/errors.hpp"
#include "stftcodec/wav.hpp"
#include "test_util.hpp"

using namespace stftcodec;

TEST(Wav, Float32RoundTripIsExact) {
  WavAudio a{testutil::tone(1234, 440.0), 48000};
  auto b = parse_wav(serialize_wav(a, SampleFormat::kFloat32));
  EXPECT_EQ(b.sample_rate, 48000);
  EXPECT_EQ(b.samples, a.samples);
}

TEST(Wav, Pcm16RoundTripWithinQuantizationStep) {
  WavAudio a{testutil::tone(999, 300.0, 24000), 24000};
  auto b = parse_wav(serialize_wav(a, SampleFormat::kPcm16));
  ASSERT_EQ(b.samples.size(), a.samples.size());
  EXPECT_EQ(b.sample_rate, 24000);
  for (size_t i = 0; i < a.samples.size(); ++i) EXPECT_NEAR(a.samples[i], b.samples[i], 1.0 / 32767);
}

TEST(Wav, FileRoundTrip) {
  testutil::TempDir dir("wav");
  WavAudio a{testutil::tone(480, 1000.0), 48000};
  write_wav(dir / "x.wav", a, SampleFormat::kFloat32);
  EXPECT_EQ(read_wav(dir / "x.wav").samples, a.samples);
  EXPECT_THROW(read_wav(dir / "missing.wav"), DataError);
}

TEST(Wav, RejectsUnsupportedRate) {
  WavAudio a{testutil::tone(100, 440.0), 44100};
  auto bytes = serialize_wav(a, SampleFormat::kPcm16);
  EXPECT_THROW(parse_wav(bytes), DataError);
  EXPECT_FALSE(is_supported_sample_rate(44100));
  EXPECT_TRUE(is_supported_sample_rate(24000));
}

TEST(Wav, RejectsStereoAndGarbage) {
  WavAudio a{testutil::tone(100, 440.0), 48000};
  auto bytes = serialize_wav(a, SampleFormat::kPcm16);
  bytes[22] = 2;  // channel count
  EXPECT_THROW(parse_wav(bytes), DataError);
  EXPECT_THROW(parse_wav({'R', 'I', 'F', 'F'}), DataError);
  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + 30);
  EXPECT_THROW(parse_wav(truncated), DataError);
}
