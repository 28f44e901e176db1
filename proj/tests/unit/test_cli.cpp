#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "stftcodec/bitstream.hpp"
#include "stftcodec/codec_model.hpp"
#include "stftcodec/wav.hpp"
#include "test_util.hpp"

using namespace stftcodec;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run(const std::string& args, const std::filesystem::path& scratch) {
  const auto out_file = scratch / "stdout.txt";
  const std::string cmd = std::string(STFTCODEC_CLI) + " " + args + " > " + out_file.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  testutil::TempDir dir("cli");
  EXPECT_EQ(run("--no-such-flag", dir.path()).status, 1);
  EXPECT_EQ(run("encode --in x.wav", dir.path()).status, 1);
  EXPECT_EQ(run("config --set train.nope=1", dir.path()).status, 1);
  EXPECT_EQ(run("", dir.path()).status, 1);
}

TEST(Cli, ConfigPrintsEffectiveSettings) {
  testutil::TempDir dir("cli");
  auto r = run("config --preset toy --set train.lr=0.002", dir.path());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("lr = 0.002"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("# hash: "), std::string::npos);
}

TEST(Cli, InspectReportsReferenceBitrate) {
  testutil::TempDir dir("cli");
  Bitstream s;
  s.header.codebook_sizes = std::vector<uint16_t>(8, 1024);
  s.header.num_latent_frames = 150;
  s.header.original_num_samples = 48000;
  s.payload = pack_tokens(torch::zeros({8, 150}, torch::kLong), s.header.codebook_sizes);
  write_bitstream(dir / "ref.stfc", s);
  auto r = run("inspect --in " + (dir / "ref.stfc").string(), dir.path());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("bitrate: 12000 bps"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("payload_bytes: 1500"), std::string::npos) << r.out;

  write_wav(dir / "x.wav", {testutil::tone(100, 200.0), 48000}, SampleFormat::kPcm16);
  EXPECT_EQ(run("inspect --in " + (dir / "x.wav").string(), dir.path()).status, 2);
}

TEST(Cli, EncodeDecodeRestoresLength) {
  testutil::TempDir dir("cli");
  torch::manual_seed(0);
  CodecModel model(ModelConfig::toy());
  save_codec_model(model, dir / "m.pt");
  write_wav(dir / "in.wav", {testutil::speechlike(7777), 48000}, SampleFormat::kPcm16);
  const std::string m = " --model " + (dir / "m.pt").string();
  auto enc = run("encode" + m + " --in " + (dir / "in.wav").string() + " --out " + (dir / "a.stfc").string() +
                     " --codebooks 2",
                 dir.path());
  ASSERT_EQ(enc.status, 0) << enc.out;
  auto dec = run("decode" + m + " --in " + (dir / "a.stfc").string() + " --out " + (dir / "out.wav").string(),
                 dir.path());
  ASSERT_EQ(dec.status, 0) << dec.out;
  auto out = read_wav(dir / "out.wav");
  EXPECT_EQ(out.samples.size(), 7777u);
  EXPECT_EQ(out.sample_rate, 48000);
  EXPECT_EQ(read_bitstream(dir / "a.stfc").header.codebook_sizes.size(), 2u);

  // A stream from a different model is refused unless asked.
  torch::manual_seed(1);
  CodecModel other(ModelConfig::toy());
  save_codec_model(other, dir / "other.pt");
  const std::string o = " --model " + (dir / "other.pt").string();
  EXPECT_EQ(run("decode" + o + " --in " + (dir / "a.stfc").string() + " --out " + (dir / "o.wav").string(),
                dir.path())
                .status,
            2);
  EXPECT_EQ(run("decode" + o + " --ignore-hash --in " + (dir / "a.stfc").string() + " --out " +
                    (dir / "o.wav").string(),
                dir.path())
                .status,
            0);
}

TEST(Cli, TrainWritesCheckpointAndLog) {
  testutil::TempDir dir("cli");
  std::filesystem::create_directories(dir / "data");
  write_wav(dir / "data" / "a.wav", {testutil::speechlike(6000), 48000}, SampleFormat::kPcm16);
  auto r = run("train --preset toy --data " + (dir / "data").string() + " --out " + (dir / "run").string() +
                   " --set train.max_steps=1 --set train.batch_size=1 --set train.chunk_samples=4000",
               dir.path());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "latest.pt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "config.toml"));
  std::ifstream log(dir / "run" / "losses.csv");
  std::string header, row;
  std::getline(log, header);
  std::getline(log, row);
  EXPECT_EQ(header.rfind("step,mel", 0), 0u);
  EXPECT_EQ(row.rfind("1,", 0), 0u);
  EXPECT_EQ(run("train --preset toy --data " + (dir / "nothing").string() + " --out " + (dir / "r2").string(),
                dir.path())
                .status,
            2);
}
