// stftcodec command-line front end.
//
//   stftcodec train   --config F --data DIR --out DIR
//   stftcodec encode  --model CKPT --in WAV --out STFC [--codebooks N]
//   stftcodec decode  --model CKPT --in STFC --out WAV
//   stftcodec eval    --model CKPT --data DIR --report CSV
//   stftcodec ablate  --config F --data DIR --variants LIST
//   stftcodec inspect --in STFC
//   stftcodec config  [--preset toy] [--config F]
//
// Exit codes: 0 success, 1 usage, 2 data, 3 runtime.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "stftcodec/bitstream.hpp"
#include "stftcodec/config.hpp"
#include "stftcodec/errors.hpp"
#include "stftcodec/metrics.hpp"
#include "stftcodec/trainer.hpp"
#include "stftcodec/wav.hpp"

namespace fs = std::filesystem;
using namespace stftcodec;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct ConfigArgs {
  std::string file;
  std::string preset;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "Config file (default: $" + std::string(kConfigEnvVar) + ")");
    cmd->add_option("--preset", preset, "Base preset before the config file: reference or toy")
        ->check(CLI::IsMember({"reference", "toy"}));
    cmd->add_option("--set", overrides, "Override, e.g. --set train.lr=1e-4")->take_all();
  }

  CliConfig load() const {
    CliConfig cfg;
    if (preset == "toy") {
      cfg.model = ModelConfig::toy();
      cfg.discriminators = DiscriminatorConfig::toy();
    }
    std::string path = file;
    if (path.empty()) {
      if (const char* env = std::getenv(kConfigEnvVar)) path = env;
    }
    if (!path.empty()) cfg.load_file(path);
    for (const auto& o : overrides) cfg.apply_override(o);
    cfg.finalize();
    return cfg;
  }
};

std::string format_bitrate(double bps) {
  std::ostringstream os;
  if (bps == std::floor(bps)) {
    os << static_cast<int64_t>(bps);
  } else {
    os << std::fixed << std::setprecision(3) << bps;
  }
  return os.str();
}

std::string hex(const ModelHash& h) {
  std::ostringstream os;
  for (auto b : h) os << std::hex << std::setw(2) << std::setfill('0') << int(b);
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

int run_train(const ConfigArgs& ca, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume) {
  const CliConfig cfg = ca.load();
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "config.toml", cfg.dump());

  auto data = AudioDataset::from_directory(data_dir, cfg.model.stft.sample_rate, cfg.train.chunk_samples,
                                           cfg.train.seed);
  Trainer trainer(cfg.model, cfg.discriminators, cfg.loss, cfg.train);
  const auto files = static_cast<int64_t>(data.num_files());
  trainer.set_steps_per_epoch((files + cfg.train.batch_size - 1) / cfg.train.batch_size);
  if (!resume.empty()) trainer.load_checkpoint(resume, &data);

  const fs::path log_path = fs::path(out_dir) / "losses.csv";
  const bool fresh_log = !fs::exists(log_path) || resume.empty();
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot write " + log_path.string());
  if (fresh_log) write_loss_csv_header(log);

  std::cerr << "training on " << files << " files, config hash " << cfg.hash() << "\n";
  const auto start = std::chrono::steady_clock::now();
  while (trainer.step_count() < cfg.train.max_steps) {
    const double lr = trainer.current_lr();
    auto report = trainer.step(data);
    const int64_t s = trainer.step_count();
    write_loss_csv_row(log, s, report, lr);
    if (s % cfg.train.log_every == 0) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "step " << s << " mel " << report.mel << " total_g " << report.total_g << " total_d "
                << report.total_d << " (" << static_cast<int64_t>(elapsed) << " s)\n";
      log.flush();
    }
    if (s % cfg.train.checkpoint_every == 0) {
      trainer.save_checkpoint(fs::path(out_dir) / ("checkpoint_" + std::to_string(s) + ".pt"), &data);
    }
  }
  trainer.save_checkpoint(fs::path(out_dir) / "latest.pt", &data);
  std::cerr << "wrote " << (fs::path(out_dir) / "latest.pt").string() << "\n";
  return kOk;
}

int run_encode(const std::string& model_path, const std::string& in, const std::string& out, int64_t codebooks) {
  auto model = load_codec_model(model_path);
  auto stream = encode_file(in, model, codebooks);
  write_bitstream(out, stream);
  std::cout << "frames: " << stream.header.num_latent_frames << "\n"
            << "bitrate: " << format_bitrate(bitrate(stream.header)) << " bps\n";
  return kOk;
}

int run_decode(const std::string& model_path, const std::string& in, const std::string& out, bool ignore_hash,
               bool as_float) {
  auto model = load_codec_model(model_path);
  auto wav = decode_file(read_bitstream(in), model, ignore_hash);
  write_wav(out, wav, as_float ? SampleFormat::kFloat32 : SampleFormat::kPcm16);
  std::cout << "samples: " << wav.samples.size() << "\n";
  return kOk;
}

int run_eval(const ConfigArgs& ca, const std::string& model_path, const std::string& data_dir,
             const std::string& report_path, int64_t codebooks) {
  const CliConfig cfg = ca.load();
  auto model = load_codec_model(model_path);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(data_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("eval: no .wav files under " + data_dir);

  EvalReport report;
  for (const auto& f : files) {
    const auto wav = read_wav(f);
    const auto stream = encode_audio(model, wav.samples, wav.sample_rate, codebooks);
    const auto decoded = decode_bitstream(stream, model);
    EvalRow row;
    row.file = fs::relative(f, data_dir).string();
    auto ref = torch::from_blob(const_cast<float*>(wav.samples.data()), {static_cast<int64_t>(wav.samples.size())});
    auto est = torch::from_blob(const_cast<float*>(decoded.data()), {static_cast<int64_t>(decoded.size())});
    row.lsd = lsd(ref, est, wav.sample_rate);
    row.vuv_f1 = vuv_f1(wav.samples, decoded, wav.sample_rate);
    row.bitrate = bitrate(stream.header);
    for (const auto& [name, tool] : cfg.external_tools) {
      row.external[name] = external_metric(name, wav.samples, decoded, wav.sample_rate, tool);
    }
    report.rows.push_back(std::move(row));
  }
  std::ofstream out(report_path);
  if (!out) throw DataError("cannot write " + report_path);
  report.write_csv(out);
  report.write_summary(std::cout);
  return kOk;
}

int run_ablate(const ConfigArgs& ca, const std::string& data_dir, const std::string& variants_arg, int64_t steps,
               const std::string& table_path) {
  const CliConfig cfg = ca.load();
  std::vector<AblationVariant> variants;
  if (variants_arg == "all") {
    variants = all_ablation_variants();
  } else {
    std::stringstream ss(variants_arg);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty()) variants.push_back(ablation_variant_from_string(name));
    }
  }
  if (variants.empty()) throw InvalidArgument("ablate: --variants is empty");
  const auto data = AudioDataset::from_directory(data_dir, cfg.model.stft.sample_rate, cfg.train.chunk_samples,
                                                 cfg.train.seed);
  const int64_t n = steps > 0 ? steps : cfg.train.max_steps;
  auto rows = run_ablation(variants, cfg.model, cfg.discriminators, cfg.loss, cfg.train, data, n,
                           [&](AblationVariant v, int64_t s, const LossReport& r) {
                             if (s % cfg.train.log_every == 0) {
                               std::cerr << to_string(v) << " step " << s << " total_g " << r.total_g << "\n";
                             }
                           });
  write_ablation_table(std::cout, rows);
  if (!table_path.empty()) {
    std::ofstream out(table_path);
    if (!out) throw DataError("cannot write " + table_path);
    write_ablation_table(out, rows);
  }
  return kOk;
}

int run_inspect(const std::string& in) {
  const auto s = read_bitstream(in);
  const auto& h = s.header;
  std::cout << "version: " << int(h.version) << "\n"
            << "sample_rate: " << h.sample_rate << "\n"
            << "hop_length: " << h.hop_length << "\n"
            << "fft_size: " << h.fft_size << "\n"
            << "win_length: " << h.win_length << "\n"
            << "downsample_ratio: " << int(h.downsample_ratio) << "\n"
            << "num_codebooks: " << h.codebook_sizes.size() << "\n"
            << "codebook_sizes:";
  for (auto c : h.codebook_sizes) std::cout << " " << c;
  std::cout << "\n"
            << "num_latent_frames: " << h.num_latent_frames << "\n"
            << "original_num_samples: " << h.original_num_samples << "\n"
            << "model_hash: " << hex(h.model_hash) << "\n"
            << "payload_bytes: " << s.payload.size() << "\n"
            << "bitrate: " << format_bitrate(bitrate(h)) << " bps\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STFT-domain neural speech codec"};
  app.require_subcommand(1);

  ConfigArgs train_cfg, eval_cfg, ablate_cfg, show_cfg;
  std::string data_dir, out_dir, resume, model_path, in_path, out_path, report_path, variants, table_path;
  int64_t codebooks = -1, steps = 0;
  bool ignore_hash = false, as_float = false;

  auto* train = app.add_subcommand("train", "Train a codec");
  train_cfg.attach(train);
  train->add_option("--data", data_dir, "Directory of training .wav files")->required();
  train->add_option("--out", out_dir, "Output directory for checkpoints and logs")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");

  auto* encode = app.add_subcommand("encode", "Compress a .wav file");
  encode->add_option("--model", model_path, "Checkpoint")->required();
  encode->add_option("--in", in_path, "Input .wav")->required();
  encode->add_option("--out", out_path, "Output .stfc")->required();
  encode->add_option("--codebooks", codebooks, "Use only the first N codebooks")->check(CLI::PositiveNumber);

  auto* decode = app.add_subcommand("decode", "Decompress a .stfc file");
  decode->add_option("--model", model_path, "Checkpoint")->required();
  decode->add_option("--in", in_path, "Input .stfc")->required();
  decode->add_option("--out", out_path, "Output .wav")->required();
  decode->add_flag("--ignore-hash", ignore_hash, "Decode even if the stream came from another model");
  decode->add_flag("--float", as_float, "Write 32-bit float samples instead of 16-bit PCM");

  auto* eval = app.add_subcommand("eval", "Encode/decode a corpus and report objective metrics");
  eval_cfg.attach(eval);
  eval->add_option("--model", model_path, "Checkpoint")->required();
  eval->add_option("--data", data_dir, "Directory of reference .wav files")->required();
  eval->add_option("--report", report_path, "Per-file CSV report")->required();
  eval->add_option("--codebooks", codebooks, "Use only the first N codebooks")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Train and compare ablation variants");
  ablate_cfg.attach(ablate);
  ablate->add_option("--data", data_dir, "Directory of training .wav files")->required();
  ablate->add_option("--variants", variants,
                     "Comma list of full,no_unwrap,no_convnext,single_scale,spectral_recon or 'all'")
      ->required();
  ablate->add_option("--steps", steps, "Steps per variant (default: train.max_steps)");
  ablate->add_option("--table", table_path, "Also write the markdown table here");

  auto* inspect = app.add_subcommand("inspect", "Print a .stfc header and its bitrate");
  inspect->add_option("--in", in_path, "Input .stfc")->required();

  auto* config = app.add_subcommand("config", "Print the effective configuration");
  show_cfg.attach(config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*train) return run_train(train_cfg, data_dir, out_dir, resume);
    if (*encode) return run_encode(model_path, in_path, out_path, codebooks);
    if (*decode) return run_decode(model_path, in_path, out_path, ignore_hash, as_float);
    if (*eval) return run_eval(eval_cfg, model_path, data_dir, report_path, codebooks);
    if (*ablate) return run_ablate(ablate_cfg, data_dir, variants, steps, table_path);
    if (*inspect) return run_inspect(in_path);
    if (*config) {
      const auto cfg = show_cfg.load();
      std::cout << cfg.dump() << "\n# hash: " << cfg.hash() << "\n";
      return kOk;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
