#include "stftcodec/metrics.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <memory>
#include <regex>
#include <set>

#include "stftcodec/errors.hpp"
#include "stftcodec/losses.hpp"
#include "stftcodec/wav.hpp"

namespace stftcodec {

double lsd(const torch::Tensor& reference, const torch::Tensor& estimate, int64_t sample_rate, const LsdConfig& cfg) {
  if (reference.sizes() != estimate.sizes()) {
    throw InvalidArgument("lsd: shape mismatch " + c10::str(reference.sizes()) + " vs " + c10::str(estimate.sizes()));
  }
  if (reference.numel() == 0) throw InvalidArgument("lsd: empty input");
  torch::NoGradGuard no_grad;
  auto x = reference.detach().to(torch::kFloat64);
  auto y = estimate.detach().to(torch::kFloat64);
  if (x.size(-1) < cfg.win_length) {
    const int64_t extra = cfg.win_length - x.size(-1);
    x = torch::constant_pad_nd(x, {0, extra});
    y = torch::constant_pad_nd(y, {0, extra});
  }
  const MelScale scale{cfg.win_length, cfg.hop_length, cfg.n_mels};
  auto lx = torch::log(torch::clamp_min(mel_spectrogram(x, sample_rate, scale), cfg.floor));
  auto ly = torch::log(torch::clamp_min(mel_spectrogram(y, sample_rate, scale), cfg.floor));
  // [..., mels, frames]: RMS over mels, mean over frames (and batch).
  auto per_frame = (lx - ly).pow(2).mean(-2).sqrt();
  return per_frame.mean().item<double>();
}

std::vector<bool> voicing_decisions(const std::vector<float>& audio, int64_t sample_rate, const VoicingConfig& cfg) {
  const auto hop = static_cast<size_t>(std::lround(sample_rate * cfg.frame_ms / 1000.0));
  const auto win = static_cast<size_t>(std::lround(sample_rate * cfg.window_ms / 1000.0));
  const auto lag_min = static_cast<size_t>(std::floor(sample_rate / cfg.max_f0));
  const auto lag_max = std::min(static_cast<size_t>(std::ceil(sample_rate / cfg.min_f0)), win - 1);
  if (hop == 0 || win < 2 || lag_min < 1 || lag_min > lag_max) {
    throw InvalidArgument("voicing: inconsistent frame/lag configuration");
  }
  if (audio.empty()) return {};

  const size_t frames = audio.size() <= win ? 1 : (audio.size() - win) / hop + 1;
  std::vector<double> energy(frames, 0.0), peak(frames, 0.0);
  std::vector<double> x(win);
  for (size_t f = 0; f < frames; ++f) {
    const size_t start = f * hop;
    double mean = 0.0;
    for (size_t n = 0; n < win; ++n) {
      x[n] = start + n < audio.size() ? audio[start + n] : 0.0;
      mean += x[n];
    }
    mean /= static_cast<double>(win);
    for (auto& v : x) {
      v -= mean;
      energy[f] += v * v;
    }
    if (energy[f] <= 0.0) continue;
    // Prefix sums of x^2 give both window energies for each lag in O(1).
    std::vector<double> cum(win + 1, 0.0);
    for (size_t n = 0; n < win; ++n) cum[n + 1] = cum[n] + x[n] * x[n];
    double best = 0.0;
    for (size_t lag = lag_min; lag <= lag_max; ++lag) {
      double num = 0.0;
      for (size_t n = 0; n + lag < win; ++n) num += x[n] * x[n + lag];
      const double den = std::sqrt(cum[win - lag] * (cum[win] - cum[lag]));
      if (den > 0.0) best = std::max(best, num / den);
    }
    peak[f] = best;
  }

  const double loudest = *std::max_element(energy.begin(), energy.end());
  std::vector<bool> voiced(frames, false);
  if (loudest <= 0.0) return voiced;
  const double gate = loudest * std::pow(10.0, cfg.energy_gate_db / 10.0);
  for (size_t f = 0; f < frames; ++f) voiced[f] = energy[f] >= gate && peak[f] > cfg.threshold;
  return voiced;
}

double f1_score(const std::vector<bool>& reference, const std::vector<bool>& hypothesis) {
  if (reference.size() != hypothesis.size()) {
    throw InvalidArgument("f1: " + std::to_string(reference.size()) + " reference frames vs " +
                          std::to_string(hypothesis.size()));
  }
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < reference.size(); ++i) {
    if (reference[i] && hypothesis[i]) ++tp;
    if (!reference[i] && hypothesis[i]) ++fp;
    if (reference[i] && !hypothesis[i]) ++fn;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

double vuv_f1(const std::vector<float>& reference, const std::vector<float>& estimate, int64_t sample_rate,
              const VoicingConfig& cfg) {
  if (reference.size() != estimate.size()) throw InvalidArgument("vuv_f1: length mismatch");
  return f1_score(voicing_decisions(reference, sample_rate, cfg), voicing_decisions(estimate, sample_rate, cfg));
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

// Runs a command, returning (exit status, combined output).
std::pair<int, std::string> run(const std::string& command) {
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen((command + " 2>&1").c_str(), "r"), pclose);
  if (!pipe) return {-1, "popen failed"};
  std::string output;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe.get())) output += buf.data();
  const int status = pclose(pipe.release());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, output};
}

std::string first_line(const std::string& s) {
  const auto nl = s.find('\n');
  return nl == std::string::npos ? s : s.substr(0, nl);
}

}  // namespace

ExternalMetricResult external_metric(const std::string& name, const std::vector<float>& reference,
                                     const std::vector<float>& estimate, int64_t sample_rate,
                                     const std::filesystem::path& tool_path) {
  ExternalMetricResult result;
  if (tool_path.empty()) {
    result.diagnostic = name + ": no tool configured";
    return result;
  }
  const auto dir = std::filesystem::temp_directory_path() /
                   ("stftcodec-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto ref_path = dir / "reference.wav";
  const auto est_path = dir / "estimate.wav";
  try {
    write_wav(ref_path, {reference, sample_rate}, SampleFormat::kFloat32);
    write_wav(est_path, {estimate, sample_rate}, SampleFormat::kFloat32);
    const std::string tool = shell_quote(tool_path.string());
    auto [version_status, version] = run(tool + " --version");
    if (version_status == 0) result.tool_version = first_line(version);
    auto [status, output] = run(tool + " " + shell_quote(ref_path.string()) + " " + shell_quote(est_path.string()));
    if (status != 0) {
      result.diagnostic = name + ": tool exited with status " + std::to_string(status) + ": " + first_line(output);
    } else {
      static const std::regex number(R"([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
      std::optional<double> last;
      for (std::sregex_iterator it(output.begin(), output.end(), number), end; it != end; ++it) {
        last = std::stod(it->str());
      }
      if (last && std::isfinite(*last)) {
        result.value = last;
      } else {
        result.diagnostic = name + ": no numeric score in tool output";
      }
    }
  } catch (const std::exception& e) {
    result.value.reset();
    result.diagnostic = name + ": " + e.what();
  }
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return result;
}

double EvalReport::mean_lsd() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.lsd;
  return s / static_cast<double>(rows.size());
}

double EvalReport::mean_vuv_f1() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.vuv_f1;
  return s / static_cast<double>(rows.size());
}

namespace {
std::set<std::string> external_names(const std::vector<EvalRow>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows) {
    for (const auto& [name, value] : r.external) names.insert(name);
  }
  return names;
}
}  // namespace

void EvalReport::write_csv(std::ostream& out) const {
  const auto names = external_names(rows);
  out << "file,lsd,vuv_f1,bitrate";
  for (const auto& n : names) out << "," << n;
  out << "\n" << std::setprecision(8);
  for (const auto& r : rows) {
    out << r.file << "," << r.lsd << "," << r.vuv_f1 << "," << r.bitrate;
    for (const auto& n : names) {
      auto it = r.external.find(n);
      out << ",";
      if (it != r.external.end() && it->second.available()) {
        out << *it->second.value;
      } else {
        out << "unavailable";
      }
    }
    out << "\n";
  }
}

void EvalReport::write_summary(std::ostream& out) const {
  out << std::setprecision(6) << "files: " << rows.size() << "\n"
      << "mean_lsd: " << mean_lsd() << "\n"
      << "mean_vuv_f1: " << mean_vuv_f1() << "\n";
  for (const auto& n : external_names(rows)) {
    double sum = 0.0;
    size_t count = 0;
    std::string diagnostic;
    for (const auto& r : rows) {
      auto it = r.external.find(n);
      if (it == r.external.end()) continue;
      if (it->second.available()) {
        sum += *it->second.value;
        ++count;
      } else if (diagnostic.empty()) {
        diagnostic = it->second.diagnostic;
      }
    }
    if (count == 0) {
      out << "mean_" << n << ": unavailable (" << diagnostic << ")\n";
    } else {
      out << "mean_" << n << ": " << sum / static_cast<double>(count) << " over " << count << " files\n";
    }
  }
}

}  // namespace stftcodec
