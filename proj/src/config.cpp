#include "stftcodec/config.hpp"

#include <openssl/evp.h>

#include <boost/program_options.hpp>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "stftcodec/errors.hpp"

namespace po = boost::program_options;

namespace stftcodec {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InvalidArgument("config: " + key + " expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InvalidArgument("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<int64_t> parse_list(const std::string& key, std::string v) {
  if (!v.empty() && v.front() == '[') v.erase(v.begin());
  if (!v.empty() && v.back() == ']') v.pop_back();
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  if (out.empty()) throw InvalidArgument("config: " + key + " expects a non-empty list");
  return out;
}

std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::string format_list(const std::vector<int64_t>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

struct Field {
  std::function<std::string(const CliConfig&)> get;
  std::function<void(CliConfig&, const std::string&)> set;
};

// Ordered registry of every key; the order is the dump order.
const std::vector<std::pair<std::string, Field>>& registry() {
  static const auto fields = [] {
    std::vector<std::pair<std::string, Field>> f;
    auto add_int = [&f](const std::string& key, std::function<int64_t&(CliConfig&)> ref) {
      f.emplace_back(key, Field{[ref](const CliConfig& c) { return std::to_string(ref(const_cast<CliConfig&>(c))); },
                                [ref, key](CliConfig& c, const std::string& v) { ref(c) = parse_int(key, v); }});
    };
    auto add_double = [&f](const std::string& key, std::function<double&(CliConfig&)> ref) {
      f.emplace_back(key, Field{[ref](const CliConfig& c) { return format_double(ref(const_cast<CliConfig&>(c))); },
                                [ref, key](CliConfig& c, const std::string& v) { ref(c) = parse_double(key, v); }});
    };
    auto add_bool = [&f](const std::string& key, std::function<bool&(CliConfig&)> ref) {
      f.emplace_back(key, Field{[ref](const CliConfig& c) {
                                  return std::string(ref(const_cast<CliConfig&>(c)) ? "true" : "false");
                                },
                                [ref, key](CliConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); }});
    };
    auto add_list = [&f](const std::string& key, std::function<std::vector<int64_t>&(CliConfig&)> ref) {
      f.emplace_back(key, Field{[ref](const CliConfig& c) { return format_list(ref(const_cast<CliConfig&>(c))); },
                                [ref, key](CliConfig& c, const std::string& v) { ref(c) = parse_list(key, v); }});
    };

    add_int("stft.fft_size", [](CliConfig& c) -> int64_t& { return c.model.stft.fft_size; });
    add_int("stft.win_length", [](CliConfig& c) -> int64_t& { return c.model.stft.win_length; });
    add_int("stft.hop_length", [](CliConfig& c) -> int64_t& { return c.model.stft.hop_length; });
    f.emplace_back("stft.window",
                   Field{[](const CliConfig& c) { return to_string(c.model.stft.window); },
                         [](CliConfig& c, const std::string& v) { c.model.stft.window = window_from_string(v); }});
    add_int("stft.sample_rate", [](CliConfig& c) -> int64_t& { return c.model.stft.sample_rate; });

    add_int("generator.mag_channels", [](CliConfig& c) -> int64_t& { return c.model.generator.mag_channels; });
    add_int("generator.phase_channels", [](CliConfig& c) -> int64_t& { return c.model.generator.phase_channels; });
    add_int("generator.grad_channels", [](CliConfig& c) -> int64_t& { return c.model.generator.grad_channels; });
    add_int("generator.latent_channels", [](CliConfig& c) -> int64_t& { return c.model.generator.latent_channels; });
    add_int("generator.downsample_stages",
            [](CliConfig& c) -> int64_t& { return c.model.generator.downsample_stages; });
    add_int("generator.convnext_blocks_enc",
            [](CliConfig& c) -> int64_t& { return c.model.generator.convnext_blocks_enc; });
    add_int("generator.convnext_blocks_dec",
            [](CliConfig& c) -> int64_t& { return c.model.generator.convnext_blocks_dec; });
    add_int("generator.decoder_head_channels",
            [](CliConfig& c) -> int64_t& { return c.model.generator.decoder_head_channels; });
    add_int("generator.convnext_kernel", [](CliConfig& c) -> int64_t& { return c.model.generator.convnext_kernel; });
    add_int("generator.convnext_expansion",
            [](CliConfig& c) -> int64_t& { return c.model.generator.convnext_expansion; });
    add_bool("generator.attention_encoder", [](CliConfig& c) -> bool& { return c.model.generator.attention_encoder; });
    add_bool("generator.attention_decoder", [](CliConfig& c) -> bool& { return c.model.generator.attention_decoder; });
    add_bool("generator.use_convnext", [](CliConfig& c) -> bool& { return c.model.generator.use_convnext; });

    f.emplace_back("codebooks.num_codebooks",
                   Field{[](const CliConfig& c) { return std::to_string(c.model.codebooks.num_codebooks); },
                         [](CliConfig& c, const std::string& v) {
                           auto& cb = c.model.codebooks;
                           cb.num_codebooks = parse_int("codebooks.num_codebooks", v);
                           if (cb.num_codebooks < 1) throw InvalidArgument("config: codebooks.num_codebooks must be >= 1");
                           cb.sizes.resize(cb.num_codebooks, cb.sizes.empty() ? 1024 : cb.sizes.back());
                         }});
    f.emplace_back("codebooks.sizes", Field{[](const CliConfig& c) { return format_list(c.model.codebooks.sizes); },
                                            [](CliConfig& c, const std::string& v) {
                                              auto& cb = c.model.codebooks;
                                              cb.sizes = parse_list("codebooks.sizes", v);
                                              cb.num_codebooks = static_cast<int64_t>(cb.sizes.size());
                                            }});
    add_int("codebooks.code_dim", [](CliConfig& c) -> int64_t& { return c.model.codebooks.code_dim; });

    add_list("discriminator.periods", [](CliConfig& c) -> std::vector<int64_t>& { return c.discriminators.periods; });
    add_list("discriminator.mpd_channels",
             [](CliConfig& c) -> std::vector<int64_t>& { return c.discriminators.mpd_channels; });
    add_list("discriminator.stft_sizes",
             [](CliConfig& c) -> std::vector<int64_t>& { return c.discriminators.stft_sizes; });
    add_int("discriminator.stft_filters", [](CliConfig& c) -> int64_t& { return c.discriminators.stft_filters; });

    add_double("loss.lambda_mel", [](CliConfig& c) -> double& { return c.loss.lambda_mel; });
    add_double("loss.lambda_feat", [](CliConfig& c) -> double& { return c.loss.lambda_feat; });
    add_double("loss.lambda_commit", [](CliConfig& c) -> double& { return c.loss.lambda_commit; });

    add_int("train.chunk_samples", [](CliConfig& c) -> int64_t& { return c.train.chunk_samples; });
    add_int("train.batch_size", [](CliConfig& c) -> int64_t& { return c.train.batch_size; });
    add_double("train.lr", [](CliConfig& c) -> double& { return c.train.lr; });
    add_double("train.beta1", [](CliConfig& c) -> double& { return c.train.beta1; });
    add_double("train.beta2", [](CliConfig& c) -> double& { return c.train.beta2; });
    add_double("train.weight_decay", [](CliConfig& c) -> double& { return c.train.weight_decay; });
    add_double("train.lr_decay", [](CliConfig& c) -> double& { return c.train.lr_decay; });
    add_bool("train.decay_per_step", [](CliConfig& c) -> bool& { return c.train.decay_per_step; });
    add_int("train.max_steps", [](CliConfig& c) -> int64_t& { return c.train.max_steps; });
    f.emplace_back("train.seed", Field{[](const CliConfig& c) { return std::to_string(c.train.seed); },
                                       [](CliConfig& c, const std::string& v) {
                                         const auto s = parse_int("train.seed", v);
                                         if (s < 0) throw InvalidArgument("config: train.seed must be >= 0");
                                         c.train.seed = static_cast<uint64_t>(s);
                                       }});
    add_int("train.adversarial_start_step", [](CliConfig& c) -> int64_t& { return c.train.adversarial_start_step; });
    add_int("train.log_every", [](CliConfig& c) -> int64_t& { return c.train.log_every; });
    add_int("train.checkpoint_every", [](CliConfig& c) -> int64_t& { return c.train.checkpoint_every; });

    add_bool("ablation.no_unwrap", [](CliConfig& c) -> bool& { return c.train.ablation.no_unwrap; });
    add_bool("ablation.no_convnext", [](CliConfig& c) -> bool& { return c.train.ablation.no_convnext; });
    add_bool("ablation.single_scale_disc", [](CliConfig& c) -> bool& { return c.train.ablation.single_scale_disc; });
    add_bool("ablation.spectral_recon", [](CliConfig& c) -> bool& { return c.train.ablation.spectral_recon; });
    return f;
  }();
  return fields;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : registry()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

void CliConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key.rfind("metrics.", 0) == 0 && key.size() > 8) {
    external_tools[key.substr(8)] = value;
    return;
  }
  const Field* field = find_field(key);
  if (!field) throw InvalidArgument("config: unknown key '" + key + "'");
  try {
    field->set(*this, value);
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    // Integer parse errors from generic setters lack the key name.
    if (msg.find(key) == std::string::npos) throw InvalidArgument("config: " + key + ": " + msg);
    throw;
  } catch (const std::exception& e) {
    throw InvalidArgument("config: " + key + ": " + e.what());
  }
}

void CliConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidArgument("config: override must look like section.key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void CliConfig::load_string(const std::string& text) {
  std::istringstream in(text);
  po::parsed_options parsed{nullptr};
  try {
    po::options_description none;
    parsed = po::parse_config_file(in, none, /*allow_unregistered=*/true);
  } catch (const po::error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  for (const auto& opt : parsed.options) {
    if (opt.value.empty()) throw InvalidArgument("config: key '" + opt.string_key + "' has no value");
    set(opt.string_key, opt.value.front());
  }
}

void CliConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_string(ss.str());
}

void CliConfig::finalize() {
  model.generator.freq_bins = model.stft.num_bins();
  model.codebooks.input_dim = model.generator.latent_channels;
  model.codebooks.num_codebooks = static_cast<int64_t>(model.codebooks.sizes.size());
  loss.spectral_recon_enabled = train.ablation.spectral_recon;
  if (model.stft.sample_rate != 48000 && train.chunk_samples == TrainConfig::default_chunk_samples(48000)) {
    train.chunk_samples = TrainConfig::default_chunk_samples(model.stft.sample_rate);
  }
  model.validate();
  discriminators.validate();
  loss.validate();
  train.validate(model.stft);
}

std::string CliConfig::dump() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, field] : registry()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    std::string value = field.get(*this);
    if (key == "stft.window") value = "\"" + value + "\"";
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
  if (!external_tools.empty()) {
    out << "\n[metrics]\n";
    for (const auto& [name, tool] : external_tools) out << name << " = \"" << tool << "\"\n";
  }
  return out.str();
}

std::string CliConfig::hash() const { return sha256_hex(dump()); }

std::vector<std::string> CliConfig::keys() const {
  std::vector<std::string> k;
  for (const auto& entry : registry()) k.push_back(entry.first);
  for (const auto& [name, tool] : external_tools) k.push_back("metrics." + name);
  return k;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < length; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

// JSON converters (checkpoint metadata).

void to_json(nlohmann::json& j, const StftConfig& c) {
  j = {{"fft_size", c.fft_size},
       {"win_length", c.win_length},
       {"hop_length", c.hop_length},
       {"window", to_string(c.window)},
       {"sample_rate", c.sample_rate}};
}
void from_json(const nlohmann::json& j, StftConfig& c) {
  j.at("fft_size").get_to(c.fft_size);
  j.at("win_length").get_to(c.win_length);
  j.at("hop_length").get_to(c.hop_length);
  c.window = window_from_string(j.at("window").get<std::string>());
  j.at("sample_rate").get_to(c.sample_rate);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"freq_bins", c.freq_bins},
       {"mag_channels", c.mag_channels},
       {"phase_channels", c.phase_channels},
       {"grad_channels", c.grad_channels},
       {"latent_channels", c.latent_channels},
       {"downsample_stages", c.downsample_stages},
       {"convnext_blocks_enc", c.convnext_blocks_enc},
       {"convnext_blocks_dec", c.convnext_blocks_dec},
       {"decoder_head_channels", c.decoder_head_channels},
       {"convnext_kernel", c.convnext_kernel},
       {"convnext_expansion", c.convnext_expansion},
       {"attention_encoder", c.attention_encoder},
       {"attention_decoder", c.attention_decoder},
       {"use_convnext", c.use_convnext}};
}
void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  j.at("freq_bins").get_to(c.freq_bins);
  j.at("mag_channels").get_to(c.mag_channels);
  j.at("phase_channels").get_to(c.phase_channels);
  j.at("grad_channels").get_to(c.grad_channels);
  j.at("latent_channels").get_to(c.latent_channels);
  j.at("downsample_stages").get_to(c.downsample_stages);
  j.at("convnext_blocks_enc").get_to(c.convnext_blocks_enc);
  j.at("convnext_blocks_dec").get_to(c.convnext_blocks_dec);
  j.at("decoder_head_channels").get_to(c.decoder_head_channels);
  j.at("convnext_kernel").get_to(c.convnext_kernel);
  j.at("convnext_expansion").get_to(c.convnext_expansion);
  j.at("attention_encoder").get_to(c.attention_encoder);
  j.at("attention_decoder").get_to(c.attention_decoder);
  j.at("use_convnext").get_to(c.use_convnext);
}

void to_json(nlohmann::json& j, const CodebookSpec& c) {
  j = {{"num_codebooks", c.num_codebooks}, {"sizes", c.sizes}, {"code_dim", c.code_dim}, {"input_dim", c.input_dim}};
}
void from_json(const nlohmann::json& j, CodebookSpec& c) {
  j.at("num_codebooks").get_to(c.num_codebooks);
  j.at("sizes").get_to(c.sizes);
  j.at("code_dim").get_to(c.code_dim);
  j.at("input_dim").get_to(c.input_dim);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"stft", c.stft}, {"generator", c.generator}, {"codebooks", c.codebooks}};
}
void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("stft").get_to(c.stft);
  j.at("generator").get_to(c.generator);
  j.at("codebooks").get_to(c.codebooks);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"periods", c.periods},
       {"mpd_channels", c.mpd_channels},
       {"stft_sizes", c.stft_sizes},
       {"stft_filters", c.stft_filters}};
}
void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  j.at("periods").get_to(c.periods);
  j.at("mpd_channels").get_to(c.mpd_channels);
  j.at("stft_sizes").get_to(c.stft_sizes);
  j.at("stft_filters").get_to(c.stft_filters);
}

void to_json(nlohmann::json& j, const LossWeights& c) {
  j = {{"lambda_mel", c.lambda_mel},
       {"lambda_feat", c.lambda_feat},
       {"lambda_commit", c.lambda_commit},
       {"spectral_recon_enabled", c.spectral_recon_enabled}};
}
void from_json(const nlohmann::json& j, LossWeights& c) {
  j.at("lambda_mel").get_to(c.lambda_mel);
  j.at("lambda_feat").get_to(c.lambda_feat);
  j.at("lambda_commit").get_to(c.lambda_commit);
  j.at("spectral_recon_enabled").get_to(c.spectral_recon_enabled);
}

void to_json(nlohmann::json& j, const AblationFlags& c) {
  j = {{"no_unwrap", c.no_unwrap},
       {"no_convnext", c.no_convnext},
       {"single_scale_disc", c.single_scale_disc},
       {"spectral_recon", c.spectral_recon}};
}
void from_json(const nlohmann::json& j, AblationFlags& c) {
  j.at("no_unwrap").get_to(c.no_unwrap);
  j.at("no_convnext").get_to(c.no_convnext);
  j.at("single_scale_disc").get_to(c.single_scale_disc);
  j.at("spectral_recon").get_to(c.spectral_recon);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"chunk_samples", c.chunk_samples},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"weight_decay", c.weight_decay},
       {"lr_decay", c.lr_decay},
       {"decay_per_step", c.decay_per_step},
       {"max_steps", c.max_steps},
       {"seed", c.seed},
       {"adversarial_start_step", c.adversarial_start_step},
       {"log_every", c.log_every},
       {"checkpoint_every", c.checkpoint_every},
       {"ablation", c.ablation}};
}
void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("chunk_samples").get_to(c.chunk_samples);
  j.at("batch_size").get_to(c.batch_size);
  j.at("lr").get_to(c.lr);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("lr_decay").get_to(c.lr_decay);
  j.at("decay_per_step").get_to(c.decay_per_step);
  j.at("max_steps").get_to(c.max_steps);
  j.at("seed").get_to(c.seed);
  j.at("adversarial_start_step").get_to(c.adversarial_start_step);
  j.at("log_every").get_to(c.log_every);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("ablation").get_to(c.ablation);
}

}  // namespace stftcodec
