#include "spasvc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "spasvc/error.hpp"

namespace spasvc {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw std::invalid_argument("expected an integer");
  return static_cast<int>(out);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
  return out;
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("expected a number");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true or false");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<void(SvcConfig&, const std::string&)> set;
  std::function<std::string(const SvcConfig&)> get;
};

#define SPASVC_INT(key, field) \
  Key{key, [](SvcConfig& c, const std::string& v) { c.field = to_int(v); }, [](const SvcConfig& c) { return std::to_string(c.field); }}
#define SPASVC_DBL(key, field) \
  Key{key, [](SvcConfig& c, const std::string& v) { c.field = to_double(v); }, [](const SvcConfig& c) { return fmt(c.field); }}
#define SPASVC_BOOL(key, field) \
  Key{key, [](SvcConfig& c, const std::string& v) { c.field = to_bool(v); }, [](const SvcConfig& c) { return fmt_bool(c.field); }}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      SPASVC_INT("sample_rate", mel.sample_rate),
      SPASVC_INT("hop", mel.hop),
      SPASVC_INT("n_fft", mel.n_fft),
      SPASVC_INT("n_mels", mel.n_mels),
      SPASVC_DBL("fmin", mel.fmin),
      SPASVC_DBL("fmax", mel.fmax),
      SPASVC_DBL("mel_log_floor", mel.log_floor),
      SPASVC_DBL("f0_min", f0.fmin),
      SPASVC_DBL("f0_max", f0.fmax),
      SPASVC_DBL("f0_threshold", f0.threshold),
      SPASVC_DBL("f0_voicing_threshold", f0.voicing_threshold),
      SPASVC_DBL("f0_silence_rms", f0.silence_rms),
      SPASVC_DBL("f0_lowpass_hz", f0.lowpass_hz),
      SPASVC_INT("content_sample_rate", content.sample_rate),
      SPASVC_INT("content_hop", content.hop),
      SPASVC_INT("content_n_fft", content.n_fft),
      SPASVC_INT("content_dim", content.dim),
      SPASVC_INT("ddsp_hidden", ddsp.hidden),
      SPASVC_INT("ddsp_layers", ddsp.layers),
      SPASVC_INT("ddsp_kernel", ddsp.kernel),
      SPASVC_INT("n_speakers", ddsp.n_speakers),
      SPASVC_DBL("ddsp_amp_scale", ddsp.amp_scale),
      SPASVC_DBL("ddsp_noise_scale", ddsp.noise_scale),
      SPASVC_INT("diffusion_steps", diffusion_steps),
      SPASVC_DBL("beta_start", beta_start),
      SPASVC_DBL("beta_end", beta_end),
      SPASVC_INT("diffusion_k", diffusion_k),
      SPASVC_INT("denoiser_layers", denoiser.layers),
      SPASVC_INT("denoiser_channels", denoiser.channels),
      SPASVC_INT("denoiser_kernel", denoiser.kernel),
      SPASVC_INT("denoiser_dilation_cycle", denoiser.dilation_cycle),
      SPASVC_INT("t_embed_dim", denoiser.t_embed_dim),
      Key{"ssim_variant",
          [](SvcConfig& c, const std::string& v) {
            if (v == "standard") c.ssim.variant = SsimVariant::Standard;
            else if (v == "paper") c.ssim.variant = SsimVariant::Paper;
            else throw std::invalid_argument("expected standard or paper");
          },
          [](const SvcConfig& c) { return std::string(c.ssim.variant == SsimVariant::Paper ? "paper" : "standard"); }},
      Key{"ssim_window",
          [](SvcConfig& c, const std::string& v) {
            if (v == "sliding") c.ssim.window = SsimWindow::Sliding;
            else if (v == "global") c.ssim.window = SsimWindow::Global;
            else throw std::invalid_argument("expected sliding or global");
          },
          [](const SvcConfig& c) { return std::string(c.ssim.window == SsimWindow::Global ? "global" : "sliding"); }},
      SPASVC_INT("ssim_window_size", ssim.window_size),
      SPASVC_DBL("ssim_window_sigma", ssim.window_sigma),
      SPASVC_DBL("ssim_k1", ssim.k1),
      SPASVC_DBL("ssim_k2", ssim.k2),
      SPASVC_INT("vocoder_harmonics", vocoder.n_harmonics),
      SPASVC_DBL("vocoder_noise_gain", vocoder.noise_gain),
      SPASVC_INT("vocoder_fit_iterations", vocoder.fit_iterations),
      SPASVC_DBL("lr", train.lr),
      SPASVC_INT("batch_size", train.batch_size),
      SPASVC_INT("max_steps", train.max_steps),
      SPASVC_DBL("beta1", train.beta1),
      SPASVC_DBL("beta2", train.beta2),
      SPASVC_DBL("weight_decay", train.weight_decay),
      SPASVC_DBL("sched_gamma", train.sched_gamma),
      SPASVC_INT("sched_step", train.sched_step),
      SPASVC_DBL("cycle_prob", train.cycle_prob),
      Key{"loss_kind",
          [](SvcConfig& c, const std::string& v) {
            if (v == "ssim") c.train.loss_kind = LossKind::Ssim;
            else if (v == "mse") c.train.loss_kind = LossKind::Mse;
            else throw std::invalid_argument("expected ssim or mse");
          },
          [](const SvcConfig& c) { return std::string(c.train.loss_kind == LossKind::Mse ? "mse" : "ssim"); }},
      SPASVC_DBL("lambda_cyc", train.lambda_cyc),
      Key{"seed", [](SvcConfig& c, const std::string& v) { c.train.seed = to_u64(v); },
          [](const SvcConfig& c) { return std::to_string(c.train.seed); }},
      SPASVC_INT("cycle_key_min", train.cycle_key_min),
      SPASVC_INT("cycle_key_max", train.cycle_key_max),
      Key{"cycle_direction",
          [](SvcConfig& c, const std::string& v) {
            if (v == "up") c.train.cycle_direction = CycleDirection::Up;
            else if (v == "down") c.train.cycle_direction = CycleDirection::Down;
            else if (v == "both") c.train.cycle_direction = CycleDirection::Both;
            else throw std::invalid_argument("expected up, down or both");
          },
          [](const SvcConfig& c) {
            switch (c.train.cycle_direction) {
              case CycleDirection::Down: return std::string("down");
              case CycleDirection::Both: return std::string("both");
              default: return std::string("up");
            }
          }},
      SPASVC_INT("perturb_key_min", train.perturb_key_min),
      SPASVC_INT("perturb_key_max", train.perturb_key_max),
      SPASVC_BOOL("compose_perturb", train.compose_perturb),
      SPASVC_BOOL("detach_hidden", train.detach_hidden),
      SPASVC_BOOL("diffusion_clean_path", train.diffusion_clean_path),
      SPASVC_INT("crop_frames", train.crop_frames),
      SPASVC_INT("checkpoint_every", train.checkpoint_every),
      SPASVC_DBL("grad_clip", train.grad_clip),
      SPASVC_DBL("test_ratio", train.test_ratio),
      SPASVC_DBL("min_clip_seconds", train.min_clip_seconds),
  };
  return keys;
}

#undef SPASVC_INT
#undef SPASVC_DBL
#undef SPASVC_BOOL

const Key* find_key(const std::string& name) {
  for (const auto& k : registry())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw UsageError("lr must be positive");
  if (batch_size < 1) throw UsageError("batch_size must be positive");
  if (max_steps < 0) throw UsageError("max_steps must be non-negative");
  if (!(cycle_prob >= 0.0 && cycle_prob <= 1.0)) throw UsageError("cycle_prob must lie in [0, 1]");
  if (!(sched_gamma > 0.0)) throw UsageError("sched_gamma must be positive");
  if (cycle_key_min < 0 || cycle_key_max < cycle_key_min) throw UsageError("cycle key range is empty");
  if (perturb_key_max < perturb_key_min) throw UsageError("perturbation key range is empty");
  if (crop_frames < 8) throw UsageError("crop_frames must be at least 8");
  if (checkpoint_every < 1) throw UsageError("checkpoint_every must be positive");
  if (!(test_ratio >= 0.0 && test_ratio < 1.0)) throw UsageError("test_ratio must lie in [0, 1)");
  if (grad_clip < 0.0) throw UsageError("grad_clip must be non-negative");
}

void SvcConfig::finalize() {
  f0.sample_rate = mel.sample_rate;
  f0.hop = mel.hop;
  ddsp.sample_rate = mel.sample_rate;
  ddsp.hop = mel.hop;
  ddsp.content_dim = content.dim;
  denoiser.in_dim = mel.n_mels;
  denoiser.cond_dim = ddsp.hidden;
  vocoder.mel = mel;
}

void SvcConfig::validate() const {
  if (mel.sample_rate <= 0 || mel.hop <= 0 || mel.n_fft < 2 || mel.n_mels < 1) throw UsageError("invalid mel settings");
  if (!(mel.fmin >= 0.0 && mel.fmax > mel.fmin && mel.fmax <= 0.5 * mel.sample_rate))
    throw UsageError("mel band edges must satisfy 0 <= fmin < fmax <= sample_rate/2");
  if (content.sample_rate <= 0 || content.hop <= 0 || content.n_fft < 2 || content.dim < 1 ||
      content.dim >= content.n_fft / 2)
    throw UsageError("invalid content settings");
  if (!(f0.fmin > 0.0 && f0.fmax > f0.fmin) || !(f0.lowpass_hz >= 0.0))
    throw UsageError("invalid F0 settings");
  if (f0.lowpass_hz > 0.0 && f0.lowpass_hz <= f0.fmax) throw UsageError("f0_lowpass_hz must exceed f0_max");
  if (ddsp.hidden < 1 || ddsp.layers < 0 || ddsp.kernel < 1 || ddsp.kernel % 2 == 0 || ddsp.n_speakers < 1)
    throw UsageError("invalid DDSP settings");
  if (denoiser.layers < 1 || denoiser.channels < 1 || denoiser.kernel % 2 == 0 || denoiser.t_embed_dim % 2 != 0)
    throw UsageError("invalid denoiser settings");
  if (diffusion_steps < 1) throw UsageError("diffusion_steps must be positive");
  if (diffusion_k < 0 || diffusion_k > diffusion_steps) throw UsageError("diffusion_k must lie in [0, diffusion_steps]");
  ssim.validate();
  vocoder.validate();
  train.validate();
}

SvcConfig preset_config(const std::string& name) {
  SvcConfig c;
  if (name == "paper") {
    c.preset = "paper";
    c.mel = MelConfig{44100, 2048, 512, 128, 40.0, 16000.0, 1e-5};
    c.content = ContentConfig{16000, 320, 2048, 768, 1e-5};
    c.ddsp.hidden = 256;
    c.ddsp.layers = 3;
    c.ddsp.n_speakers = 20;
    c.denoiser.layers = 20;
    c.denoiser.channels = 512;
    c.diffusion_k = 100;
    c.train.lr = 1.5e-4;
    c.train.batch_size = 64;
    c.train.max_steps = 40000;
    c.train.crop_frames = 128;
    c.train.checkpoint_every = 1000;
  } else if (name == "desk") {
    c.preset = "desk";
    c.mel = MelConfig{16000, 512, 128, 40, 40.0, 8000.0, 1e-5};
    c.content = ContentConfig{16000, 320, 512, 32, 1e-5};
    c.ddsp.hidden = 64;
    c.ddsp.layers = 2;
    c.ddsp.n_speakers = 20;
    c.denoiser.layers = 4;
    c.denoiser.channels = 64;
    c.diffusion_k = 100;
    c.train.lr = 5e-3;
    c.train.batch_size = 8;
    c.train.max_steps = 2000;
    c.train.crop_frames = 48;
    c.train.checkpoint_every = 500;
  } else {
    throw UsageError("unknown preset '" + name + "' (expected desk or paper)");
  }
  c.finalize();
  return c;
}

SvcConfig parse_config(const std::string& text, const std::string& origin) {
  struct Entry {
    int line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    Entry e{line_no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (e.key.empty()) throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (e.key != "preset" && !find_key(e.key))
      throw UsageError(origin + ":" + std::to_string(line_no) + ": unknown key '" + e.key + "'");
    if (auto it = seen.find(e.key); it != seen.end())
      throw UsageError(origin + ":" + std::to_string(line_no) + ": key '" + e.key + "' already set on line " +
                       std::to_string(it->second));
    seen[e.key] = line_no;
    entries.push_back(std::move(e));
  }
  const auto preset = std::find_if(entries.begin(), entries.end(), [](const Entry& e) { return e.key == "preset"; });
  if (preset == entries.end()) throw UsageError(origin + ": missing required key 'preset'");

  SvcConfig cfg;
  try {
    cfg = preset_config(preset->value);
  } catch (const UsageError& e) {
    throw UsageError(origin + ":" + std::to_string(preset->line) + ": " + e.what());
  }
  for (const auto& e : entries) {
    if (e.key == "preset") continue;
    try {
      find_key(e.key)->set(cfg, e.value);
    } catch (const std::exception& ex) {
      throw UsageError(origin + ":" + std::to_string(e.line) + ": invalid value '" + e.value + "' for '" + e.key +
                       "': " + ex.what());
    }
  }
  cfg.finalize();
  try {
    cfg.validate();
  } catch (const UsageError& e) {
    throw UsageError(origin + ": " + e.what());
  }
  return cfg;
}

SvcConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out{"preset"};
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

std::string to_config_text(const SvcConfig& cfg) {
  std::ostringstream os;
  os << "preset = " << cfg.preset << "\n";
  for (const auto& k : registry()) os << k.name << " = " << k.get(cfg) << "\n";
  return os.str();
}

nlohmann::json to_json(const SvcConfig& cfg) {
  nlohmann::json j;
  j["preset"] = cfg.preset;
  for (const auto& k : registry()) j[k.name] = k.get(cfg);
  return j;
}

SvcConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("preset")) throw DataError("config echo is missing 'preset'");
  SvcConfig cfg = preset_config(j.at("preset").get<std::string>());
  for (const auto& k : registry()) {
    if (!j.contains(k.name)) continue;
    try {
      k.set(cfg, j.at(k.name).get<std::string>());
    } catch (const std::exception& e) {
      throw DataError("config echo has a bad value for '" + k.name + "': " + e.what());
    }
  }
  cfg.finalize();
  cfg.validate();
  return cfg;
}

}  // namespace spasvc
