#include "spasvc/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "spasvc/archive.hpp"
#include "spasvc/error.hpp"

namespace spasvc {
namespace fs = std::filesystem;

namespace {

constexpr int kRecordSchema = 1;
constexpr double kPi = std::numbers::pi;

ag::Mat column(const std::vector<double>& v) {
  ag::Mat m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

std::vector<double> to_vector(const ag::Mat& m) { return {m.data(), m.data() + m.size()}; }

std::vector<fs::path> sorted_entries(const fs::path& dir, bool want_dirs) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (want_dirs ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ".wav")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void FeatureBundle::validate() const {
  const auto n = static_cast<std::size_t>(frames());
  if (f0.size() != n || volume.rms.size() != n || static_cast<std::size_t>(content.frames()) != n)
    throw DataError("record " + name + ": feature frame counts differ");
  if (!mel.values.allFinite() || !content.values.allFinite()) throw DataError("record " + name + ": non-finite features");
}

FeatureBundle extract_features(const AudioClip& clip, const SvcConfig& cfg, const ContentEncoder& encoder) {
  if (clip.sample_rate != cfg.mel.sample_rate) throw UsageError("extract_features: clip is not at the mel sample rate");
  validate(clip);
  FeatureBundle b;
  b.audio = clip;
  b.mel = mel_spectrogram(clip, cfg.mel);
  b.f0 = estimate_f0(clip, cfg.f0);
  b.volume = extract_volume(clip, cfg.mel.hop);
  b.content = encode_aligned(encoder, clip, static_cast<int>(b.mel.frames()));
  if (clip.speaker_id) b.speaker_id = *clip.speaker_id;
  b.validate();
  return b;
}

void save_bundle(const FeatureBundle& b, const fs::path& path) {
  TensorArchive ar;
  ar.meta = {{"kind", "spasvc-record"}, {"schema", kRecordSchema}, {"speaker", b.speaker}, {"name", b.name},
             {"speaker_id", b.speaker_id}, {"sample_rate", b.audio.sample_rate}, {"hop", b.mel.hop},
             {"n_mels", b.mel.n_mels}};
  ar.tensors["mel"] = b.mel.values;
  ar.tensors["f0"] = column(b.f0.hz);
  std::vector<double> voiced(b.f0.voiced.begin(), b.f0.voiced.end());
  ar.tensors["voiced"] = column(voiced);
  ar.tensors["volume"] = column(b.volume.rms);
  ar.tensors["content"] = b.content.values;
  ar.tensors["audio"] = column(b.audio.samples).transpose();
  ar.save(path);
}

FeatureBundle load_bundle(const fs::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  if (ar.meta.value("kind", "") != "spasvc-record" || ar.meta.value("schema", 0) != kRecordSchema)
    throw DataError("corrupt record " + path.string());
  FeatureBundle b;
  b.speaker = ar.meta.at("speaker").get<std::string>();
  b.name = ar.meta.at("name").get<std::string>();
  b.speaker_id = ar.meta.at("speaker_id").get<int>();
  b.mel.values = ar.at("mel");
  b.mel.n_mels = ar.meta.at("n_mels").get<int>();
  b.mel.hop = ar.meta.at("hop").get<int>();
  b.f0.hz = to_vector(ar.at("f0"));
  for (double v : to_vector(ar.at("voiced"))) b.f0.voiced.push_back(v != 0.0);
  b.volume.rms = to_vector(ar.at("volume"));
  b.content.values = ar.at("content");
  b.audio.samples = to_vector(ar.at("audio"));
  b.audio.sample_rate = ar.meta.at("sample_rate").get<int>();
  b.audio.speaker_id = b.speaker_id;
  b.validate();
  return b;
}

MelNorm corpus_norm(const std::vector<FeatureBundle>& bundles) {
  if (bundles.empty()) throw DataError("cannot normalise an empty corpus");
  double lo = bundles.front().mel.values.minCoeff();
  double hi = bundles.front().mel.values.maxCoeff();
  for (const auto& b : bundles) {
    lo = std::min(lo, b.mel.values.minCoeff());
    hi = std::max(hi, b.mel.values.maxCoeff());
  }
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

Corpus Corpus::open(const fs::path& dir) {
  const fs::path index = dir / "corpus.json";
  std::ifstream in(index);
  if (!in) throw DataError("no preprocessed corpus at " + dir.string() + " (missing corpus.json)");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt corpus.json: " + std::string(e.what()));
  }
  Corpus c;
  c.config = config_from_json(j.at("config"));
  c.speakers = j.at("speakers").get<std::vector<std::string>>();
  c.norm = MelNorm{j.at("norm").at("min").get<double>(), j.at("norm").at("max").get<double>()};
  for (const auto& r : j.at("records")) {
    c.entries.push_back(Entry{r.at("speaker").get<std::string>(), r.at("name").get<std::string>(),
                              dir / r.at("path").get<std::string>(), r.at("frames").get<int>()});
  }
  if (c.entries.empty()) throw DataError("corpus at " + dir.string() + " has no records");
  return c;
}

std::vector<FeatureBundle> Corpus::load_all() const {
  std::vector<FeatureBundle> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_bundle(e.path));
  return out;
}

PreprocessReport preprocess(const fs::path& input, const fs::path& output, const SvcConfig& cfg) {
  if (!fs::is_directory(input)) throw DataError("input directory " + input.string() + " does not exist");
  const auto encoder = make_content_encoder(cfg.content);
  PreprocessReport report;
  std::vector<FeatureBundle> bundles;
  std::vector<std::string> speakers;

  for (const auto& spk_dir : sorted_entries(input, true)) {
    const std::string speaker = spk_dir.filename().string();
    bool any = false;
    for (const auto& wav : sorted_entries(spk_dir, false)) {
      const std::string label = speaker + "/" + wav.filename().string();
      AudioClip clip;
      try {
        clip = resample(read_wav(wav), cfg.mel.sample_rate);
        validate(clip);
      } catch (const Error& e) {
        report.warnings.push_back(label + ": " + e.what());
        continue;
      }
      if (clip.duration_seconds() < cfg.train.min_clip_seconds) {
        report.skipped.push_back(label);
        continue;
      }
      FeatureBundle b = extract_features(clip, cfg, *encoder);
      b.speaker = speaker;
      b.name = wav.stem().string();
      bundles.push_back(std::move(b));
      any = true;
    }
    if (any) speakers.push_back(speaker);
  }
  if (bundles.empty()) {
    std::ostringstream msg;
    msg << "no valid clips (>= " << cfg.train.min_clip_seconds << " s) under " << input.string() << "; "
        << report.skipped.size() << " skipped as too short";
    throw DataError(msg.str());
  }
  if (static_cast<int>(speakers.size()) > cfg.ddsp.n_speakers)
    throw DataError("corpus has " + std::to_string(speakers.size()) + " speakers but n_speakers is " +
                    std::to_string(cfg.ddsp.n_speakers));

  const MelNorm norm = corpus_norm(bundles);
  fs::create_directories(output);
  fs::remove_all(output / "records");
  nlohmann::json records = nlohmann::json::array();
  for (auto& b : bundles) {
    b.speaker_id = static_cast<int>(std::find(speakers.begin(), speakers.end(), b.speaker) - speakers.begin()) + 1;
    b.audio.speaker_id = b.speaker_id;
    const fs::path rel = fs::path("records") / b.speaker / (b.name + ".rec");
    fs::create_directories((output / rel).parent_path());
    save_bundle(b, output / rel);
    records.push_back({{"speaker", b.speaker}, {"name", b.name}, {"path", rel.generic_string()},
                       {"frames", static_cast<int>(b.frames())}});
  }
  nlohmann::json j = {{"config", to_json(cfg)}, {"speakers", speakers},
                      {"norm", {{"min", norm.min}, {"max", norm.max}}}, {"records", records}};
  const fs::path tmp = output / "corpus.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, output / "corpus.json");
  report.records = static_cast<int>(bundles.size());
  return report;
}

namespace {

struct Voice {
  double low_midi, high_midi;
  double formant_scale;
  double tilt_hz;
};

Voice voice_for(const std::string& speaker) {
  if (speaker == "alto") return {57.0, 69.0, 1.08, 700.0};
  if (speaker == "bass") return {43.0, 55.0, 0.88, 350.0};
  const auto h = std::hash<std::string>{}(speaker);
  const double low = 43.0 + static_cast<double>(h % 20);
  return {low, low + 12.0, 0.85 + static_cast<double>((h >> 8) % 30) / 100.0, 350.0 + static_cast<double>((h >> 16) % 400)};
}

struct Vowel {
  double f[3];
};
constexpr Vowel kVowels[] = {{{730, 1090, 2440}}, {{530, 1840, 2480}}, {{270, 2290, 3010}},
                             {{570, 840, 2410}},  {{300, 870, 2240}}};
constexpr double kBandwidth[] = {80.0, 90.0, 120.0};
constexpr double kFormantGain[] = {1.0, 0.6, 0.3};

double midi_to_hz(double m) { return 440.0 * std::pow(2.0, (m - 69.0) / 12.0); }

// Raised-cosine blend from a to b over [t0, t0 + len].
double glide(double a, double b, double t, double t0, double len) {
  if (t <= t0) return a;
  if (t >= t0 + len) return b;
  const double w = 0.5 - 0.5 * std::cos(kPi * (t - t0) / len);
  return a + (b - a) * w;
}

}  // namespace

AudioClip synthesize_singing(const std::string& speaker, int index, const SyntheticCorpusSpec& spec) {
  const Voice voice = voice_for(speaker);
  std::seed_seq seq{static_cast<std::uint64_t>(spec.seed), static_cast<std::uint64_t>(std::hash<std::string>{}(speaker)),
                    static_cast<std::uint64_t>(index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int sr = spec.sample_rate;
  const double seconds = spec.min_seconds + (spec.max_seconds - spec.min_seconds) * unit(rng);
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  const double lead = 0.12, tail = 0.12;
  const double sung = seconds - lead - tail;

  const int n_notes = 3 + static_cast<int>(unit(rng) * 3.0);
  std::vector<double> note_midi(n_notes), note_start(n_notes);
  std::vector<int> note_vowel(n_notes);
  for (int i = 0; i < n_notes; ++i) {
    note_midi[i] = std::round(voice.low_midi + (voice.high_midi - voice.low_midi) * unit(rng));
    note_vowel[i] = static_cast<int>(unit(rng) * 5.0) % 5;
    note_start[i] = lead + sung * i / n_notes;
  }
  const double vib_rate = 5.0 + unit(rng);
  const double vib_phase0 = 2.0 * kPi * unit(rng);

  // Control-rate tracks, interpolated per sample.
  const int ctrl = 64;
  const std::size_t n_ctrl = n / ctrl + 2;
  std::vector<double> f0_ctrl(n_ctrl), env_ctrl(n_ctrl);
  std::vector<std::array<double, 3>> formant_ctrl(n_ctrl);
  for (std::size_t c = 0; c < n_ctrl; ++c) {
    const double t = static_cast<double>(c * ctrl) / sr;
    int k = 0;
    while (k + 1 < n_notes && t >= note_start[k + 1]) ++k;
    const int prev = std::max(0, k - 1);
    double midi = glide(note_midi[prev], note_midi[k], t, note_start[k], 0.08);
    const double since = t - note_start[k];
    midi += 0.25 * std::min(1.0, since / 0.3) * std::sin(2.0 * kPi * vib_rate * t + vib_phase0);
    f0_ctrl[c] = midi_to_hz(midi);
    for (int i = 0; i < 3; ++i)
      formant_ctrl[c][i] = voice.formant_scale *
                           glide(kVowels[note_vowel[prev]].f[i], kVowels[note_vowel[k]].f[i], t, note_start[k], 0.06);
    const double attack = std::clamp((t - lead) / 0.05, 0.0, 1.0);
    const double release = std::clamp((lead + sung - t) / 0.08, 0.0, 1.0);
    env_ctrl[c] = attack * release * (0.8 + 0.2 * std::sin(2.0 * kPi * 0.7 * t));
  }

  AudioClip clip;
  clip.sample_rate = sr;
  clip.samples.assign(n, 0.0);
  const double nyquist_limit = 0.45 * sr;
  const double f0_min = *std::min_element(f0_ctrl.begin(), f0_ctrl.end());
  const int max_h = static_cast<int>(nyquist_limit / f0_min);
  std::vector<double> phase(static_cast<std::size_t>(max_h) + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i / ctrl;
    const double frac = static_cast<double>(i % ctrl) / ctrl;
    const double f0 = (1.0 - frac) * f0_ctrl[c] + frac * f0_ctrl[c + 1];
    const double env = (1.0 - frac) * env_ctrl[c] + frac * env_ctrl[c + 1];
    if (env <= 0.0) {
      for (int h = 1; h <= max_h; ++h) phase[h] += 2.0 * kPi * h * f0 / sr;
      continue;
    }
    double s = 0.0;
    for (int h = 1; h <= max_h; ++h) {
      const double f = h * f0;
      phase[h] += 2.0 * kPi * f / sr;
      if (f >= nyquist_limit) continue;
      double shape = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double fk = (1.0 - frac) * formant_ctrl[c][k] + frac * formant_ctrl[c + 1][k];
        const double d = (f - fk) / kBandwidth[k];
        shape += kFormantGain[k] / (1.0 + d * d);
      }
      s += shape / (1.0 + f / voice.tilt_hz) * std::sin(phase[h]);
    }
    clip.samples[i] = env * s;
  }
  std::normal_distribution<double> breath(0.0, 1.0);
  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? 0.6 / peak : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i / ctrl;
    clip.samples[i] = gain * clip.samples[i] + 0.002 * env_ctrl[c] * breath(rng);
  }
  peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.6)
    for (double& v : clip.samples) v *= 0.6 / peak;
  return clip;
}

std::vector<fs::path> write_synthetic_corpus(const fs::path& dir, const SyntheticCorpusSpec& spec) {
  std::vector<fs::path> out;
  for (const auto& speaker : spec.speakers) {
    for (int i = 0; i < spec.clips_per_speaker; ++i) {
      const fs::path p = dir / speaker / (speaker + "_" + std::to_string(i) + ".wav");
      write_wav(p, synthesize_singing(speaker, i, spec));
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace spasvc
