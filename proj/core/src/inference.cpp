#include "spasvc/inference.hpp"

#include <fstream>
#include <sstream>

#include "spasvc/error.hpp"

namespace spasvc {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

}  // namespace

Converter::Converter(const SvcModel& model)
    : model_(model), encoder_(make_content_encoder(model.config().content)), vocoder_(model.config().vocoder) {}

ConversionResult Converter::convert(const ConversionRequest& req) const {
  const SvcConfig& cfg = model_.config();
  if (req.target_speaker < 1 || req.target_speaker > static_cast<int>(model_.speakers.size()))
    throw DataError("unknown speaker id " + std::to_string(req.target_speaker));
  if (req.diffusion_k < 0 || req.diffusion_k > model_.schedule().T)
    throw UsageError("diffusion_k must lie in [0, " + std::to_string(model_.schedule().T) + "]");
  validate(req.source);
  const AudioClip src = resample(req.source, cfg.mel.sample_rate);

  ConversionResult res;
  const F0Contour f0_o = estimate_f0(src, cfg.f0);
  const auto frames = static_cast<int>(f0_o.size());
  res.f0 = shift_pitch_contour(f0_o, req.key);
  if (res.f0.voiced_count() == 0) res.warnings.push_back("source has no voiced frames; output is noise only");

  AcousticCondition cond;
  cond.content = encode_aligned(*encoder_, src, frames).values;
  cond.volume = extract_volume(src, cfg.mel.hop).rms;
  cond.f0 = res.f0;
  cond.speaker_id = req.target_speaker;

  ag::NoGradGuard guard;
  const DdspOutput out = model_.ddsp().forward(cond, res.f0, req.seed);
  res.ddsp_audio.sample_rate = cfg.mel.sample_rate;
  res.ddsp_audio.samples.assign(out.wave.value().data(), out.wave.value().data() + out.wave.value().size());

  const Mat raw = model_.analyzer().log_mel(res.ddsp_audio.samples);
  const Mat mel_init = ((raw.array() - model_.norm.min) / model_.norm.range()).cwiseMax(0.0).cwiseMin(1.0).matrix();
  res.mel.values = sample_shallow(model_.denoiser(), mel_init, out.hidden.value(), req.diffusion_k,
                                  model_.schedule(), req.seed + 1);
  if (!res.mel.values.allFinite()) throw NumericError("non-finite mel after diffusion");
  res.mel.n_mels = cfg.mel.n_mels;
  res.mel.hop = cfg.mel.hop;
  res.mel.norm_min = model_.norm.min;
  res.mel.norm_max = model_.norm.max;
  res.mel.normalized = true;

  res.audio = vocoder_.vocode(res.mel, res.f0, req.seed + 2);
  res.audio.samples.resize(src.samples.size(), 0.0);
  res.audio.speaker_id = req.target_speaker;
  return res;
}

AudioClip convert(const ConversionRequest& req, const SvcModel& model) { return Converter(model).convert(req).audio; }

std::string output_name(const fs::path& source, int speaker_id, int key) {
  return source.stem().string() + "_spk" + std::to_string(speaker_id) + "_key" + std::to_string(key) + ".wav";
}

BatchReport batch_convert(const fs::path& manifest, const SvcModel& model, const fs::path& out_dir, int diffusion_k,
                          std::uint64_t seed) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  fs::create_directories(out_dir);
  const Converter converter(model);
  const EvalConfig ecfg = eval_config(model.config());
  BatchReport report;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (line_no == 1 && !cells.empty() && cells[0] == "source") continue;
    const std::string where = manifest.filename().string() + ":" + std::to_string(line_no) + ": ";
    if (cells.size() != 3) {
      report.errors.push_back(where + "expected 3 columns (source,target_speaker,key)");
      continue;
    }
    try {
      fs::path src = cells[0];
      if (src.is_relative()) src = manifest.parent_path() / src;
      if (!fs::exists(src)) throw DataError("missing source file " + src.string());
      ConversionRequest req;
      req.source = read_wav(src);
      req.target_speaker = model.speaker_id(cells[1]);
      try {
        req.key = std::stoi(cells[2]);
      } catch (const std::exception&) {
        throw DataError("invalid key '" + cells[2] + "'");
      }
      req.diffusion_k = diffusion_k;
      req.seed = seed;
      const ConversionResult res = converter.convert(req);
      const std::string name = output_name(src, req.target_speaker, req.key);
      write_wav(out_dir / name, res.audio);
      report.outputs.push_back(out_dir / name);
      report.metrics.push_back(compute_metrics(name, resample(req.source, res.audio.sample_rate), res.audio, ecfg));
    } catch (const Error& e) {
      report.errors.push_back(where + e.what());
    }
  }
  write_metrics_csv(out_dir / "metrics.csv", report.metrics);
  return report;
}

}  // namespace spasvc
