#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "spasvc/config.hpp"
#include "spasvc/corpus.hpp"
#include "spasvc/error.hpp"
#include "spasvc/eval.hpp"
#include "spasvc/inference.hpp"
#include "spasvc/model.hpp"
#include "spasvc/training.hpp"

namespace spasvc::cli {
namespace fs = std::filesystem;

namespace {

SvcConfig config_or_preset(const std::string& path, const std::string& preset) {
  return path.empty() ? preset_config(preset) : load_config(path);
}

struct Options {
  std::string input, output, config, data, out_dir, checkpoint, source, speaker, manifest, ref_dir, csv;
  std::string preset = "desk";
  std::string speakers = "alto,bass";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_steps;
  std::optional<int> diffusion_k;
  int key = 0;
  int clips = 5;
  int sample_rate = 16000;
  bool resume = false;
};

int cmd_preprocess(const Options& o, std::ostream& out, std::ostream& err) {
  SvcConfig cfg = load_config(o.config);
  const PreprocessReport r = preprocess(o.input, o.output, cfg);
  for (const auto& s : r.skipped) err << "warning: skipped " << s << " (shorter than " << cfg.train.min_clip_seconds << " s)\n";
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";
  out << "wrote " << r.records << " records to " << o.output << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream&) {
  SvcConfig cfg = load_config(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.max_steps) cfg.train.max_steps = *o.max_steps;
  const fs::path out_dir = o.out_dir.empty() ? fs::path(o.data) / "run" : fs::path(o.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const int every = std::max(1, cfg.train.max_steps / 20);
  const TrainResult r = train(o.data, cfg, out_dir, o.resume, [&](const LossRecord& rec) {
    if ((rec.step + 1) % every == 0)
      out << "step " << rec.step + 1 << "  l_cyc " << rec.l_cyc << "  l_diff " << rec.l_diff << "  lr " << rec.lr << "\n";
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "trained to step " << r.steps << " in " << secs << " s; checkpoint " << r.checkpoint.string() << "\n";
  return 0;
}

int cmd_convert(const Options& o, std::ostream& out, std::ostream& err) {
  const SvcModel model = SvcModel::load(o.checkpoint);
  const int k = o.diffusion_k.value_or(model.config().diffusion_k);
  const std::uint64_t seed = o.seed.value_or(0);
  if (!o.manifest.empty()) {
    const fs::path dir = o.out_dir.empty() ? fs::path("converted") : fs::path(o.out_dir);
    const BatchReport r = batch_convert(o.manifest, model, dir, k, seed);
    for (const auto& e : r.errors) err << "error: " << e << "\n";
    out << "converted " << r.outputs.size() << " files into " << dir.string() << "\n";
    return 0;
  }
  if (o.source.empty() || o.speaker.empty() || o.output.empty())
    throw UsageError("convert needs --source, --speaker and --output (or --manifest)");
  ConversionRequest req;
  req.source = read_wav(o.source);
  req.target_speaker = model.speaker_id(o.speaker);
  req.key = o.key;
  req.diffusion_k = k;
  req.seed = seed;
  const ConversionResult res = Converter(model).convert(req);
  for (const auto& w : res.warnings) err << "warning: " << w << "\n";
  write_wav(o.output, res.audio);
  out << "wrote " << o.output << "\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  const EvalConfig ecfg = eval_config(config_or_preset(o.config, o.preset));
  const fs::path csv = o.csv.empty() ? fs::path(o.out_dir) / "metrics.csv" : fs::path(o.csv);
  const EvaluateReport r = evaluate_dirs(o.ref_dir, o.out_dir, csv, ecfg);
  for (const auto& p : r.problems) err << "warning: " << p << "\n";
  out << "evaluated " << r.rows.size() << " pairs; metrics in " << csv.string() << "\n";
  return 0;
}

int cmd_synth_corpus(const Options& o, std::ostream& out, std::ostream&) {
  SyntheticCorpusSpec spec;
  spec.speakers.clear();
  std::stringstream ss(o.speakers);
  for (std::string s; std::getline(ss, s, ',');)
    if (!s.empty()) spec.speakers.push_back(s);
  if (spec.speakers.empty()) throw UsageError("--speakers must name at least one speaker");
  if (o.clips < 1) throw UsageError("--clips must be positive");
  if (o.sample_rate < 8000) throw UsageError("--sample-rate must be at least 8000");
  spec.clips_per_speaker = o.clips;
  spec.sample_rate = o.sample_rate;
  if (o.seed) spec.seed = *o.seed;
  const auto files = write_synthetic_corpus(o.output, spec);
  out << "wrote " << files.size() << " clips under " << o.output << "\n";
  return 0;
}

int cmd_spectrogram(const Options& o, std::ostream& out, std::ostream&) {
  EvalConfig ecfg = eval_config(config_or_preset(o.config, o.preset));
  AudioClip clip = read_wav(o.input);
  emit_spectrogram(clip, o.output, ecfg);
  out << "wrote " << o.output << "\n";
  return 0;
}

int cmd_config(const Options& o, std::ostream& out, std::ostream&) {
  out << to_config_text(preset_config(o.preset));
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Singing voice conversion: preprocessing, cycle training, conversion and evaluation", "spasvc"};
  app.require_subcommand(1);
  Options o;

  auto* pre = app.add_subcommand("preprocess", "Extract features from <input>/<speaker>/<clip>.wav");
  pre->add_option("--input", o.input, "Directory of speaker subdirectories")->required();
  pre->add_option("--output", o.output, "Corpus output directory")->required();
  pre->add_option("--config", o.config, "Config file (key = value)")->required();
  pre->add_option("--seed", o.seed, "Accepted for uniformity; preprocessing is deterministic");

  auto* tr = app.add_subcommand("train", "Train on a preprocessed corpus");
  tr->add_option("--data", o.data, "Preprocessed corpus directory")->required();
  tr->add_option("--config", o.config, "Config file (key = value)")->required();
  tr->add_option("--out", o.out_dir, "Run directory (default <data>/run)");
  tr->add_option("--seed", o.seed, "Overrides the config seed");
  tr->add_option("--max-steps", o.max_steps, "Overrides max_steps");
  tr->add_flag("--resume", o.resume, "Continue from <out>/model.svc");

  auto* cv = app.add_subcommand("convert", "Convert one clip or a manifest");
  cv->add_option("--checkpoint", o.checkpoint, "Trained model.svc")->required();
  cv->add_option("--source", o.source, "Source wav");
  cv->add_option("--speaker", o.speaker, "Target speaker name or 1-based id");
  cv->add_option("--key", o.key, "Pitch shift in semitones");
  cv->add_option("--output", o.output, "Output wav");
  cv->add_option("--manifest", o.manifest, "CSV with header source,target_speaker,key");
  cv->add_option("--out-dir", o.out_dir, "Output directory for --manifest (default ./converted)");
  cv->add_option("--diffusion-k", o.diffusion_k, "Shallow diffusion steps (default from the checkpoint config)");
  cv->add_option("--seed", o.seed, "Noise seed (default 0)");

  auto* ev = app.add_subcommand("evaluate", "Objective metrics for paired wav directories");
  ev->add_option("--ref-dir", o.ref_dir, "Reference wavs")->required();
  ev->add_option("--out-dir", o.out_dir, "Converted wavs with matching names")->required();
  ev->add_option("--csv", o.csv, "Metrics CSV (default <out-dir>/metrics.csv)");
  ev->add_option("--config", o.config, "Config whose analysis settings are used");
  ev->add_option("--preset", o.preset, "Preset used when --config is absent")->check(CLI::IsMember({"desk", "paper"}));
  ev->add_option("--seed", o.seed, "Accepted for uniformity; metrics are deterministic");

  auto* sc = app.add_subcommand("synth-corpus", "Write a synthetic gliding-pitch singing corpus");
  sc->add_option("--output", o.output, "Corpus directory")->required();
  sc->add_option("--speakers", o.speakers, "Comma-separated speaker names");
  sc->add_option("--clips", o.clips, "Clips per speaker");
  sc->add_option("--sample-rate", o.sample_rate, "Output sample rate");
  sc->add_option("--seed", o.seed, "Generator seed");

  auto* sp = app.add_subcommand("spectrogram", "Render a log-magnitude spectrogram to PGM");
  sp->add_option("--input", o.input, "Input wav")->required();
  sp->add_option("--output", o.output, "Output .pgm")->required();
  sp->add_option("--config", o.config, "Config whose analysis settings are used");
  sp->add_option("--preset", o.preset, "Preset used when --config is absent")->check(CLI::IsMember({"desk", "paper"}));
  sp->add_option("--seed", o.seed, "Accepted for uniformity");

  auto* cf = app.add_subcommand("config", "Print every config key for a preset");
  cf->add_option("--preset", o.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  cf->add_option("--seed", o.seed, "Accepted for uniformity");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(o, out, err);
    if (tr->parsed()) return cmd_train(o, out, err);
    if (cv->parsed()) return cmd_convert(o, out, err);
    if (ev->parsed()) return cmd_evaluate(o, out, err);
    if (sc->parsed()) return cmd_synth_corpus(o, out, err);
    if (sp->parsed()) return cmd_spectrogram(o, out, err);
    if (cf->parsed()) return cmd_config(o, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace spasvc::cli
