#include "spasvc/training.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "spasvc/error.hpp"
#include "spasvc/losses.hpp"

namespace spasvc {
namespace fs = std::filesystem;

namespace {

struct Crop {
  AcousticCondition cond;
  AudioClip audio;
};

Crop make_crop(const TrainingExample& ex, int hop) {
  const FeatureBundle& b = *ex.bundle;
  Crop c;
  const auto s = static_cast<std::size_t>(ex.start);
  const auto n = static_cast<std::size_t>(ex.frames);
  c.cond.content = b.content.values.middleRows(ex.start, ex.frames);
  c.cond.volume.assign(b.volume.rms.begin() + s, b.volume.rms.begin() + s + n);
  c.cond.f0.hz.assign(b.f0.hz.begin() + s, b.f0.hz.begin() + s + n);
  c.cond.f0.voiced.assign(b.f0.voiced.begin() + s, b.f0.voiced.begin() + s + n);
  c.cond.speaker_id = b.speaker_id;
  c.audio.sample_rate = b.audio.sample_rate;
  c.audio.samples.assign(n * hop, 0.0);
  const std::size_t first = s * hop;
  for (std::size_t i = 0; i < n * hop && first + i < b.audio.samples.size(); ++i)
    c.audio.samples[i] = b.audio.samples[first + i];
  return c;
}

ag::Mat normalize01(const ag::Mat& raw, const MelNorm& norm) {
  return ((raw.array() - norm.min) / norm.range()).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

AudioClip to_clip(const ag::Var& wave, int sample_rate) {
  AudioClip c;
  c.sample_rate = sample_rate;
  c.samples.assign(wave.value().data(), wave.value().data() + wave.value().size());
  return c;
}

ag::Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  ag::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

DataSplit split_corpus(const Corpus& corpus, std::uint64_t seed, double test_ratio) {
  std::map<std::string, std::vector<std::string>> by_speaker;
  for (const auto& e : corpus.entries) by_speaker[e.speaker].push_back(e.speaker + "/" + e.name);
  DataSplit split;
  std::mt19937_64 rng(seed);
  for (auto& [speaker, names] : by_speaker) {
    std::sort(names.begin(), names.end());
    std::shuffle(names.begin(), names.end(), rng);
    const auto n = names.size();
    std::size_t n_test = 0;
    if (n >= 2 && test_ratio > 0.0)
      n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(test_ratio * static_cast<double>(n))));
    n_test = std::min(n_test, n - 1);
    split.test.insert(split.test.end(), names.begin(), names.begin() + static_cast<long>(n_test));
    split.train.insert(split.train.end(), names.begin() + static_cast<long>(n_test), names.end());
  }
  return split;
}

Trainer::Trainer(SvcModel& model, std::vector<FeatureBundle> train_set)
    : model_(model),
      data_(std::move(train_set)),
      encoder_(make_content_encoder(model.config().content)),
      opt_(nn::AdamWConfig{model.config().train.lr, model.config().train.beta1, model.config().train.beta2, 1e-8,
                           model.config().train.weight_decay}) {
  if (data_.empty()) throw DataError("training set is empty");
  for (const auto& b : data_) {
    b.validate();
    if (b.mel.n_mels != model.config().mel.n_mels) throw DataError("record " + b.name + " has the wrong mel size");
    if (b.speaker_id < 1 || b.speaker_id > model.config().ddsp.n_speakers)
      throw DataError("record " + b.name + " has an out-of-range speaker id");
  }
}

std::mt19937_64 Trainer::step_rng(std::int64_t step) const {
  std::seed_seq seq{static_cast<std::uint64_t>(model_.config().train.seed), static_cast<std::uint64_t>(step),
                    std::uint64_t{0x5eed}};
  return std::mt19937_64(seq);
}

double Trainer::current_lr() const {
  const auto& tc = model_.config().train;
  return nn::step_lr(tc.lr, tc.sched_gamma, tc.effective_sched_step(), step_);
}

std::vector<TrainingExample> Trainer::sample_batch(std::mt19937_64& rng) const {
  const auto& tc = model_.config().train;
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<TrainingExample> batch;
  for (int i = 0; i < tc.batch_size; ++i) {
    const FeatureBundle& b = data_[pick(rng)];
    const int total = static_cast<int>(b.frames());
    const int frames = std::min(total, tc.crop_frames);
    std::uniform_int_distribution<int> start(0, total - frames);
    batch.push_back(TrainingExample{&b, start(rng), frames});
  }
  return batch;
}

CycleStepOutput Trainer::cycle_losses(const std::vector<TrainingExample>& batch, std::mt19937_64& rng,
                                      std::optional<int> forced_key) {
  const SvcConfig& cfg = model_.config();
  const TrainConfig& tc = cfg.train;
  if (batch.empty()) throw UsageError("empty batch");
  model_.parameters().zero_grad();

  CycleStepOutput out;
  out.key = forced_key ? *forced_key : sample_cycle_key(rng, tc.cycle_key_min, tc.cycle_key_max, tc.cycle_direction);
  int pass1_key = out.key;
  if (tc.compose_perturb) pass1_key += sample_perturb_key(rng, tc.perturb_key_min, tc.perturb_key_max);
  std::uniform_int_distribution<int> tdist(0, model_.schedule().T - 1);

  ag::Var cyc_sum, diff_sum;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Crop c = make_crop(batch[i], cfg.mel.hop);
    const std::uint64_t seed1 = rng(), seed2 = rng();

    // Pass 1: shifted pitch, no gradient.
    AudioClip wav_s;
    {
      ag::NoGradGuard guard;
      wav_s = to_clip(model_.ddsp().forward(c.cond, shift_pitch_contour(c.cond.f0, pass1_key), seed1).wave,
                      cfg.mel.sample_rate);
    }
    // Content re-extracted from the shifted audio; a constant for autograd.
    AcousticCondition cond_c = c.cond;
    cond_c.content = encode_aligned(*encoder_, wav_s, batch[i].frames).values;

    // Pass 2: restored pitch.
    const DdspOutput pass2 = model_.ddsp().forward(cond_c, c.cond.f0, seed2);
    const ag::Mat target = normalize01(model_.analyzer().log_mel(c.audio.samples), model_.norm);
    const ag::Var mel_c = model_.analyzer().log_mel_var(pass2.wave, model_.norm);
    const ag::Var target_v = ag::constant(target);
    const ag::Var lc =
        tc.loss_kind == LossKind::Ssim ? cyc_loss_var(target_v, mel_c, cfg.ssim) : mse_loss_var(target_v, mel_c);

    const ag::Mat x0 = to_diffusion_space(target);
    const int t = tdist(rng);
    const ag::Mat eps = gaussian(x0.rows(), x0.cols(), rng);
    const ag::Var hidden = tc.detach_hidden ? ag::constant(pass2.hidden.value()) : pass2.hidden;
    ag::Var ld = diffusion_loss_var(
        ag::constant(eps), model_.denoiser().predict(ag::constant(q_sample(x0, t, eps, model_.schedule())), t, hidden));
    if (tc.diffusion_clean_path) {
      const DdspOutput clean = model_.ddsp().forward(c.cond, c.cond.f0, rng());
      const int t2 = tdist(rng);
      const ag::Mat eps2 = gaussian(x0.rows(), x0.cols(), rng);
      const ag::Var h2 = tc.detach_hidden ? ag::constant(clean.hidden.value()) : clean.hidden;
      const ag::Var ld2 = diffusion_loss_var(
          ag::constant(eps2), model_.denoiser().predict(ag::constant(q_sample(x0, t2, eps2, model_.schedule())), t2, h2));
      ld = ag::scale(ld + ld2, 0.5);
    }
    cyc_sum = i == 0 ? lc : cyc_sum + lc;
    diff_sum = i == 0 ? ld : diff_sum + ld;

    if (i == 0) {
      out.t = t;
      out.wav_s = std::move(wav_s);
      out.wav_c = to_clip(pass2.wave, cfg.mel.sample_rate);
      out.mel_c.values = mel_c.value();
      out.mel_c.n_mels = cfg.mel.n_mels;
      out.mel_c.hop = cfg.mel.hop;
      out.mel_c.norm_min = model_.norm.min;
      out.mel_c.norm_max = model_.norm.max;
      out.mel_c.normalized = true;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  const ag::Var l_cyc = ag::scale(cyc_sum, inv);
  const ag::Var l_diff = ag::scale(diff_sum, inv);
  const ag::Var total = total_loss_var(l_cyc, l_diff, tc.lambda_cyc);
  out.l_cyc = l_cyc.item();
  out.l_diff = l_diff.item();
  out.l_total = total.item();
  if (std::isfinite(out.l_total)) ag::backward(total);
  return out;
}

CycleStepOutput Trainer::perturb_losses(const std::vector<TrainingExample>& batch, std::mt19937_64& rng,
                                        std::optional<int> forced_key) {
  const SvcConfig& cfg = model_.config();
  const TrainConfig& tc = cfg.train;
  if (batch.empty()) throw UsageError("empty batch");
  model_.parameters().zero_grad();

  CycleStepOutput out;
  out.key = forced_key ? *forced_key : sample_perturb_key(rng, tc.perturb_key_min, tc.perturb_key_max);
  std::uniform_int_distribution<int> tdist(0, model_.schedule().T - 1);

  ag::Var rec_sum, diff_sum;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Crop c = make_crop(batch[i], cfg.mel.hop);
    c.cond.f0 = shift_pitch_contour(c.cond.f0, out.key);
    const DdspOutput pass = model_.ddsp().forward(c.cond, c.cond.f0, rng());
    const ag::Mat target = normalize01(model_.analyzer().log_mel(c.audio.samples), model_.norm);
    const ag::Var mel_p = model_.analyzer().log_mel_var(pass.wave, model_.norm);
    const ag::Var target_v = ag::constant(target);
    const ag::Var lr =
        tc.loss_kind == LossKind::Ssim ? cyc_loss_var(target_v, mel_p, cfg.ssim) : mse_loss_var(target_v, mel_p);

    const ag::Mat x0 = to_diffusion_space(target);
    const int t = tdist(rng);
    const ag::Mat eps = gaussian(x0.rows(), x0.cols(), rng);
    const ag::Var hidden = tc.detach_hidden ? ag::constant(pass.hidden.value()) : pass.hidden;
    const ag::Var ld = diffusion_loss_var(
        ag::constant(eps), model_.denoiser().predict(ag::constant(q_sample(x0, t, eps, model_.schedule())), t, hidden));
    rec_sum = i == 0 ? lr : rec_sum + lr;
    diff_sum = i == 0 ? ld : diff_sum + ld;
    if (i == 0) {
      out.t = t;
      out.wav_c = to_clip(pass.wave, cfg.mel.sample_rate);
      out.mel_c.values = mel_p.value();
      out.mel_c.n_mels = cfg.mel.n_mels;
      out.mel_c.hop = cfg.mel.hop;
      out.mel_c.norm_min = model_.norm.min;
      out.mel_c.norm_max = model_.norm.max;
      out.mel_c.normalized = true;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  const ag::Var l_rec = ag::scale(rec_sum, inv);
  const ag::Var l_diff = ag::scale(diff_sum, inv);
  const ag::Var total = total_loss_var(l_rec, l_diff, tc.lambda_cyc);
  out.l_cyc = l_rec.item();
  out.l_diff = l_diff.item();
  out.l_total = total.item();
  if (std::isfinite(out.l_total)) ag::backward(total);
  return out;
}

void Trainer::check_finite(const CycleStepOutput& out, const std::vector<TrainingExample>& batch) const {
  if (std::isfinite(out.l_cyc) && std::isfinite(out.l_diff) && std::isfinite(out.l_total)) return;
  std::string where;
  if (!diagnostics_dir.empty()) {
    nlohmann::json dump = {{"step", step_}, {"key", out.key}, {"t", out.t}, {"l_cyc", std::to_string(out.l_cyc)},
                           {"l_diff", std::to_string(out.l_diff)}, {"l_total", std::to_string(out.l_total)}};
    nlohmann::json clips = nlohmann::json::array();
    for (const auto& ex : batch)
      clips.push_back({{"speaker", ex.bundle->speaker}, {"name", ex.bundle->name}, {"start", ex.start},
                       {"frames", ex.frames}});
    dump["inputs"] = clips;
    fs::create_directories(diagnostics_dir);
    const fs::path p = diagnostics_dir / ("nonfinite_step_" + std::to_string(step_) + ".json");
    std::ofstream(p) << dump.dump(2) << "\n";
    where = " (diagnostics in " + p.string() + ")";
  }
  throw NumericError("non-finite loss at step " + std::to_string(step_) + " (key " + std::to_string(out.key) +
                     ", t " + std::to_string(out.t) + ")" + where);
}

void Trainer::apply_update() {
  auto& store = model_.parameters();
  const double clip = model_.config().train.grad_clip;
  if (clip > 0.0) {
    const double norm = nn::grad_norm(store);
    if (norm > clip) {
      for (const auto& [name, var] : store.entries())
        if (var.has_grad()) var.node()->grad *= clip / norm;
    }
  }
  opt_.set_lr(current_lr());
  opt_.step(store);
  store.zero_grad();
}

CycleStepOutput Trainer::cycle_train_step(const std::vector<TrainingExample>& batch, std::mt19937_64& rng) {
  CycleStepOutput out = cycle_losses(batch, rng);
  check_finite(out, batch);
  apply_update();
  return out;
}

CycleStepOutput Trainer::baseline_perturb_step(const std::vector<TrainingExample>& batch, std::mt19937_64& rng) {
  CycleStepOutput out = perturb_losses(batch, rng);
  check_finite(out, batch);
  apply_update();
  return out;
}

LossRecord Trainer::step() {
  const TrainConfig& tc = model_.config().train;
  std::mt19937_64 rng = step_rng(step_);
  const auto batch = sample_batch(rng);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool cycle = coin(rng) < tc.cycle_prob;
  LossRecord rec;
  rec.step = step_;
  rec.lr = current_lr();
  rec.cycle = cycle;
  const CycleStepOutput out = cycle ? cycle_train_step(batch, rng) : baseline_perturb_step(batch, rng);
  rec.l_cyc = out.l_cyc;
  rec.l_diff = out.l_diff;
  rec.l_total = out.l_total;
  rec.key = out.key;
  rec.t = out.t;
  ++step_;
  return rec;
}

TensorArchive Trainer::checkpoint() const {
  TensorArchive ar = model_.to_archive(step_);
  ar.meta["adam_t"] = opt_.steps_taken();
  for (const auto& [name, m] : opt_.first_moments()) ar.tensors["adam/m/" + name] = m;
  for (const auto& [name, v] : opt_.second_moments()) ar.tensors["adam/v/" + name] = v;
  return ar;
}

void Trainer::restore(const TensorArchive& ar) {
  model_.load_parameters(ar);
  step_ = ar.meta.at("step").get<std::int64_t>();
  std::map<std::string, ag::Mat> m, v;
  for (const auto& [name, t] : ar.tensors) {
    if (name.rfind("adam/m/", 0) == 0) m[name.substr(7)] = t;
    else if (name.rfind("adam/v/", 0) == 0) v[name.substr(7)] = t;
  }
  opt_.restore(ar.meta.value("adam_t", std::int64_t{0}), std::move(m), std::move(v));
}

namespace {

void check_feature_compat(const SvcConfig& corpus_cfg, const SvcConfig& cfg) {
  const nlohmann::json a = to_json(corpus_cfg), b = to_json(cfg);
  for (const char* key : {"sample_rate", "hop", "n_fft", "n_mels", "fmin", "fmax", "mel_log_floor", "content_sample_rate",
                          "content_hop", "content_n_fft", "content_dim", "f0_min", "f0_max", "f0_threshold",
                          "f0_voicing_threshold", "f0_silence_rms", "f0_lowpass_hz"}) {
    if (a.at(key) != b.at(key))
      throw UsageError(std::string("config key '") + key + "' = " + b.at(key).get<std::string>() +
                       " differs from the corpus (" + a.at(key).get<std::string>() + "); re-run preprocess");
  }
}

std::string csv_line(const LossRecord& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.step << ',' << r.l_cyc << ',' << r.l_diff << ',' << r.l_total << ',' << r.lr << ',' << r.key << ',' << r.t;
  return os.str();
}

constexpr const char* kCsvHeader = "step,l_cyc,l_diff,l_total,lr,key,t";

}  // namespace

TrainResult train(const fs::path& corpus_dir, const SvcConfig& cfg_in, const fs::path& out_dir, bool resume,
                  const std::function<void(const LossRecord&)>& on_step) {
  SvcConfig cfg = cfg_in;
  cfg.finalize();
  cfg.validate();
  const Corpus corpus = Corpus::open(corpus_dir);
  check_feature_compat(corpus.config, cfg);

  TrainResult result;
  result.split = split_corpus(corpus, cfg.train.seed, cfg.train.test_ratio);
  fs::create_directories(out_dir);
  {
    nlohmann::json j = {{"seed", cfg.train.seed}, {"train", result.split.train}, {"test", result.split.test}};
    std::ofstream(out_dir / "split.json") << j.dump(2) << "\n";
  }
  std::vector<FeatureBundle> train_set;
  for (const auto& e : corpus.entries) {
    const std::string key = e.speaker + "/" + e.name;
    if (std::find(result.split.train.begin(), result.split.train.end(), key) != result.split.train.end())
      train_set.push_back(load_bundle(e.path));
  }

  SvcModel model(cfg, cfg.train.seed);
  model.speakers = corpus.speakers;
  model.norm = corpus.norm;
  Trainer trainer(model, std::move(train_set));
  trainer.diagnostics_dir = out_dir / "diagnostics";

  const fs::path latest = out_dir / "model.svc";
  const fs::path csv_path = out_dir / "losses.csv";
  std::vector<std::string> kept;
  if (resume) {
    if (!fs::exists(latest)) throw DataError("cannot resume: " + latest.string() + " not found");
    trainer.restore(TensorArchive::load(latest));
    std::ifstream in(csv_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line == kCsvHeader) continue;
      if (std::stoll(line.substr(0, line.find(','))) < trainer.steps_done()) kept.push_back(line);
    }
  }
  std::ofstream csv(csv_path, std::ios::trunc);
  csv << kCsvHeader << "\n";
  for (const auto& l : kept) csv << l << "\n";
  csv.flush();

  while (trainer.steps_done() < cfg.train.max_steps) {
    const LossRecord rec = trainer.step();
    csv << csv_line(rec) << "\n";
    csv.flush();
    result.log.push_back(rec);
    if (on_step) on_step(rec);
    if (trainer.steps_done() % cfg.train.checkpoint_every == 0) {
      const TensorArchive ar = trainer.checkpoint();
      ar.save(out_dir / ("ckpt_" + std::to_string(trainer.steps_done()) + ".svc"));
      ar.save(latest);
    }
  }
  trainer.checkpoint().save(latest);
  result.checkpoint = latest;
  result.steps = trainer.steps_done();
  return result;
}

}  // namespace spasvc
