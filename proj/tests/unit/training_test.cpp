#include "catch_amalgamated.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "oracles.hpp"
#include "spasvc/error.hpp"
#include "spasvc/losses.hpp"
#include "spasvc/training.hpp"

using namespace spasvc;
namespace fs = std::filesystem;

namespace {

// A preprocessed two-speaker synthetic corpus shared by every test in this file.
const fs::path& corpus_dir() {
  static oracle::TempDir dir("training");
  static const bool ready = [] {
    SyntheticCorpusSpec spec;
    spec.clips_per_speaker = 3;
    write_synthetic_corpus(dir / "wav", spec);
    preprocess(dir / "wav", dir / "corpus", preset_config("desk"));
    return true;
  }();
  (void)ready;
  static const fs::path p = dir / "corpus";
  return p;
}

SvcConfig small_cfg() {
  SvcConfig c = preset_config("desk");
  c.train.batch_size = 2;
  c.train.crop_frames = 24;
  return c;
}

struct Fixture {
  SvcConfig cfg;
  Corpus corpus;
  SvcModel model;
  Trainer trainer;
  explicit Fixture(SvcConfig c)
      : cfg(c), corpus(Corpus::open(corpus_dir())), model(cfg, 11), trainer(init(model, corpus), corpus.load_all()) {}
  static SvcModel& init(SvcModel& m, const Corpus& c) {
    m.speakers = c.speakers;
    m.norm = c.norm;
    return m;
  }
};

bool all_zero_grad(const nn::ParameterStore& store, const std::string& prefix) {
  for (const auto& [name, v] : store.entries())
    if (name.rfind(prefix, 0) == 0 && v.has_grad() && v.grad().cwiseAbs().maxCoeff() > 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("split keeps roughly a tenth of each speaker for testing", "[training][split]") {
  Corpus c;
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i < 50; ++i) c.entries.push_back(Corpus::Entry{"spk" + std::to_string(s), std::to_string(i), {}, 0});
  const DataSplit split = split_corpus(c, 3, 0.1);
  REQUIRE(split.train.size() == 90);
  REQUIRE(split.test.size() == 10);
  const DataSplit again = split_corpus(c, 3, 0.1);
  REQUIRE(split.test == again.test);
}

TEST_CASE("a fresh cycle step yields finite losses and gradients everywhere", "[training][cycle]") {
  Fixture f(small_cfg());
  std::mt19937_64 rng(1);
  const auto batch = f.trainer.sample_batch(rng);
  const CycleStepOutput out = f.trainer.cycle_losses(batch, rng);
  REQUIRE(std::isfinite(out.l_cyc));
  REQUIRE(std::isfinite(out.l_diff));
  REQUIRE(std::abs(out.l_total - (out.l_cyc + out.l_diff)) < 1e-9);
  REQUIRE(out.key >= 6);
  REQUIRE(out.key <= 18);
  REQUIRE(out.wav_s.samples.size() == out.wav_c.samples.size());
  REQUIRE(out.wav_c.samples.size() == static_cast<std::size_t>(24 * f.cfg.mel.hop));
  REQUIRE(out.mel_c.values.minCoeff() >= 0.0);
  REQUIRE_FALSE(all_zero_grad(f.model.parameters(), "ddsp/"));
  REQUIRE_FALSE(all_zero_grad(f.model.parameters(), "diff/"));
}

TEST_CASE("content re-extraction is a stop-gradient", "[training][cycle]") {
  // Gradients after a cycle step must equal those of pass 2 alone with the
  // re-extracted content held constant.
  SvcConfig cfg = small_cfg();
  cfg.train.batch_size = 1;
  Fixture f(cfg);
  std::mt19937_64 rng(2);
  const auto batch = f.trainer.sample_batch(rng);
  std::mt19937_64 copy = rng;
  const CycleStepOutput out = f.trainer.cycle_losses(batch, rng, 9);
  std::map<std::string, ag::Mat> trainer_grads;
  for (const auto& [name, v] : f.model.parameters().entries())
    if (v.has_grad()) trainer_grads[name] = v.grad();
  f.model.parameters().zero_grad();

  const TrainingExample& ex = batch[0];
  const FeatureBundle& b = *ex.bundle;
  const auto s = static_cast<std::size_t>(ex.start), n = static_cast<std::size_t>(ex.frames);
  AcousticCondition cond;
  cond.volume.assign(b.volume.rms.begin() + s, b.volume.rms.begin() + s + n);
  cond.f0.hz.assign(b.f0.hz.begin() + s, b.f0.hz.begin() + s + n);
  cond.f0.voiced.assign(b.f0.voiced.begin() + s, b.f0.voiced.begin() + s + n);
  cond.speaker_id = b.speaker_id;
  const auto enc = make_content_encoder(cfg.content);
  cond.content = encode_aligned(*enc, out.wav_s, ex.frames).values;
  (void)copy();  // pass-1 noise seed
  const std::uint64_t seed2 = copy();
  const DdspOutput pass2 = f.model.ddsp().forward(cond, cond.f0, seed2);
  std::vector<double> audio(n * cfg.mel.hop, 0.0);
  for (std::size_t i = 0; i < audio.size() && s * cfg.mel.hop + i < b.audio.samples.size(); ++i)
    audio[i] = b.audio.samples[s * cfg.mel.hop + i];
  const ag::Mat target = ((f.model.analyzer().log_mel(audio).array() - f.model.norm.min) / f.model.norm.range())
                             .cwiseMax(0.0).cwiseMin(1.0).matrix();
  const ag::Var lc = cyc_loss_var(ag::constant(target), f.model.analyzer().log_mel_var(pass2.wave, f.model.norm), cfg.ssim);
  std::uniform_int_distribution<int> td(0, f.model.schedule().T - 1);
  const int t = td(copy);
  std::normal_distribution<double> nd(0.0, 1.0);
  ag::Mat eps(target.rows(), target.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = nd(copy);
  const ag::Var ld = diffusion_loss_var(
      ag::constant(eps), f.model.denoiser().predict(ag::constant(q_sample(to_diffusion_space(target), t, eps, f.model.schedule())), t, pass2.hidden));
  ag::backward(lc + ld);
  REQUIRE(lc.item() == Catch::Approx(out.l_cyc).epsilon(1e-12));
  REQUIRE(ld.item() == Catch::Approx(out.l_diff).epsilon(1e-12));
  for (const auto& [name, v] : f.model.parameters().entries()) {
    INFO(name);
    REQUIRE(v.has_grad() == (trainer_grads.count(name) > 0));
    if (v.has_grad()) REQUIRE((v.grad() - trainer_grads[name]).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + v.grad().cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("loss kind changes only the cycle term", "[training][cycle]") {
  SvcConfig ssim_cfg = small_cfg(), mse_cfg = small_cfg();
  mse_cfg.train.loss_kind = LossKind::Mse;
  Fixture a(ssim_cfg), b(mse_cfg);
  std::mt19937_64 ra(3), rb(3);
  const auto ba = a.trainer.sample_batch(ra);
  const auto bb = b.trainer.sample_batch(rb);
  const CycleStepOutput oa = a.trainer.cycle_losses(ba, ra);
  const CycleStepOutput ob = b.trainer.cycle_losses(bb, rb);
  REQUIRE(oa.l_diff == ob.l_diff);
  REQUIRE(oa.l_cyc != ob.l_cyc);
  REQUIRE(oa.key == ob.key);
}

TEST_CASE("perturbation with key zero is plain reconstruction", "[training][perturb]") {
  Fixture f(small_cfg());
  std::mt19937_64 rng(4);
  const auto batch = f.trainer.sample_batch(rng);
  std::mt19937_64 copy = rng;
  const CycleStepOutput out = f.trainer.perturb_losses(batch, rng, 0);
  REQUIRE(std::isfinite(out.l_cyc));
  REQUIRE(std::abs(out.l_total - (out.l_cyc + out.l_diff)) < 1e-9);

  const TrainingExample& ex = batch[0];
  const FeatureBundle& b = *ex.bundle;
  AcousticCondition cond;
  cond.content = b.content.values.middleRows(ex.start, ex.frames);
  cond.volume.assign(b.volume.rms.begin() + ex.start, b.volume.rms.begin() + ex.start + ex.frames);
  cond.f0.hz.assign(b.f0.hz.begin() + ex.start, b.f0.hz.begin() + ex.start + ex.frames);
  cond.f0.voiced.assign(b.f0.voiced.begin() + ex.start, b.f0.voiced.begin() + ex.start + ex.frames);
  cond.speaker_id = b.speaker_id;
  ag::NoGradGuard guard;
  const DdspOutput plain = f.model.ddsp().forward(cond, cond.f0, copy());
  REQUIRE(std::equal(out.wav_c.samples.begin(), out.wav_c.samples.end(), plain.wave.value().data()));
}

TEST_CASE("steps are reproducible and update parameters", "[training]") {
  Fixture a(small_cfg()), b(small_cfg());
  const ag::Mat before = a.model.parameters().get("diff/output/w").value();
  const LossRecord ra = a.trainer.step();
  const LossRecord rb = b.trainer.step();
  REQUIRE(ra.l_total == rb.l_total);
  REQUIRE(a.model.parameters().get("diff/output/w").value() == b.model.parameters().get("diff/output/w").value());
  REQUIRE(a.model.parameters().get("diff/output/w").value() != before);
  REQUIRE(a.trainer.steps_done() == 1);
}

TEST_CASE("cycle probability selects the step kind", "[training]") {
  SvcConfig cfg = small_cfg();
  cfg.train.cycle_prob = 0.0;
  Fixture f(cfg);
  for (int i = 0; i < 3; ++i) {
    const LossRecord r = f.trainer.step();
    REQUIRE_FALSE(r.cycle);
    REQUIRE(r.key >= -5);
    REQUIRE(r.key <= 5);
  }
}

TEST_CASE("learning rate halves every quarter of the run", "[training]") {
  SvcConfig cfg = small_cfg();
  cfg.train.max_steps = 8;
  Fixture f(cfg);
  REQUIRE(f.trainer.current_lr() == cfg.train.lr);
  f.trainer.step();
  f.trainer.step();
  REQUIRE(f.trainer.current_lr() == Catch::Approx(cfg.train.lr * 0.5));
}

TEST_CASE("train writes logs and checkpoints and resumes bit-identically", "[training][train]") {
  oracle::TempDir out("train_out");
  SvcConfig cfg = small_cfg();
  cfg.train.max_steps = 4;
  cfg.train.checkpoint_every = 2;
  const TrainResult full = train(corpus_dir(), cfg, out / "full");
  REQUIRE(full.steps == 4);
  REQUIRE(fs::exists(out / "full" / "ckpt_2.svc"));
  REQUIRE(fs::exists(out / "full" / "ckpt_4.svc"));
  REQUIRE(fs::exists(out / "full" / "split.json"));
  for (const auto& r : full.log) REQUIRE(std::abs(r.l_total - (r.l_cyc + r.l_diff)) < 1e-9);

  std::ifstream csv(out / "full" / "losses.csv");
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == "step,l_cyc,l_diff,l_total,lr,key,t");

  SvcConfig half = cfg;
  half.train.max_steps = 2;
  train(corpus_dir(), half, out / "resumed");
  const TrainResult rest = train(corpus_dir(), cfg, out / "resumed", true);
  REQUIRE(rest.log.size() == 2);
  REQUIRE(rest.log.front().step == 2);
  REQUIRE(rest.log[0].l_total == full.log[2].l_total);
  REQUIRE(rest.log[1].l_total == full.log[3].l_total);
  REQUIRE(oracle::same_bytes(out / "full" / "losses.csv", out / "resumed" / "losses.csv"));

  const SvcModel loaded = SvcModel::load(out / "full" / "model.svc");
  REQUIRE(loaded.speakers == std::vector<std::string>{"alto", "bass"});
}

TEST_CASE("train rejects a corpus built with different features", "[training][train]") {
  oracle::TempDir out("train_bad");
  SvcConfig cfg = small_cfg();
  cfg.mel.n_mels = 48;
  cfg.finalize();
  REQUIRE_THROWS_AS(train(corpus_dir(), cfg, out / "x"), UsageError);
  REQUIRE_THROWS_AS(train(out / "nothing", small_cfg(), out / "y"), DataError);
}
