#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spasvc/config.hpp"
#include "spasvc/content_encoder.hpp"
#include "spasvc/corpus.hpp"
#include "spasvc/model.hpp"
#include "spasvc/nn.hpp"

namespace spasvc {

/// A crop of one clip: frames [start, start + frames).
struct TrainingExample {
  const FeatureBundle* bundle = nullptr;
  int start = 0;
  int frames = 0;
};

/// Losses of one optimisation step plus the first clip's intermediate signals.
struct CycleStepOutput {
  AudioClip wav_s;  // pass-1 output (shifted pitch); empty for perturbation steps
  AudioClip wav_c;  // pass-2 output (restored pitch) or the perturbed reconstruction
  MelSpec mel_c;    // normalised mel of wav_c
  double l_cyc = 0.0;
  double l_diff = 0.0;
  double l_total = 0.0;
  int key = 0;
  int t = 0;  // diffusion step of the first clip
};

struct LossRecord {
  std::int64_t step = 0;
  double l_cyc = 0.0;
  double l_diff = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
  int key = 0;
  int t = 0;
  bool cycle = true;
};

struct DataSplit {
  std::vector<std::string> train;  // "speaker/name"
  std::vector<std::string> test;
};

/// Seeded per-speaker shuffle; each speaker with n >= 2 clips contributes
/// max(1, round(ratio * n)) test clips.
DataSplit split_corpus(const Corpus& corpus, std::uint64_t seed, double test_ratio);

/// Owns the optimiser and drives steps on a fixed training set.
class Trainer {
 public:
  Trainer(SvcModel& model, std::vector<FeatureBundle> train_set);

  /// Cycle step: shifted pass without gradient, content re-extraction,
  /// restoring pass, cycle + diffusion loss, optimiser update.
  CycleStepOutput cycle_train_step(const std::vector<TrainingExample>& batch, std::mt19937_64& rng);
  /// Single pass at a perturbed pitch against the unshifted mel.
  CycleStepOutput baseline_perturb_step(const std::vector<TrainingExample>& batch, std::mt19937_64& rng);

  /// Loss and gradient computation only (no parameter update); gradients are
  /// left in the parameter store. `forced_key` overrides the sampled key.
  CycleStepOutput cycle_losses(const std::vector<TrainingExample>& batch, std::mt19937_64& rng,
                               std::optional<int> forced_key = std::nullopt);
  CycleStepOutput perturb_losses(const std::vector<TrainingExample>& batch, std::mt19937_64& rng,
                                 std::optional<int> forced_key = std::nullopt);

  /// Runs the next scheduled step with an RNG derived from (seed, step).
  LossRecord step();

  std::vector<TrainingExample> sample_batch(std::mt19937_64& rng) const;
  std::mt19937_64 step_rng(std::int64_t step) const;

  std::int64_t steps_done() const { return step_; }
  double current_lr() const;
  nn::AdamW& optimizer() { return opt_; }
  const std::vector<FeatureBundle>& train_set() const { return data_; }
  SvcModel& model() { return model_; }

  TensorArchive checkpoint() const;
  void restore(const TensorArchive& ar);

 private:
  void apply_update();
  void check_finite(const CycleStepOutput& out, const std::vector<TrainingExample>& batch) const;

  SvcModel& model_;
  std::vector<FeatureBundle> data_;
  std::unique_ptr<ContentEncoder> encoder_;
  nn::AdamW opt_;
  std::int64_t step_ = 0;

 public:
  /// Where a diagnostic JSON is written when a loss turns non-finite (empty: none).
  std::filesystem::path diagnostics_dir;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::int64_t steps = 0;
  std::vector<LossRecord> log;  // records produced by this invocation
  DataSplit split;
};

/// Trains on a preprocessed corpus. Writes split.json, losses.csv,
/// ckpt_<step>.svc every checkpoint_every steps and model.svc (latest).
/// With `resume`, continues from out_dir/model.svc.
TrainResult train(const std::filesystem::path& corpus_dir, const SvcConfig& cfg, const std::filesystem::path& out_dir,
                  bool resume = false, const std::function<void(const LossRecord&)>& on_step = {});

}  // namespace spasvc
