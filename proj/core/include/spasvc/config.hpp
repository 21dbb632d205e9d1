#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spasvc/content_encoder.hpp"
#include "spasvc/ddsp.hpp"
#include "spasvc/diffusion.hpp"
#include "spasvc/losses.hpp"
#include "spasvc/mel.hpp"
#include "spasvc/pitch.hpp"
#include "spasvc/vocoder.hpp"

namespace spasvc {

enum class LossKind { Ssim, Mse };

struct TrainConfig {
  double lr = 1.5e-4;
  int batch_size = 64;
  int max_steps = 40000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double sched_gamma = 0.5;
  int sched_step = 0;  // 0: a quarter of max_steps
  double cycle_prob = 1.0;
  LossKind loss_kind = LossKind::Ssim;
  double lambda_cyc = 1.0;
  std::uint64_t seed = 1234;
  int cycle_key_min = 6;
  int cycle_key_max = 18;
  CycleDirection cycle_direction = CycleDirection::Up;
  int perturb_key_min = -5;
  int perturb_key_max = 5;
  bool compose_perturb = false;
  bool detach_hidden = false;
  bool diffusion_clean_path = false;
  int crop_frames = 128;
  int checkpoint_every = 1000;
  double grad_clip = 0.0;  // 0 disables clipping
  double test_ratio = 0.1;
  double min_clip_seconds = 2.0;

  int effective_sched_step() const { return sched_step > 0 ? sched_step : std::max(1, max_steps / 4); }
  void validate() const;
};

/// Every tunable of the pipeline. Dependent fields (rates, hops, dimensions
/// shared between modules) are kept consistent by finalize().
struct SvcConfig {
  std::string preset = "paper";
  MelConfig mel;
  F0Config f0;
  ContentConfig content;
  DdspConfig ddsp;
  DenoiserConfig denoiser;
  int diffusion_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int diffusion_k = 100;
  SsimConfig ssim;
  VocoderConfig vocoder;
  TrainConfig train;

  void finalize();
  void validate() const;
  DiffusionSchedule schedule() const { return DiffusionSchedule::linear(diffusion_steps, beta_start, beta_end); }
};

/// "desk" (CPU-scale) or "paper" (full-size constants).
SvcConfig preset_config(const std::string& name);

/// Parses the flat `key = value` format; `#` starts a comment. The `preset`
/// key is required and applied first; other keys override it.
SvcConfig parse_config(const std::string& text, const std::string& origin = "<config>");
SvcConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in the file format.
std::string to_config_text(const SvcConfig& cfg);
std::vector<std::string> config_keys();

nlohmann::json to_json(const SvcConfig& cfg);
SvcConfig config_from_json(const nlohmann::json& j);

}  // namespace spasvc
