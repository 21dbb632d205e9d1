#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "spasvc/autograd.hpp"
#include "spasvc/nn.hpp"

namespace spasvc {

/// DDPM noise schedule. Index t runs 0..T-1.
struct DiffusionSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  /// Betas evenly spaced from beta_start to beta_end.
  static DiffusionSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);
  void validate() const;
  void check_step(int t) const;
};

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
ag::Mat q_sample(const ag::Mat& x0, int t, const ag::Mat& eps, const DiffusionSchedule& sched);
ag::Var q_sample_var(const ag::Mat& x0, int t, const ag::Mat& eps, const DiffusionSchedule& sched);

/// Mels are modelled in [-1, 1]; these map to and from normalised [0, 1] mels.
ag::Mat to_diffusion_space(const ag::Mat& mel01);
ag::Mat from_diffusion_space(const ag::Mat& x);

struct DenoiserConfig {
  int in_dim = 128;
  int layers = 20;
  int channels = 512;
  int cond_dim = 256;
  int kernel = 3;
  int dilation_cycle = 4;
  int t_embed_dim = 128;
};

/// 1 x dim sinusoidal timestep embedding (sin half then cos half).
ag::Mat timestep_embedding(int t, int dim);

/// Non-causal WaveNet noise predictor over frames x in_dim inputs.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, nn::ParameterStore& store, std::mt19937_64& rng);

  const DenoiserConfig& config() const { return cfg_; }
  ag::Var predict(const ag::Var& x_t, int t, const ag::Var& cond) const;
  ag::Mat predict(const ag::Mat& x_t, int t, const ag::Mat& cond) const;

 private:
  struct Block {
    nn::Linear diffusion_proj;
    nn::Linear cond_proj;
    nn::Conv1d dilated;
    nn::Linear out_proj;
  };
  DenoiserConfig cfg_;
  nn::Linear input_proj_;
  nn::Linear t_mlp1_, t_mlp2_;
  std::vector<Block> blocks_;
  nn::Linear skip_proj_;
  nn::Linear output_proj_;
};

/// One ancestral step x_t -> x_{t-1} with the x0 estimate clipped to [-1, 1].
ag::Mat p_sample(const Denoiser& net, const ag::Mat& x_t, int t, const ag::Mat& cond,
                 const DiffusionSchedule& sched, std::mt19937_64& rng);

/// Full reverse process from pure noise; returns a normalised [0, 1] mel.
ag::Mat sample_full(const Denoiser& net, const ag::Mat& cond, const DiffusionSchedule& sched, std::uint64_t seed);

/// Noises `mel_init` (normalised) to step k-1, then runs k reverse steps.
/// k = 0 returns mel_init unchanged.
ag::Mat sample_shallow(const Denoiser& net, const ag::Mat& mel_init, const ag::Mat& cond, int k,
                       const DiffusionSchedule& sched, std::uint64_t seed);

}  // namespace spasvc
