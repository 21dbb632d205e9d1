#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "spasvc/audio.hpp"
#include "spasvc/autograd.hpp"
#include "spasvc/nn.hpp"
#include "spasvc/pitch.hpp"

namespace spasvc {

struct DdspConfig {
  int content_dim = 32;
  int hidden = 256;
  int layers = 3;
  int kernel = 3;
  int n_speakers = 20;
  int sample_rate = 44100;
  int hop = 512;              // synthesis frames are 2*hop long, so filters have hop+1 bins
  double amp_scale = 4.0;     // harmonic amplitude head range is (0, 2*amp_scale)
  double noise_scale = 1.0 / 16.0;

  int filter_bins() const { return hop + 1; }
};

/// Frame-aligned inputs to the acoustic model. Speaker ids are 1-based.
struct AcousticCondition {
  ag::Mat content;              // frames x content_dim
  std::vector<double> volume;   // frames
  F0Contour f0;                 // frames
  int speaker_id = 1;

  Eigen::Index frames() const { return content.rows(); }
  void validate(const DdspConfig& cfg) const;
};

/// Per-frame synthesizer controls.
struct SynthParams {
  ag::Mat harmonic_amplitude;  // frames x 1, >= 0
  ag::Mat harmonic_filter;     // frames x bins, >= 0
  ag::Mat noise_filter;        // frames x bins, >= 0
};

/// Unit band-limited pulse train (combtooth) following the phase-integrated
/// F0, gated to zero on unvoiced frames. Length frames*hop.
std::vector<double> combtooth_excitation(const F0Contour& f0, int hop, int sample_rate);

/// Combtooth source shaped by harmonic_amplitude * harmonic_filter plus
/// seeded white noise shaped by noise_filter, both filtered per frame by
/// zero-phase multiplication in a 2*hop Hann-windowed STFT and overlap-added.
AudioClip combsub_synthesize(const SynthParams& params, const F0Contour& f0, int hop, int sample_rate,
                             std::uint64_t noise_seed = 0);

/// Differentiable form returning a 1 x (frames*hop) waveform.
ag::Var combsub_synthesize_var(const ag::Var& harmonic_amplitude, const ag::Var& harmonic_filter,
                               const ag::Var& noise_filter, const F0Contour& f0, int hop, int sample_rate,
                               std::uint64_t noise_seed);

struct DdspOutput {
  ag::Var wave;    // 1 x (frames*hop)
  ag::Var hidden;  // frames x hidden
  ag::Var harmonic_amplitude, harmonic_filter, noise_filter;
};

/// Condition embedding, gated-convolution frame network and synthesis heads.
class DdspModel {
 public:
  DdspModel(const DdspConfig& cfg, nn::ParameterStore& store, std::mt19937_64& rng);

  const DdspConfig& config() const { return cfg_; }

  /// Sum of content, volume and F0 projections plus the speaker embedding.
  ag::Var embed_condition(const AcousticCondition& cond) const;
  ag::Var frame_network(const ag::Var& embedded) const;
  /// `f0_for_synthesis` drives the excitation; `cond.f0` drives the embedding.
  DdspOutput forward(const AcousticCondition& cond, const F0Contour& f0_for_synthesis,
                     std::uint64_t noise_seed) const;

 private:
  DdspConfig cfg_;
  nn::Linear content_proj_;
  ag::Var volume_w_;
  ag::Var f0_w_;  // rows: log2(f0/440), voiced bias, unvoiced embedding
  ag::Var speaker_table_;
  std::vector<nn::Conv1d> convs_;
  nn::Linear head_;
};

}  // namespace spasvc
