#pragma once

#include <cstdint>

#include "spasvc/audio.hpp"
#include "spasvc/mel.hpp"
#include "spasvc/pitch.hpp"

namespace spasvc {

/// Harmonic-plus-noise resynthesis from a mel spectrogram and an F0 track.
/// `mel` describes the analysis the spectrogram came from; its sample rate
/// and hop are the output rate and frame hop.
struct VocoderConfig {
  int n_harmonics = 64;
  double noise_gain = 1.0;
  int fit_iterations = 40;
  MelConfig mel;

  int sample_rate() const { return mel.sample_rate; }
  int hop() const { return mel.hop; }
  void validate() const;
};

/// Mel-band magnitude produced by a unit-amplitude sinusoid at `hz`
/// (n_mels values), from the Hann window's closed-form DTFT.
std::vector<double> sinusoid_mel_response(const Mat& filterbank, const MelConfig& cfg, double hz);

class Vocoder {
 public:
  explicit Vocoder(VocoderConfig cfg);
  const VocoderConfig& config() const { return cfg_; }

  /// Output has mel.frames() * hop samples. Harmonic amplitudes are fitted per
  /// voiced frame so their mel response matches the frame; what the harmonics
  /// cannot explain (and every unvoiced frame) becomes shaped noise.
  AudioClip vocode(const MelSpec& mel, const F0Contour& f0, std::uint64_t seed = 0) const;

 private:
  VocoderConfig cfg_;
  Mat fb_;
  std::vector<double> band_sums_;
  std::vector<double> centers_;
};

AudioClip vocode(const MelSpec& mel, const F0Contour& f0, const VocoderConfig& cfg, std::uint64_t seed = 0);

}  // namespace spasvc
