#pragma once

#include <random>
#include <span>
#include <vector>

#include "spasvc/audio.hpp"

namespace spasvc {

/// Per-frame F0 in Hz. Unvoiced frames carry exactly 0 Hz.
struct F0Contour {
  std::vector<double> hz;
  std::vector<bool> voiced;

  std::size_t size() const { return hz.size(); }
  std::size_t voiced_count() const;
  static F0Contour constant(std::size_t frames, double hz);
  static F0Contour unvoiced(std::size_t frames);
};

/// YIN difference-function estimator settings. Frames align with the mel
/// frames (centre-padded, frame t centred on sample t*hop).
struct F0Config {
  int sample_rate = 44100;
  int hop = 512;
  double fmin = 40.0;
  double fmax = 1200.0;
  double threshold = 0.1;          // absolute threshold for the first CMNDF dip
  double voicing_threshold = 0.25;  // CMNDF at the chosen lag must fall below this to be voiced
  double silence_rms = 1e-4;       // frames quieter than this are unvoiced
  double lowpass_hz = 2000.0;      // pre-filter cutoff; 0 disables
};

/// Result of analysing one frame with the cumulative mean normalised difference.
struct YinFrame {
  double period = 0.0;      // refined lag in samples (0 when nothing usable was found)
  double aperiodicity = 1.0;  // CMNDF at the chosen lag
  double rms = 0.0;
};

/// Samples needed for one analysis frame under `cfg`.
int yin_frame_length(const F0Config& cfg);
YinFrame yin_analyze(std::span<const double> frame, const F0Config& cfg);

/// Low-passes the clip at cfg.lowpass_hz, then runs yin_analyze per frame.
/// Without the pre-filter, integer lags misalign the upper harmonics of
/// bright sources and the estimate drops an octave.
/// Throws UsageError on a rate mismatch and DataError if the clip is shorter than one analysis frame.
F0Contour estimate_f0(const AudioClip& clip, const F0Config& cfg);

/// hz * 2^(key/12) on voiced frames; voiced flags and unvoiced zeros are kept.
F0Contour shift_pitch_contour(const F0Contour& f0, int key);

enum class CycleDirection { Up, Down, Both };

/// Uniform integer semitone shift in [lo, hi] (magnitude), signed per `dir`.
int sample_cycle_key(std::mt19937_64& rng, int lo = 6, int hi = 18, CycleDirection dir = CycleDirection::Up);
/// Uniform integer semitone perturbation in [lo, hi].
int sample_perturb_key(std::mt19937_64& rng, int lo = -5, int hi = 5);

}  // namespace spasvc
