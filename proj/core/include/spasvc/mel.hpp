#pragma once

#include <memory>
#include <span>
#include <vector>

#include "spasvc/audio.hpp"
#include "spasvc/autograd.hpp"

namespace spasvc {

using ag::Mat;

struct MelConfig {
  int sample_rate = 44100;
  int n_fft = 2048;  // also the Hann window length
  int hop = 512;
  int n_mels = 128;
  double fmin = 40.0;
  double fmax = 16000.0;
  double log_floor = 1e-5;  // magnitude floor before the log
};

/// Min/max of log-mel values used to map a corpus into [0, 1].
struct MelNorm {
  double min = 0.0;
  double max = 1.0;
  double range() const { return max - min; }
};

/// frames x n_mels log-magnitude mel spectrogram.
struct MelSpec {
  Mat values;
  int n_mels = 0;
  int hop = 0;
  double norm_min = 0.0;
  double norm_max = 0.0;
  bool normalized = false;

  Eigen::Index frames() const { return values.rows(); }
};

struct VolumeContour {
  std::vector<double> rms;
};

/// ceil(n_samples / hop): centre-padded framing, frame t centred on sample t*hop.
int frame_count(std::size_t n_samples, int hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Slaney-style (area-normalised) triangular filterbank, n_mels x (n_fft/2+1).
Mat mel_filterbank(const MelConfig& cfg);
/// Centre frequency (Hz) of each mel band.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

/// Caches the analysis window and filterbank for one configuration.
class MelAnalyzer {
 public:
  explicit MelAnalyzer(MelConfig cfg);

  const MelConfig& config() const { return cfg_; }
  const Mat& filterbank() const { return *fb_; }

  /// Raw log-mel of `samples`. A nonzero `keyshift` (semitones) stretches the
  /// analysis FFT so the spectrum moves by 2^(keyshift/12), pitch and envelope
  /// together; used to build pitch-augmented targets.
  Mat log_mel(std::span<const double> samples, double keyshift = 0.0) const;

  /// Differentiable normalised log-mel of a 1 x N waveform.
  ag::Var log_mel_var(const ag::Var& wave, const MelNorm& norm) const;

 private:
  MelConfig cfg_;
  // Shared so backward closures stay valid independent of the analyzer's lifetime.
  std::shared_ptr<const Mat> fb_;
  std::shared_ptr<const std::vector<double>> window_;
};

/// Raw (unnormalised) log-mel. Throws DataError if the clip is shorter than one window.
MelSpec mel_spectrogram(const AudioClip& clip, const MelConfig& cfg);

/// Maps raw log-mel values into [0, 1] with `norm` and clamps.
MelSpec normalize(const MelSpec& mel, const MelNorm& norm);
/// Inverse of normalize (no clamping).
Mat denormalize(const Mat& normalized, const MelNorm& norm);

/// Frame-wise RMS over the same centre-padded frames as the mel analysis
/// (rectangular window of `window` samples, default 4*hop).
VolumeContour extract_volume(const AudioClip& clip, int hop, int window = 0);

}  // namespace spasvc
