#pragma once

#include <memory>

#include "spasvc/audio.hpp"
#include "spasvc/autograd.hpp"

namespace spasvc {

struct ContentConfig {
  int sample_rate = 16000;
  int hop = 320;
  int n_fft = 1024;
  int dim = 32;
  double log_floor = 1e-5;
};

/// frames x dim content features.
struct ContentFeatures {
  ag::Mat values;
  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

/// Extension point for content extractors. Implementations must be
/// deterministic and free of shared mutable state.
class ContentEncoder {
 public:
  virtual ~ContentEncoder() = default;
  /// `clip` must already be at sample_rate().
  virtual ContentFeatures encode(const AudioClip& clip) const = 0;
  virtual int sample_rate() const = 0;
  virtual int dim() const = 0;
};

/// Low-quefrency real cepstrum (c1..c_dim, c0 dropped) of a Hann-windowed
/// STFT. Dropping c0 removes overall level; truncating at `dim` keeps the
/// spectral envelope and discards harmonic fine structure for pitches whose
/// period exceeds dim samples.
class CepstralContentEncoder final : public ContentEncoder {
 public:
  explicit CepstralContentEncoder(ContentConfig cfg);
  ContentFeatures encode(const AudioClip& clip) const override;
  int sample_rate() const override { return cfg_.sample_rate; }
  int dim() const override { return cfg_.dim; }
  const ContentConfig& config() const { return cfg_; }

 private:
  ContentConfig cfg_;
};

std::unique_ptr<ContentEncoder> make_content_encoder(const ContentConfig& cfg);

/// Cepstral features of `clip` (which must be at cfg.sample_rate).
ContentFeatures encode(const AudioClip& clip, const ContentConfig& cfg);

/// Resamples to the encoder's rate, encodes, and aligns to `n_frames`.
ContentFeatures encode_aligned(const ContentEncoder& enc, const AudioClip& clip, int n_frames);

/// Linear interpolation along time onto exactly n_frames rows, endpoints preserved.
ContentFeatures align_to_frames(const ContentFeatures& content, int n_frames);

}  // namespace spasvc
