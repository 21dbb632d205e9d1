#include "spasvc/content_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spasvc/error.hpp"
#include "spasvc/fft.hpp"
#include "spasvc/mel.hpp"

namespace spasvc {

CepstralContentEncoder::CepstralContentEncoder(ContentConfig cfg) : cfg_(cfg) {
  if (cfg.dim <= 0 || cfg.dim > cfg.n_fft / 2 - 1) throw UsageError("content dim must be in [1, n_fft/2 - 1]");
  if (cfg.hop <= 0 || cfg.sample_rate <= 0) throw UsageError("invalid content configuration");
}

ContentFeatures CepstralContentEncoder::encode(const AudioClip& clip) const {
  if (clip.sample_rate != cfg_.sample_rate)
    throw UsageError("content encoder expects " + std::to_string(cfg_.sample_rate) + " Hz input");
  validate(clip);
  const long n = static_cast<long>(clip.samples.size());
  const int n_fft = cfg_.n_fft;
  if (n < n_fft) throw DataError("clip too short");

  const int frames = frame_count(clip.samples.size(), cfg_.hop);
  std::vector<double> window(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);

  ContentFeatures out;
  out.values = ag::Mat::Zero(frames, cfg_.dim);
  std::vector<double> buf(static_cast<std::size_t>(n_fft));
  std::vector<fft::cplx> spec(static_cast<std::size_t>(n_fft / 2 + 1));
  std::vector<double> ceps(static_cast<std::size_t>(n_fft));
  const long pad = n_fft / 2;
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * cfg_.hop - pad;
    for (int i = 0; i < n_fft; ++i) {
      long j = start + i;
      if (j < 0) j = -j;
      if (j >= n) j = 2 * (n - 1) - j;
      buf[i] = window[i] * clip.samples[static_cast<std::size_t>(std::clamp(j, 0L, n - 1))];
    }
    fft::rfft(buf, spec);
    for (auto& c : spec) c = std::log(std::max(std::abs(c), cfg_.log_floor));
    fft::irfft(spec, ceps);
    for (int q = 0; q < cfg_.dim; ++q) out.values(t, q) = ceps[q + 1] / n_fft;
  }
  return out;
}

std::unique_ptr<ContentEncoder> make_content_encoder(const ContentConfig& cfg) {
  return std::make_unique<CepstralContentEncoder>(cfg);
}

ContentFeatures encode(const AudioClip& clip, const ContentConfig& cfg) {
  return CepstralContentEncoder(cfg).encode(clip);
}

ContentFeatures encode_aligned(const ContentEncoder& enc, const AudioClip& clip, int n_frames) {
  return align_to_frames(enc.encode(resample(clip, enc.sample_rate())), n_frames);
}

ContentFeatures align_to_frames(const ContentFeatures& content, int n_frames) {
  if (n_frames <= 0) throw UsageError("n_frames must be positive");
  const Eigen::Index src = content.frames();
  if (src == 0) throw DataError("empty content features");
  if (src == n_frames) return content;

  ContentFeatures out;
  out.values.resize(n_frames, content.dim());
  for (int i = 0; i < n_frames; ++i) {
    const double pos = n_frames == 1 ? 0.0 : static_cast<double>(i) * (src - 1) / (n_frames - 1);
    const auto lo = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index hi = std::min(lo + 1, src - 1);
    const double frac = pos - lo;
    out.values.row(i) = (1.0 - frac) * content.values.row(lo) + frac * content.values.row(hi);
  }
  return out;
}

}  // namespace spasvc
