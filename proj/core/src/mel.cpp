#include "spasvc/mel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spasvc/error.hpp"
#include "spasvc/fft.hpp"

namespace spasvc {
namespace {

std::vector<double> periodic_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// Reflect-padding index map for position i in [-pad, n + pad).
long reflect(long i, long n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

int frame_count(std::size_t n_samples, int hop) {
  return static_cast<int>((n_samples + static_cast<std::size_t>(hop) - 1) / static_cast<std::size_t>(hop));
}

double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  static const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  static const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

namespace {
std::vector<double> mel_edges(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges;
}
}  // namespace

Mat mel_filterbank(const MelConfig& cfg) {
  const int bins = cfg.n_fft / 2 + 1;
  const auto edges = mel_edges(cfg);
  Mat fb = Mat::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    const double enorm = 2.0 / (f2 - f0);
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      const double w = std::max(0.0, std::min((f - f0) / (f1 - f0), (f2 - f) / (f2 - f1)));
      fb(m, b) = w * enorm;
    }
  }
  return fb;
}

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  const auto edges = mel_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

MelAnalyzer::MelAnalyzer(MelConfig cfg) : cfg_(cfg) {
  if (cfg.n_fft <= 0 || cfg.hop <= 0 || cfg.n_mels <= 0 || cfg.sample_rate <= 0)
    throw UsageError("invalid mel configuration");
  fb_ = std::make_shared<const Mat>(mel_filterbank(cfg));
  window_ = std::make_shared<const std::vector<double>>(periodic_hann(cfg.n_fft));
}

Mat MelAnalyzer::log_mel(std::span<const double> samples, double keyshift) const {
  const int bins = cfg_.n_fft / 2 + 1;
  const double factor = std::pow(2.0, keyshift / 12.0);
  const int n_fft = keyshift == 0.0 ? cfg_.n_fft : static_cast<int>(std::lround(cfg_.n_fft * factor));
  const auto window = keyshift == 0.0 ? *window_ : periodic_hann(n_fft);
  const double gain = static_cast<double>(cfg_.n_fft) / n_fft;
  const long n = static_cast<long>(samples.size());
  if (n < n_fft) throw DataError("clip too short");

  const int frames = frame_count(samples.size(), cfg_.hop);
  const long pad = n_fft / 2;
  const int keep = std::min(bins, n_fft / 2 + 1);
  Mat mag = Mat::Zero(frames, bins);
  std::vector<double> buf(static_cast<std::size_t>(n_fft));
  std::vector<fft::cplx> spec(static_cast<std::size_t>(n_fft / 2 + 1));
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * cfg_.hop - pad;
    for (int i = 0; i < n_fft; ++i) buf[i] = window[i] * samples[static_cast<std::size_t>(reflect(start + i, n))];
    fft::rfft(buf, spec);
    for (int b = 0; b < keep; ++b) mag(t, b) = std::abs(spec[b]) * gain;
  }
  Mat mel;
  mel.noalias() = mag * fb_->transpose();
  const double floor = cfg_.log_floor;
  return mel.unaryExpr([floor](double v) { return std::log(std::max(v, floor)); });
}

ag::Var MelAnalyzer::log_mel_var(const ag::Var& wave, const MelNorm& norm) const {
  if (wave.rows() != 1) throw std::invalid_argument("log_mel_var: expected a 1 x N waveform");
  const int n_fft = cfg_.n_fft;
  const int bins = n_fft / 2 + 1;
  const long n = static_cast<long>(wave.cols());
  if (n < n_fft) throw DataError("clip too short");
  const int frames = frame_count(static_cast<std::size_t>(n), cfg_.hop);
  const long pad = n_fft / 2;
  const double* x = wave.value().data();

  Eigen::Matrix<fft::cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> spec(frames, bins);
  Mat mag(frames, bins);
  std::vector<double> buf(static_cast<std::size_t>(n_fft));
  std::vector<fft::cplx> out(static_cast<std::size_t>(bins));
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * cfg_.hop - pad;
    for (int i = 0; i < n_fft; ++i) buf[i] = (*window_)[i] * x[reflect(start + i, n)];
    fft::rfft(buf, out);
    for (int b = 0; b < bins; ++b) {
      spec(t, b) = out[b];
      mag(t, b) = std::abs(out[b]);
    }
  }
  Mat melmag;
  melmag.noalias() = mag * fb_->transpose();
  const double floor = cfg_.log_floor;
  const double range = norm.range();
  Mat value = melmag.unaryExpr([&](double v) { return (std::log(std::max(v, floor)) - norm.min) / range; });

  return ag::make_op(std::move(value), {wave}, [fb = fb_, window = window_, n_fft, hop = cfg_.hop, spec = std::move(spec), mag = std::move(mag),
                                                 melmag = std::move(melmag), frames, n, pad, range,
                                                 floor](ag::Node& self) {
    const int bins = n_fft / 2 + 1;
    // d/d melmag of log(max(melmag, floor)) / range
    Mat g_mel = self.grad.cwiseQuotient(melmag) / range;
    for (Eigen::Index i = 0; i < g_mel.size(); ++i)
      if (melmag.data()[i] <= floor) g_mel.data()[i] = 0.0;
    Mat g_mag;
    g_mag.noalias() = g_mel * *fb;

    Mat gx = Mat::Zero(1, n);
    std::vector<fft::cplx> v(static_cast<std::size_t>(bins));
    std::vector<double> frame_grad(static_cast<std::size_t>(n_fft));
    for (int t = 0; t < frames; ++t) {
      // d|X_b|/dx_n = w_n Re(conj(X_b) e^{-i 2 pi b n / N}) / |X_b|, gathered with one inverse FFT.
      for (int b = 0; b < bins; ++b) {
        const double m = mag(t, b);
        if (m < 1e-300) {
          v[b] = 0.0;
          continue;
        }
        const double half = (b == 0 || b == bins - 1) ? 1.0 : 0.5;
        v[b] = std::conj(g_mag(t, b) * std::conj(spec(t, b)) / m) * half;
      }
      fft::irfft(v, frame_grad);
      const long start = static_cast<long>(t) * hop - pad;
      for (int i = 0; i < n_fft; ++i) gx(0, reflect(start + i, n)) += (*window)[i] * frame_grad[i];
    }
    self.inputs[0]->accumulate(gx);
  });
}

MelSpec mel_spectrogram(const AudioClip& clip, const MelConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate)
    throw UsageError("mel_spectrogram: clip rate " + std::to_string(clip.sample_rate) + " != configured " +
                     std::to_string(cfg.sample_rate));
  validate(clip);
  MelAnalyzer analyzer(cfg);
  MelSpec mel;
  mel.values = analyzer.log_mel(clip.samples);
  mel.n_mels = cfg.n_mels;
  mel.hop = cfg.hop;
  return mel;
}

MelSpec normalize(const MelSpec& mel, const MelNorm& norm) {
  MelSpec out = mel;
  out.values = ((mel.values.array() - norm.min) / norm.range()).cwiseMax(0.0).cwiseMin(1.0).matrix();
  out.norm_min = norm.min;
  out.norm_max = norm.max;
  out.normalized = true;
  return out;
}

Mat denormalize(const Mat& normalized, const MelNorm& norm) {
  return (normalized.array() * norm.range() + norm.min).matrix();
}

VolumeContour extract_volume(const AudioClip& clip, int hop, int window) {
  if (hop <= 0) throw UsageError("hop must be positive");
  if (window <= 0) window = 4 * hop;
  const long n = static_cast<long>(clip.samples.size());
  if (n < window) throw DataError("clip too short");
  const int frames = frame_count(clip.samples.size(), hop);
  const long pad = window / 2;
  VolumeContour vol;
  vol.rms.resize(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop - pad;
    double acc = 0.0;
    for (int i = 0; i < window; ++i) {
      const double s = clip.samples[static_cast<std::size_t>(reflect(start + i, n))];
      acc += s * s;
    }
    vol.rms[t] = std::sqrt(acc / window);
  }
  return vol;
}

}  // namespace spasvc
