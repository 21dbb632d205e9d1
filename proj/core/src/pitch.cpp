#include "spasvc/pitch.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spasvc/error.hpp"
#include "spasvc/fft.hpp"
#include "spasvc/mel.hpp"

namespace spasvc {
namespace {

int max_lag(const F0Config& cfg) { return static_cast<int>(std::floor(cfg.sample_rate / cfg.fmin)); }

// Zero-phase windowed-sinc (Blackman) low-pass with zero padding at the edges.
std::vector<double> lowpass(std::span<const double> x, double cutoff_hz, int sample_rate) {
  const double fc = cutoff_hz / sample_rate;
  const int half = static_cast<int>(std::ceil(2.0 / fc));
  std::vector<double> h(static_cast<std::size_t>(2 * half + 1));
  double total = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double w = 0.42 + 0.5 * std::cos(std::numbers::pi * k / (half + 1)) +
                     0.08 * std::cos(2.0 * std::numbers::pi * k / (half + 1));
    const double s = k == 0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * k) / (std::numbers::pi * k);
    h[static_cast<std::size_t>(k + half)] = w * s;
    total += w * s;
  }
  for (double& v : h) v /= total;
  const long n = static_cast<long>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - half), hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (long j = lo; j <= hi; ++j) acc += h[static_cast<std::size_t>(j - i + half)] * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

std::size_t F0Contour::voiced_count() const {
  return static_cast<std::size_t>(std::count(voiced.begin(), voiced.end(), true));
}

F0Contour F0Contour::constant(std::size_t frames, double hz) {
  return {std::vector<double>(frames, hz), std::vector<bool>(frames, hz > 0.0)};
}

F0Contour F0Contour::unvoiced(std::size_t frames) {
  return {std::vector<double>(frames, 0.0), std::vector<bool>(frames, false)};
}

int yin_frame_length(const F0Config& cfg) { return 2 * max_lag(cfg); }

YinFrame yin_analyze(std::span<const double> frame, const F0Config& cfg) {
  const int tau_max = max_lag(cfg);
  const int width = tau_max;
  const int tau_min = std::max(2, static_cast<int>(std::floor(cfg.sample_rate / cfg.fmax)));
  if (static_cast<int>(frame.size()) < width + tau_max) throw DataError("clip too short");

  YinFrame res;
  // Prefix energies give e_tau = sum_{j=tau}^{tau+W-1} x_j^2 in O(1).
  std::vector<double> prefix(static_cast<std::size_t>(width + tau_max) + 1, 0.0);
  for (int i = 0; i < width + tau_max; ++i) prefix[i + 1] = prefix[i] + frame[i] * frame[i];
  const double e0 = prefix[width];
  res.rms = std::sqrt(e0 / width);
  if (res.rms < cfg.silence_rms) return res;

  const std::size_t n = next_pow2(static_cast<std::size_t>(width + tau_max));
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy_n(frame.begin(), width, a.begin());
  std::copy_n(frame.begin(), width + tau_max, b.begin());
  auto fa = fft::rfft(a);
  auto fb = fft::rfft(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fb[k];
  const auto corr = fft::irfft(fa, n);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> cmndf(static_cast<std::size_t>(tau_max) + 1, 1.0);
  double running = 0.0;
  for (int tau = 1; tau <= tau_max; ++tau) {
    const double e_tau = prefix[tau + width] - prefix[tau];
    const double d = std::max(0.0, e0 + e_tau - 2.0 * corr[tau] * inv_n);
    running += d;
    cmndf[tau] = running > 0.0 ? d * tau / running : 1.0;
  }

  int best = -1;
  for (int tau = tau_min; tau < tau_max; ++tau) {
    if (cmndf[tau] < cfg.threshold) {
      while (tau + 1 < tau_max && cmndf[tau + 1] < cmndf[tau]) ++tau;
      best = tau;
      break;
    }
  }
  if (best < 0) {
    best = tau_min;
    for (int tau = tau_min; tau < tau_max; ++tau)
      if (cmndf[tau] < cmndf[best]) best = tau;
  }

  double period = best;
  if (best > 1 && best < tau_max) {
    const double l = cmndf[best - 1], c = cmndf[best], r = cmndf[best + 1];
    const double denom = l - 2.0 * c + r;
    if (denom > 0.0) period = best + 0.5 * (l - r) / denom;
  }
  res.period = period;
  res.aperiodicity = cmndf[best];
  return res;
}

F0Contour estimate_f0(const AudioClip& clip, const F0Config& cfg) {
  if (clip.sample_rate != cfg.sample_rate)
    throw UsageError("estimate_f0: clip rate " + std::to_string(clip.sample_rate) + " != configured " +
                     std::to_string(cfg.sample_rate));
  validate(clip);
  const int len = yin_frame_length(cfg);
  const long n = static_cast<long>(clip.samples.size());
  if (n < len) throw DataError("clip too short");

  const bool filter = cfg.lowpass_hz > 0.0 && cfg.lowpass_hz < 0.5 * cfg.sample_rate;
  const std::vector<double> x = filter ? lowpass(clip.samples, cfg.lowpass_hz, cfg.sample_rate) : clip.samples;

  const int frames = frame_count(clip.samples.size(), cfg.hop);
  F0Contour f0 = F0Contour::unvoiced(static_cast<std::size_t>(frames));
  std::vector<double> buf(static_cast<std::size_t>(len));
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * cfg.hop - len / 2;
    for (int i = 0; i < len; ++i) {
      const long j = start + i;
      buf[i] = (j >= 0 && j < n) ? x[static_cast<std::size_t>(j)] : 0.0;
    }
    const YinFrame yf = yin_analyze(buf, cfg);
    if (yf.period <= 0.0 || yf.aperiodicity >= cfg.voicing_threshold) continue;
    const double hz = cfg.sample_rate / yf.period;
    if (hz < cfg.fmin || hz > cfg.fmax) continue;
    f0.hz[t] = hz;
    f0.voiced[t] = true;
  }
  return f0;
}

F0Contour shift_pitch_contour(const F0Contour& f0, int key) {
  F0Contour out = f0;
  const double ratio = std::pow(2.0, key / 12.0);
  for (std::size_t i = 0; i < out.hz.size(); ++i) out.hz[i] = out.voiced[i] ? f0.hz[i] * ratio : 0.0;
  return out;
}

int sample_cycle_key(std::mt19937_64& rng, int lo, int hi, CycleDirection dir) {
  std::uniform_int_distribution<int> mag(lo, hi);
  const int k = mag(rng);
  switch (dir) {
    case CycleDirection::Up:
      return k;
    case CycleDirection::Down:
      return -k;
    case CycleDirection::Both:
      return std::bernoulli_distribution(0.5)(rng) ? k : -k;
  }
  return k;
}

int sample_perturb_key(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace spasvc
