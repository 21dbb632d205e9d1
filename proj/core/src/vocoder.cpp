#include "spasvc/vocoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "spasvc/error.hpp"
#include "spasvc/fft.hpp"

namespace spasvc {
namespace {

constexpr double kPi = std::numbers::pi;

// |W(nu)| / (N/2) for a periodic Hann window, nu in bins.
double hann_kernel(double nu) {
  const double a = std::abs(nu);
  if (a < 1e-9) return 1.0;
  if (std::abs(a - 1.0) < 1e-9) return 0.5;
  return std::abs(std::sin(kPi * a) / (kPi * a) / (1.0 - a * a));
}

std::vector<double> fill_unvoiced(const F0Contour& f0) {
  std::vector<double> out(f0.hz.begin(), f0.hz.end());
  double last = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (f0.voiced[t]) last = f0.hz[t];
    else out[t] = last;
  }
  last = 0.0;
  for (std::size_t t = out.size(); t-- > 0;) {
    if (f0.voiced[t]) last = f0.hz[t];
    else if (out[t] == 0.0) out[t] = last;
  }
  return out;
}

double lerp_frames(const std::vector<double>& v, double pos) {
  const auto t0 = static_cast<std::size_t>(pos);
  const std::size_t t1 = std::min(t0 + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(t0);
  return (1.0 - frac) * v[t0] + frac * v[t1];
}

}  // namespace

void VocoderConfig::validate() const {
  if (n_harmonics < 1) throw UsageError("vocoder needs at least one harmonic");
  if (noise_gain < 0.0) throw UsageError("vocoder noise gain must be non-negative");
  if (fit_iterations < 0) throw UsageError("vocoder fit iterations must be non-negative");
}

std::vector<double> sinusoid_mel_response(const Mat& filterbank, const MelConfig& cfg, double hz) {
  const double pos = hz * cfg.n_fft / cfg.sample_rate;
  const int bins = cfg.n_fft / 2 + 1;
  const double peak = cfg.n_fft / 4.0;
  std::vector<double> out(static_cast<std::size_t>(filterbank.rows()), 0.0);
  const int lo = std::max(0, static_cast<int>(std::floor(pos)) - 6);
  const int hi = std::min(bins - 1, static_cast<int>(std::ceil(pos)) + 6);
  for (int b = lo; b <= hi; ++b) {
    const double mag = peak * hann_kernel(b - pos);
    for (Eigen::Index m = 0; m < filterbank.rows(); ++m) out[m] += filterbank(m, b) * mag;
  }
  return out;
}

Vocoder::Vocoder(VocoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  fb_ = mel_filterbank(cfg_.mel);
  band_sums_.resize(static_cast<std::size_t>(cfg_.mel.n_mels));
  for (int m = 0; m < cfg_.mel.n_mels; ++m) band_sums_[m] = std::max(fb_.row(m).sum(), 1e-12);
  centers_ = mel_center_frequencies(cfg_.mel);
}

AudioClip Vocoder::vocode(const MelSpec& mel, const F0Contour& f0, std::uint64_t seed) const {
  const Eigen::Index frames = mel.frames();
  const int n_mels = cfg_.mel.n_mels;
  const int hop = cfg_.hop();
  const int sr = cfg_.sample_rate();
  if (mel.values.cols() != n_mels) throw DataError("vocoder: mel has the wrong number of bands");
  if (static_cast<Eigen::Index>(f0.size()) != frames) throw DataError("vocoder: mel and F0 frame counts differ");

  AudioClip out;
  out.sample_rate = sr;
  out.samples.assign(static_cast<std::size_t>(frames * hop), 0.0);
  if (frames == 0) return out;

  const Mat raw = mel.normalized ? denormalize(mel.values, MelNorm{mel.norm_min, mel.norm_max}) : mel.values;
  const Mat target = raw.array().exp().matrix();  // frames x n_mels band magnitudes
  const double floor_mag = cfg_.mel.log_floor;
  const double h_limit = std::min(cfg_.mel.fmax, 0.5 * sr * 0.98);

  // Harmonic amplitudes per frame (frames x n_harmonics) and residual band magnitudes.
  Mat amps = Mat::Zero(frames, cfg_.n_harmonics);
  Mat residual = (target.array() - floor_mag).cwiseMax(0.0).matrix();
  Eigen::MatrixXd R(n_mels, cfg_.n_harmonics);
  for (Eigen::Index t = 0; t < frames; ++t) {
    if (!f0.voiced[static_cast<std::size_t>(t)]) continue;
    const double hz = f0.hz[static_cast<std::size_t>(t)];
    int nh = 0;
    while (nh < cfg_.n_harmonics && (nh + 1) * hz < h_limit) {
      const auto col = sinusoid_mel_response(fb_, cfg_.mel, (nh + 1) * hz);
      for (int m = 0; m < n_mels; ++m) R(m, nh) = col[m];
      ++nh;
    }
    if (nh == 0) continue;
    const auto Rh = R.leftCols(nh);
    const Eigen::VectorXd M = residual.row(t).transpose();
    const Eigen::VectorXd colsum = Rh.colwise().sum().transpose();

    // Start from the envelope at each harmonic's strongest band, then refine
    // with multiplicative (KL-divergence) non-negative updates.
    Eigen::VectorXd a(nh);
    for (int h = 0; h < nh; ++h) {
      Eigen::Index m_best = 0;
      const double r_best = Rh.col(h).maxCoeff(&m_best);
      a[h] = r_best > 1e-12 ? M[m_best] / r_best / std::max(1.0, colsum[h] / r_best) : 0.0;
    }
    for (int it = 0; it < cfg_.fit_iterations; ++it) {
      const Eigen::VectorXd V = (Rh * a).array() + 1e-12;
      const Eigen::VectorXd num = Rh.transpose() * (M.array() / V.array()).matrix();
      for (int h = 0; h < nh; ++h) a[h] = colsum[h] > 1e-12 ? a[h] * num[h] / colsum[h] : 0.0;
    }
    const Eigen::VectorXd fit = Rh * a;
    for (int m = 0; m < n_mels; ++m) residual(t, m) = std::max(0.0, M[m] - fit[m]);
    amps.row(t).head(nh) = a.transpose();
  }

  // Harmonic branch: phase-integrated sinusoids with frame-interpolated amplitudes.
  const auto f0_filled = fill_unvoiced(f0);
  const auto n = static_cast<long>(out.samples.size());
  std::vector<double> inst_hz(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) inst_hz[i] = lerp_frames(f0_filled, static_cast<double>(i) / hop);
  std::vector<double> amp_track(static_cast<std::size_t>(frames));
  for (int h = 0; h < cfg_.n_harmonics; ++h) {
    if (amps.col(h).maxCoeff() <= 0.0) continue;
    for (Eigen::Index t = 0; t < frames; ++t) amp_track[t] = amps(t, h);
    double phase = 0.0;
    for (long i = 0; i < n; ++i) {
      const double hz = (h + 1) * inst_hz[i];
      phase += 2.0 * kPi * hz / sr;
      if (phase > 2.0 * kPi) phase -= 2.0 * kPi * std::floor(phase / (2.0 * kPi));
      if (hz >= h_limit) continue;
      const double a = lerp_frames(amp_track, static_cast<double>(i) / hop);
      if (a > 0.0) out.samples[i] += a * std::cos(phase);
    }
  }

  // Noise branch: Gaussian frames shaped in the frequency domain and
  // overlap-added with a Hann window at 50% overlap.
  if (cfg_.noise_gain > 0.0) {
    const int width = 2 * hop;
    const int bins = hop + 1;
    // Band magnitude -> per-sample noise std: E|X| = std * sqrt(3*pi*N/32) per bin for Hann analysis.
    const double rayleigh = std::sqrt(3.0 * kPi * cfg_.mel.n_fft / 32.0);
    const double ola = 1.0 / std::sqrt(0.75);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> z(static_cast<std::size_t>(width)), y(static_cast<std::size_t>(width));
    std::vector<fft::cplx> spec(static_cast<std::size_t>(bins));
    std::vector<double> band_std(static_cast<std::size_t>(n_mels));
    std::vector<double> gain(static_cast<std::size_t>(bins));
    for (Eigen::Index f = 0; f <= frames; ++f) {
      const Eigen::Index p = std::min(f, frames - 1);
      for (int m = 0; m < n_mels; ++m) band_std[m] = residual(p, m) / (band_sums_[m] * rayleigh);
      for (int b = 0; b < bins; ++b) {
        const double hz = static_cast<double>(b) * sr / width;
        if (hz < cfg_.mel.fmin || hz > cfg_.mel.fmax) {
          gain[b] = 0.0;
          continue;
        }
        const auto it = std::upper_bound(centers_.begin(), centers_.end(), hz);
        if (it == centers_.begin()) gain[b] = band_std.front();
        else if (it == centers_.end()) gain[b] = band_std.back();
        else {
          const auto j = static_cast<std::size_t>(it - centers_.begin());
          const double w = (hz - centers_[j - 1]) / (centers_[j] - centers_[j - 1]);
          gain[b] = (1.0 - w) * band_std[j - 1] + w * band_std[j];
        }
      }
      for (auto& v : z) v = normal(rng);
      fft::rfft(z, spec);
      for (int b = 0; b < bins; ++b) spec[b] *= gain[b];
      fft::irfft(spec, y);
      const long start = static_cast<long>(f - 1) * hop;
      for (int i = 0; i < width; ++i) {
        const long j = start + i;
        if (j < 0 || j >= n) continue;
        const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * i / width);
        out.samples[j] += cfg_.noise_gain * ola * w * y[i] / width;
      }
    }
  }
  return out;
}

AudioClip vocode(const MelSpec& mel, const F0Contour& f0, const VocoderConfig& cfg, std::uint64_t seed) {
  return Vocoder(cfg).vocode(mel, f0, seed);
}

}  // namespace spasvc
