#include "oracles.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include <unistd.h>

namespace oracle {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::vector<double> sine(double hz, int sample_rate, std::size_t n, double amplitude, double phase) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = amplitude * std::sin(2.0 * kPi * hz * static_cast<double>(i) / sample_rate + phase);
  return out;
}

std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, amplitude);
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

double rms(const std::vector<double>& x, std::size_t begin, std::size_t end) {
  end = std::min(end, x.size());
  if (end <= begin) return 0.0;
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

double dtft_magnitude(const std::vector<double>& x, int sample_rate, double hz) {
  double re = 0.0, im = 0.0;
  const double w = 2.0 * kPi * hz / sample_rate;
  for (std::size_t i = 0; i < x.size(); ++i) {
    re += x[i] * std::cos(w * static_cast<double>(i));
    im -= x[i] * std::sin(w * static_cast<double>(i));
  }
  return std::hypot(re, im);
}

double peak_frequency(const std::vector<double>& x, int sample_rate, double lo, double hi, double step) {
  double best = lo, best_mag = -1.0;
  for (double f = lo; f <= hi; f += step) {
    const double m = dtft_magnitude(x, sample_rate, f);
    if (m > best_mag) {
      best_mag = m;
      best = f;
    }
  }
  return best;
}

double dft_bin(const std::vector<double>& x, int k) {
  const auto n = static_cast<double>(x.size());
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = 2.0 * kPi * k * static_cast<double>(i) / n;
    re += x[i] * std::cos(a);
    im -= x[i] * std::sin(a);
  }
  return std::hypot(re, im);
}

double slaney_hz_to_mel(double hz) {
  // 3 mels per 200 Hz up to 1 kHz, then 27 mels per factor 6.4.
  if (hz < 1000.0) return 3.0 * hz / 200.0;
  return 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}

double slaney_mel_to_hz(double mel) {
  if (mel < 15.0) return 200.0 * mel / 3.0;
  return 1000.0 * std::pow(6.4, (mel - 15.0) / 27.0);
}

std::vector<double> mel_centres(int n_mels, double fmin, double fmax) {
  const double a = slaney_hz_to_mel(fmin), b = slaney_hz_to_mel(fmax);
  std::vector<double> out;
  for (int i = 1; i <= n_mels; ++i) out.push_back(slaney_mel_to_hz(a + (b - a) * i / (n_mels + 1)));
  return out;
}

double autocorr_f0(const std::vector<double>& x, int sample_rate, double fmin, double fmax) {
  const int lag_lo = static_cast<int>(std::floor(sample_rate / fmax));
  const int lag_hi = static_cast<int>(std::ceil(sample_rate / fmin));
  const int n = static_cast<int>(x.size()) - lag_hi - 1;
  auto r = [&](int lag) {
    double num = 0.0, e0 = 0.0, e1 = 0.0;
    for (int i = 0; i < n; ++i) {
      num += x[i] * x[i + lag];
      e0 += x[i] * x[i];
      e1 += x[i + lag] * x[i + lag];
    }
    return num / std::sqrt(e0 * e1 + 1e-300);
  };
  std::vector<double> rr(static_cast<std::size_t>(lag_hi + 2), 0.0);
  for (int lag = lag_lo; lag <= lag_hi + 1; ++lag) rr[lag] = r(lag);
  // First local maximum within 95% of the global one avoids octave errors.
  const double global = *std::max_element(rr.begin() + lag_lo, rr.begin() + lag_hi + 1);
  int best = lag_lo;
  for (int lag = lag_lo + 1; lag <= lag_hi; ++lag) {
    if (rr[lag] >= rr[lag - 1] && rr[lag] >= rr[lag + 1] && rr[lag] >= 0.95 * global) {
      best = lag;
      break;
    }
  }
  double shift = 0.0;
  if (best > lag_lo && best <= lag_hi) {
    const double a = rr[best - 1], b = rr[best], c = rr[best + 1];
    const double den = a - 2.0 * b + c;
    if (std::abs(den) > 1e-15) shift = 0.5 * (a - c) / den;
  }
  return sample_rate / (best + shift);
}

double ssim(const Mat& x, const Mat& y, double c1, double c2, bool product_variant, int window, double sigma) {
  const long rows = x.rows(), cols = x.cols();
  std::vector<double> w;
  long size_r = rows, size_c = cols;
  if (window > 0) {
    long k = std::min<long>(window, std::min(rows, cols));
    if (k % 2 == 0) --k;
    size_r = size_c = k;
    w.resize(static_cast<std::size_t>(k * k));
    double total = 0.0;
    for (long i = 0; i < k; ++i)
      for (long j = 0; j < k; ++j) {
        const double di = i - (k - 1) / 2.0, dj = j - (k - 1) / 2.0;
        w[i * k + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        total += w[i * k + j];
      }
    for (auto& v : w) v /= total;
  } else {
    w.assign(static_cast<std::size_t>(rows * cols), 1.0 / static_cast<double>(rows * cols));
  }
  double acc = 0.0;
  long count = 0;
  for (long r0 = 0; r0 + size_r <= rows; ++r0) {
    for (long c0 = 0; c0 + size_c <= cols; ++c0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (long i = 0; i < size_r; ++i)
        for (long j = 0; j < size_c; ++j) {
          const double wt = w[i * size_c + j];
          const double a = x(r0 + i, c0 + j), b = y(r0 + i, c0 + j);
          mx += wt * a;
          my += wt * b;
        }
      for (long i = 0; i < size_r; ++i)
        for (long j = 0; j < size_c; ++j) {
          const double wt = w[i * size_c + j];
          const double a = x(r0 + i, c0 + j) - mx, b = y(r0 + i, c0 + j) - my;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      double s;
      if (product_variant) {
        s = (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (std::sqrt(sxx) * std::sqrt(syy) + c2));
      } else {
        s = (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      }
      acc += s;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

Mat numeric_gradient(const std::function<double(const Mat&)>& f, const Mat& x, double h) {
  Mat g(x.rows(), x.cols());
  Mat xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = xp.data()[i];
    xp.data()[i] = keep + h;
    const double fp = f(xp);
    xp.data()[i] = keep - h;
    const double fm = f(xp);
    xp.data()[i] = keep;
    g.data()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_relative_error(const Mat& a, const Mat& b, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.data()[i] - b.data()[i]);
    const double s = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), floor});
    worst = std::max(worst, d / s);
  }
  return worst;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("spasvc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  const std::vector<char> da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::vector<char> db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return da == db;
}

}  // namespace oracle
