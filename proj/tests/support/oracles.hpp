#pragma once

// Reference implementations used as test oracles. They are deliberately
// naive (direct sums, double loops) and share no code with the library.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> sine(double hz, int sample_rate, std::size_t n, double amplitude = 1.0, double phase = 0.0);
std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double amplitude = 1.0);
double rms(const std::vector<double>& x, std::size_t begin = 0, std::size_t end = SIZE_MAX);

/// |DTFT| of x at frequency hz (direct sum).
double dtft_magnitude(const std::vector<double>& x, int sample_rate, double hz);
/// Frequency with the largest |DTFT| on a grid [lo, hi] in `step` Hz.
double peak_frequency(const std::vector<double>& x, int sample_rate, double lo, double hi, double step);
/// Magnitude of the plain DFT of x (length N) at integer bin k.
double dft_bin(const std::vector<double>& x, int k);

/// Slaney mel scale written from its definition (linear below 1 kHz, log above).
double slaney_hz_to_mel(double hz);
double slaney_mel_to_hz(double mel);
/// Centre frequencies of n_mels bands evenly spaced in mel between fmin and fmax.
std::vector<double> mel_centres(int n_mels, double fmin, double fmax);

/// F0 by picking the normalised-autocorrelation peak in [fmin, fmax] with
/// parabolic refinement, on a single analysis window.
double autocorr_f0(const std::vector<double>& x, int sample_rate, double fmin, double fmax);

/// SSIM with every statistic computed by explicit loops.
/// window <= 0: one global window. Otherwise a Gaussian of that odd size
/// (shrunk to the largest odd size fitting both dimensions), valid positions only.
double ssim(const Mat& x, const Mat& y, double c1, double c2, bool product_variant, int window, double sigma);

/// Central differences of f at x, one coordinate at a time.
Mat numeric_gradient(const std::function<double(const Mat&)>& f, const Mat& x, double h);

double max_relative_error(const Mat& a, const Mat& b, double floor = 1e-6);

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// Byte-wise file equality.
bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace oracle
