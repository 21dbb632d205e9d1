#include "spasvc/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace spasvc::fft {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct Plan {
  std::size_t n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;

  explicit Plan(std::size_t size) : n(size) {
    std::lock_guard lock(planner_mutex());
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
    fftw_free(real);
    fftw_free(spec);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
};

Plan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Plan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Plan>(n);
  return *slot;
}

}  // namespace

void rfft(std::span<const double> in, std::span<cplx> out) {
  const std::size_t n = in.size();
  if (n == 0 || out.size() != n / 2 + 1) throw std::invalid_argument("rfft: bad sizes");
  Plan& p = plan_for(n);
  std::memcpy(p.real, in.data(), n * sizeof(double));
  fftw_execute(p.forward);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {p.spec[k][0], p.spec[k][1]};
}

std::vector<cplx> rfft(std::span<const double> in) {
  std::vector<cplx> out(in.size() / 2 + 1);
  rfft(in, out);
  return out;
}

void irfft(std::span<const cplx> in, std::span<double> out) {
  const std::size_t n = out.size();
  if (n == 0 || in.size() != n / 2 + 1) throw std::invalid_argument("irfft: bad sizes");
  Plan& p = plan_for(n);
  for (std::size_t k = 0; k < in.size(); ++k) {
    p.spec[k][0] = in[k].real();
    p.spec[k][1] = in[k].imag();
  }
  // c2r destroys its input; the spectrum buffer is rewritten on every call.
  fftw_execute(p.inverse);
  std::memcpy(out.data(), p.real, n * sizeof(double));
}

std::vector<double> irfft(std::span<const cplx> in, std::size_t n) {
  std::vector<double> out(n);
  irfft(in, out);
  return out;
}

}  // namespace spasvc::fft
