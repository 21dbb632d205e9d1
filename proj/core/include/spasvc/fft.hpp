#pragma once

#include <complex>
#include <span>
#include <vector>

namespace spasvc::fft {

using cplx = std::complex<double>;

// Real-input transforms backed by FFTW. Plans are cached per thread and
// built with FFTW_ESTIMATE so results are bit-reproducible run to run.

/// Forward transform of `in` (length n) into n/2+1 bins.
void rfft(std::span<const double> in, std::span<cplx> out);
std::vector<cplx> rfft(std::span<const double> in);

/// Unnormalized inverse: out[k] = sum over the Hermitian spectrum. `in` has n/2+1 bins.
void irfft(std::span<const cplx> in, std::span<double> out);
std::vector<double> irfft(std::span<const cplx> in, std::size_t n);

}  // namespace spasvc::fft
