#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dereverb::fft {

// Thin FFTW wrappers. Plans are created once per (kind, size) and cached;
// execution is thread-safe and deterministic for a given size.

/// Real-to-complex forward transform of length n = in.size(); writes n/2+1 bins.
void rfft(std::span<const double> in, std::span<std::complex<double>> out);

/// Complex-to-real inverse of length n = out.size() from n/2+1 Hermitian bins.
/// Unnormalized: irfft(rfft(x)) == n * x. Imaginary parts of DC/Nyquist are ignored.
void irfft(std::span<const std::complex<double>> in, std::span<double> out);

/// Complex forward transform (unnormalized, e^{-j...}).
void fft(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

/// Complex inverse transform (unnormalized, e^{+j...}).
void ifft(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

/// Smallest size >= n whose only prime factors are 2, 3 and 5.
std::size_t good_size(std::size_t n);

/// Linear convolution via FFT. Output length a.size() + b.size() - 1.
std::vector<double> convolve(std::span<const double> a, std::span<const double> b);

/// Cross-correlation used as the adjoint of convolve with respect to `a`:
/// returns r[i] = sum_j g[i + j] * b[j] for i in [0, n_a).
std::vector<double> correlate(std::span<const double> g, std::span<const double> b,
                              std::size_t n_a);

}  // namespace dereverb::fft
