#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dereverb/types.hpp"

namespace dereverb::dsp {

/// STFT framing. Frames hold a periodic Hann window of `window_ms` followed by
/// zeros up to `fft_size`; frame m covers samples [m*hop - pad, m*hop - pad + window)
/// with pad = window - hop, so every sample t >= 0 gets full overlap-add coverage.
struct StftConfig {
  double sample_rate = 16000.0;
  double window_ms = 32.0;
  double hop_ms = 8.0;
  /// Zero means 2 * window length (513 bins at 16 kHz / 32 ms).
  std::size_t fft_size = 0;

  std::size_t window_length() const;
  std::size_t hop_length() const;
  std::size_t fft_length() const;
  std::size_t bins() const { return fft_length() / 2 + 1; }
  std::size_t pad() const { return window_length() - hop_length(); }

  /// ceil((length + pad) / hop).
  std::size_t frames_for(std::size_t length) const;
  /// Number of samples fully covered by `frames` frames: frames * hop - pad.
  std::size_t covered_length(std::size_t frames) const;

  std::vector<double> window() const;
  /// Overlap-add sum of the analysis window (constant for COLA windows).
  double ola_gain() const;

  /// Throws ConfigError if the framing is unusable.
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

struct Spectrogram {
  ComplexMatrix values;  // frames x bins
  StftConfig config;

  std::size_t frames() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(values.cols()); }
};

Spectrogram stft(std::span<const double> x, const StftConfig& cfg);

/// Least-squares inverse (windowed overlap-add normalized by the summed squared
/// window). Exact on consistent spectrograms; stft(istft(S)) is the orthogonal
/// projection of S onto consistent spectrograms. `length == 0` returns
/// covered_length(frames).
std::vector<double> istft(const Spectrogram& s, std::size_t length = 0);

/// Full-frame synthesis: every one of the fft_size samples of each inverse
/// frame is overlap-added (buffer indices >= fft_size - pad wrap to negative
/// time offsets), divided by the window's OLA gain. Also exact on consistent
/// spectrograms, and keeps the tails produced by per-bin convolution.
std::vector<double> overlap_add(const Spectrogram& s, std::size_t length);

// Adjoints under the real inner products <x, y> = sum x*y and
// <U, S> = Re sum U * conj(S) over the stored bins.
std::vector<double> stft_vjp(const StftConfig& cfg, std::size_t length, const ComplexMatrix& cotangent);
ComplexMatrix istft_vjp(const StftConfig& cfg, std::size_t frames, std::span<const double> cotangent);
ComplexMatrix overlap_add_vjp(const StftConfig& cfg, std::size_t frames, std::span<const double> cotangent);

/// |z|^exponent * e^{j arg z}, elementwise.
ComplexMatrix compress(const ComplexMatrix& s, double exponent = 2.0 / 3.0);
/// The derivative at z = 0 is taken as 0.
ComplexMatrix compress_vjp(const ComplexMatrix& s, const ComplexMatrix& cotangent,
                           double exponent = 2.0 / 3.0);

/// Minimum-phase signal with the same DFT magnitude as h (same length):
///   theta = -Hilbert(log max(|F h|, 1e-8 max|F h|)),  h_min = F^-1(|F h| e^{j theta}).
/// The Hilbert transform is the FFT sign multiplier (DC and Nyquist get 0).
/// Throws NumericError for an all-zero input.
///
/// With oversample > 1 the phase is taken from the same construction on h
/// zero-padded to about oversample * |h| samples (truncated back to |h|), and
/// |F h| is imposed on it again. The magnitude stays exact while the cepstral
/// time aliasing of the short transform, which flattens the tail of
/// fast-decaying responses and costs early energy, is largely removed.
std::vector<double> minimum_phase(std::span<const double> h, std::size_t oversample = 1);
std::vector<double> minimum_phase_vjp(std::span<const double> h, std::span<const double> cotangent,
                                      std::size_t oversample = 1);

double rms(std::span<const double> x);
/// Throws NumericError if x is all zeros, ConfigError if target <= 0.
std::vector<double> rescale_rms(std::span<const double> x, double target);
std::vector<double> rescale_rms_vjp(std::span<const double> x, double target,
                                    std::span<const double> cotangent);

}  // namespace dereverb::dsp
