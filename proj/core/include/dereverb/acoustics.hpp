#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dereverb::acoustics {

/// Octave centers from {125, ..., 4000} Hz whose upper edge (x sqrt 2) lies below Nyquist.
std::vector<double> octave_centers(double sample_rate);

/// Direct-form II transposed second-order section, a0 = 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;
};

/// 4th-order Butterworth band-pass between center / sqrt 2 and center * sqrt 2
/// (bilinear transform with prewarped edges), unit gain at the center.
std::vector<Biquad> octave_bandpass(double center_hz, double sample_rate);

/// Causal cascade of biquads, output length = input length.
std::vector<double> filter(std::span<const double> x, std::span<const Biquad> sections);

/// Zero-phase octave band-pass (forward-backward). The input is zero-padded
/// on both sides while filtering so neither pass is truncated; the result is
/// cropped back to the input span.
std::vector<double> octave_filter(std::span<const double> h, double center_hz, double sample_rate);

/// Schroeder energy decay curve in dB, 0 dB at the first sample; -inf once
/// the remaining energy is exactly zero.
std::vector<double> edc_db(std::span<const double> h);

/// T60 = 2 * T30, from a least-squares line through the EDC between -5 and
/// -35 dB. Empty (undefined) if the EDC never reaches -35 dB with at least
/// two samples in the fit range.
std::optional<double> t60(std::span<const double> h, double sample_rate);
std::optional<double> t60(std::span<const double> h, double center_hz, double sample_rate);

constexpr double kC50Clip = 90.0;

struct Clarity {
  double db = 0.0;
  bool clipped = false;  // tail energy (near) zero; db == kC50Clip
};

/// 10 log10(E_early / E_tail) with the boundary 50 ms after the peak-magnitude
/// sample; anything before the peak counts as early.
Clarity c50(std::span<const double> h, double sample_rate);
/// Band version: the peak is located on the broadband RIR, the energies on
/// the octave-filtered one.
Clarity c50(std::span<const double> h, double center_hz, double sample_rate);

struct BandMetrics {
  double center_hz = 0.0;
  std::optional<double> t60_s;
  Clarity c50;
};

struct RirMetrics {
  std::vector<BandMetrics> bands;
};

RirMetrics analyze(std::span<const double> h, double sample_rate);

struct BandError {
  double center_hz = 0.0;
  std::optional<double> t60_abs_s;  // empty if either side is undefined
  std::optional<double> c50_abs_db; // empty if either side is clipped
};

struct MetricsError {
  std::vector<BandError> bands;
  std::vector<double> excluded_t60_bands;
  std::vector<double> excluded_c50_bands;
};

/// Per-band absolute errors; bands must match.
MetricsError metrics_error(const RirMetrics& est, const RirMetrics& ref);

/// CSV with header band_hz,t60_s,c50_db,flags.
std::string to_csv(const RirMetrics& m);

}  // namespace dereverb::acoustics
