#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dereverb/dsp.hpp"

namespace dereverb::wpe {

struct WpeConfig {
  std::size_t taps = 50;   // prediction filter length, frames
  std::size_t delay = 2;   // prediction delay, frames
  std::size_t iterations = 5;
  dsp::StftConfig stft;

  void validate() const;
};

/// Single-channel weighted prediction error: per frequency bin, the late
/// reverberation is predicted from frames delayed by `delay` and subtracted,
/// with the prediction filter re-estimated by reweighted least squares using
/// the current estimate's power (floored at 1e-10 times its mean). Normal
/// equations are diagonally loaded with 1e-10 times their trace.
/// Output has the same length as the input.
std::vector<double> dereverb(std::span<const double> y, const WpeConfig& cfg = {});

/// STFT-domain core of dereverb(): returns the enhanced spectrogram.
ComplexMatrix dereverb_spectrogram(const ComplexMatrix& y, const WpeConfig& cfg);

}  // namespace dereverb::wpe
