#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dereverb/dsp.hpp"

namespace dereverb {

/// C(u, v) = (1/M) sum_{m,k} |Sc(u)_{m,k} - Sc(v)_{m,k}|^2, where Sc is the
/// 2/3-power compressed STFT, M the frame count, and the shorter signal is
/// zero-padded to the longer one.
double spectral_cost(std::span<const double> u, std::span<const double> v, const dsp::StftConfig& stft);

struct CostValue {
  double value = 0.0;
  std::vector<double> grad;  // d C / d u, same length as u
};

/// Cost against a fixed target with the target's compressed spectrogram cached.
class SpectralCost {
 public:
  SpectralCost(std::span<const double> target, const dsp::StftConfig& stft);

  double value(std::span<const double> u) const;
  CostValue value_and_grad(std::span<const double> u) const;

  const std::vector<double>& target() const { return target_; }

 private:
  const ComplexMatrix& target_spec(std::size_t length) const;

  std::vector<double> target_;
  dsp::StftConfig stft_;
  mutable std::size_t cached_length_ = 0;
  mutable ComplexMatrix cached_;
};

}  // namespace dereverb
