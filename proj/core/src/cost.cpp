#include "dereverb/cost.hpp"

#include <algorithm>

#include "dereverb/types.hpp"

namespace dereverb {
namespace {

ComplexMatrix compressed(std::span<const double> x, std::size_t length, const dsp::StftConfig& stft) {
  std::vector<double> padded(length, 0.0);
  std::copy(x.begin(), x.end(), padded.begin());
  return dsp::compress(dsp::stft(padded, stft).values);
}

}  // namespace

double spectral_cost(std::span<const double> u, std::span<const double> v, const dsp::StftConfig& stft) {
  if (u.empty() || v.empty()) throw ConfigError("spectral_cost: empty input");
  const std::size_t n = std::max(u.size(), v.size());
  const ComplexMatrix a = compressed(u, n, stft);
  const ComplexMatrix b = compressed(v, n, stft);
  return (a - b).squaredNorm() / static_cast<double>(a.rows());
}

SpectralCost::SpectralCost(std::span<const double> target, const dsp::StftConfig& stft)
    : target_(target.begin(), target.end()), stft_(stft) {
  if (target_.empty()) throw ConfigError("SpectralCost: empty target");
  stft_.validate();
}

const ComplexMatrix& SpectralCost::target_spec(std::size_t length) const {
  if (cached_length_ != length) {
    cached_ = compressed(target_, length, stft_);
    cached_length_ = length;
  }
  return cached_;
}

double SpectralCost::value(std::span<const double> u) const {
  if (u.empty()) throw ConfigError("SpectralCost: empty input");
  const std::size_t n = std::max(u.size(), target_.size());
  const ComplexMatrix& t = target_spec(n);
  return (compressed(u, n, stft_) - t).squaredNorm() / static_cast<double>(t.rows());
}

CostValue SpectralCost::value_and_grad(std::span<const double> u) const {
  if (u.empty()) throw ConfigError("SpectralCost: empty input");
  const std::size_t n = std::max(u.size(), target_.size());
  const ComplexMatrix& t = target_spec(n);
  std::vector<double> padded(n, 0.0);
  std::copy(u.begin(), u.end(), padded.begin());
  const ComplexMatrix s = dsp::stft(padded, stft_).values;
  const ComplexMatrix diff = dsp::compress(s) - t;
  const double m = static_cast<double>(t.rows());
  CostValue out;
  out.value = diff.squaredNorm() / m;
  const ComplexMatrix s_bar = dsp::compress_vjp(s, (2.0 / m) * diff);
  out.grad = dsp::stft_vjp(stft_, n, s_bar);
  out.grad.resize(u.size());
  return out;
}

}  // namespace dereverb
