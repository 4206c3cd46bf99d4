#include "dereverb/wpe.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "dereverb/types.hpp"

namespace dereverb::wpe {

void WpeConfig::validate() const {
  if (taps < 1 || delay < 1 || iterations < 1) throw ConfigError("wpe: taps, delay and iterations must be >= 1");
  stft.validate();
}

ComplexMatrix dereverb_spectrogram(const ComplexMatrix& y, const WpeConfig& cfg) {
  cfg.validate();
  using CMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
  using CVec = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
  const Eigen::Index frames = y.rows();
  const Eigen::Index taps = static_cast<Eigen::Index>(cfg.taps);
  const Eigen::Index delay = static_cast<Eigen::Index>(cfg.delay);
  if (frames <= taps + delay) throw ConfigError("wpe: input shorter than taps + delay frames");

  ComplexMatrix out = y;
  CMat stacked(frames, taps);
  CMat weighted(frames, taps);
  CMat r(taps, taps);
  Eigen::VectorXd inv_power(frames);
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    const CVec obs = y.col(k);
    // Row m holds y_{m-delay}, y_{m-delay-1}, ..., zero before the first frame.
    stacked.setZero();
    for (Eigen::Index t = 0; t < taps; ++t)
      for (Eigen::Index m = delay + t; m < frames; ++m) stacked(m, t) = obs(m - delay - t);

    CVec est = obs;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      const Eigen::VectorXd power = est.cwiseAbs2();
      const double mean = power.mean();
      if (!(mean > 0.0)) break;  // silent bin: nothing to predict
      const double floor = 1e-10 * mean;
      for (Eigen::Index m = 0; m < frames; ++m) inv_power(m) = 1.0 / std::max(power(m), floor);
      // R = S^H W S, accumulated as a rank update of W^{1/2} S (lower half only)
      weighted = inv_power.cwiseSqrt().asDiagonal() * stacked;
      r.setZero();
      r.selfadjointView<Eigen::Lower>().rankUpdate(weighted.adjoint());
      const CVec p = stacked.adjoint() * inv_power.cwiseProduct(obs).eval();
      const double load = 1e-10 * r.diagonal().real().sum();
      r.diagonal().array() += load;
      const CVec g = r.selfadjointView<Eigen::Lower>().ldlt().solve(p);
      if (!g.allFinite()) throw NumericError("wpe: prediction filter is not finite");
      est = obs - stacked * g;
    }
    out.col(k) = est;
  }
  return out;
}

std::vector<double> dereverb(std::span<const double> y, const WpeConfig& cfg) {
  if (y.empty()) throw ConfigError("wpe: empty input");
  cfg.validate();
  const auto spec = dsp::stft(y, cfg.stft);
  const dsp::Spectrogram enhanced{dereverb_spectrogram(spec.values, cfg), cfg.stft};
  return dsp::istft(enhanced, y.size());
}

}  // namespace dereverb::wpe
