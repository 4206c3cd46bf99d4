#include "dereverb/reverb_operator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dereverb/fft.hpp"

namespace dereverb::reverb {
namespace {

constexpr double kDbToLog = std::numbers::ln10 / 20.0;

ComplexMatrix rotation_ramp(const dsp::StftConfig& stft) {
  const std::size_t n = stft.fft_length();
  const double shift = static_cast<double>(stft.pad());
  ComplexMatrix ramp(1, static_cast<Eigen::Index>(stft.bins()));
  for (std::size_t k = 0; k < stft.bins(); ++k)
    ramp(0, static_cast<Eigen::Index>(k)) =
        std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(k) * shift / static_cast<double>(n));
  return ramp;
}

}  // namespace

BandLayout BandLayout::default_16k() {
  BandLayout layout;
  for (int f = 125; f <= 1000; f += 125) layout.centers_hz.push_back(f);
  for (int f = 1250; f <= 3000; f += 250) layout.centers_hz.push_back(f);
  for (int f = 3500; f <= 8000; f += 500) layout.centers_hz.push_back(f);
  return layout;
}

void BandLayout::validate(double nyquist_hz, std::size_t bins) const {
  if (centers_hz.empty()) throw ConfigError("band layout: no bands");
  if (centers_hz.size() >= bins) throw ConfigError("band layout: need fewer bands than STFT bins");
  for (std::size_t b = 0; b < centers_hz.size(); ++b) {
    if (centers_hz[b] < 0.0 || centers_hz[b] > nyquist_hz + 1e-9)
      throw ConfigError("band layout: center outside [0, fs/2]");
    if (b > 0 && !(centers_hz[b] > centers_hz[b - 1]))
      throw ConfigError("band layout: centers must be strictly increasing");
  }
}

void OperatorConfig::validate() const {
  stft.validate();
  bands.validate(stft.sample_rate / 2.0, stft.bins());
  if (n_frames == 0) throw ConfigError("operator: n_frames must be positive");
  if (min_phase_oversample == 0) throw ConfigError("operator: min_phase_oversample must be positive");
  if (!(bounds.weight_db_min <= bounds.weight_db_max) || !(bounds.decay_min <= bounds.decay_max))
    throw ConfigError("operator: inverted parameter bounds");
}

double RirParams::weight(std::size_t b) const { return std::exp(kDbToLog * weights_db.at(b)); }

RirParams RirParams::initial(const OperatorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RirParams p;
  const auto rows = static_cast<Eigen::Index>(cfg.n_frames);
  const auto cols = static_cast<Eigen::Index>(cfg.stft.bins());
  p.phases.resize(rows, cols);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  for (Eigen::Index i = 0; i < p.phases.size(); ++i) p.phases.data()[i] = phase(rng);
  const std::size_t bands = cfg.bands.size();
  p.weights_db.assign(bands, 0.0);
  p.decays.assign(bands, std::sqrt(cfg.bounds.decay_min * cfg.bounds.decay_max));
  p.band_centers = cfg.bands.centers_hz;
  return p;
}

void RirParams::validate(const OperatorConfig& cfg) const {
  if (n_frames() != cfg.n_frames || bins() != cfg.stft.bins())
    throw ConfigError("rir params: phase matrix shape does not match the operator");
  if (weights_db.size() != cfg.bands.size() || decays.size() != cfg.bands.size())
    throw ConfigError("rir params: band count does not match the operator");
  for (Eigen::Index i = 0; i < phases.size(); ++i)
    if (!std::isfinite(phases.data()[i])) throw NumericError("rir params: non-finite phase");
  for (std::size_t b = 0; b < weights_db.size(); ++b)
    if (!std::isfinite(weights_db[b]) || !std::isfinite(decays[b]))
      throw NumericError("rir params: non-finite weight or decay");
}

RirGradient RirGradient::zeros_like(const RirParams& p) {
  RirGradient g;
  g.phases = RealMatrix::Zero(p.phases.rows(), p.phases.cols());
  g.weights_db.assign(p.weights_db.size(), 0.0);
  g.decays.assign(p.decays.size(), 0.0);
  return g;
}

RirGradient& RirGradient::operator+=(const RirGradient& other) {
  phases += other.phases;
  for (std::size_t b = 0; b < weights_db.size(); ++b) {
    weights_db[b] += other.weights_db[b];
    decays[b] += other.decays[b];
  }
  return *this;
}

double RirGradient::squared_norm() const {
  double acc = phases.squaredNorm();
  for (std::size_t b = 0; b < weights_db.size(); ++b) acc += weights_db[b] * weights_db[b] + decays[b] * decays[b];
  return acc;
}

RealMatrix magnitude_from_decay(const RirParams& p) {
  const auto frames = static_cast<Eigen::Index>(p.n_frames());
  const auto bands = static_cast<Eigen::Index>(p.n_bands());
  RealMatrix a(frames, bands);
  for (Eigen::Index b = 0; b < bands; ++b) {
    const double w = p.weight(static_cast<std::size_t>(b));
    for (Eigen::Index n = 0; n < frames; ++n)
      a(n, b) = w * std::exp(-p.decays[static_cast<std::size_t>(b)] * static_cast<double>(n));
  }
  return a;
}

BandInterpolator::BandInterpolator(const BandLayout& layout, const dsp::StftConfig& stft)
    : n_bands_(layout.size()) {
  layout.validate(stft.sample_rate / 2.0, stft.bins());
  const std::size_t bins = stft.bins();
  const auto& c = layout.centers_hz;
  lower_.resize(bins);
  upper_.resize(bins);
  frac_.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * stft.sample_rate / static_cast<double>(stft.fft_length());
    if (f <= c.front()) {
      lower_[k] = upper_[k] = 0;
      frac_[k] = 0.0;
    } else if (f >= c.back()) {
      lower_[k] = upper_[k] = c.size() - 1;
      frac_[k] = 0.0;
    } else {
      const auto it = std::upper_bound(c.begin(), c.end(), f);
      const std::size_t hi = static_cast<std::size_t>(it - c.begin());
      lower_[k] = hi - 1;
      upper_[k] = hi;
      frac_[k] = (f - c[hi - 1]) / (c[hi] - c[hi - 1]);
    }
  }
}

RealMatrix BandInterpolator::lerp(const RealMatrix& band_log) const {
  if (static_cast<std::size_t>(band_log.cols()) != n_bands_) throw ConfigError("interpolate: band count mismatch");
  RealMatrix out(band_log.rows(), static_cast<Eigen::Index>(bins()));
  for (Eigen::Index n = 0; n < band_log.rows(); ++n)
    for (std::size_t k = 0; k < bins(); ++k) {
      const double t = frac_[k];
      out(n, static_cast<Eigen::Index>(k)) = (1.0 - t) * band_log(n, static_cast<Eigen::Index>(lower_[k])) +
                                             t * band_log(n, static_cast<Eigen::Index>(upper_[k]));
    }
  return out;
}

RealMatrix BandInterpolator::lerp_transpose(const RealMatrix& bin_log_cotangent) const {
  if (static_cast<std::size_t>(bin_log_cotangent.cols()) != bins()) throw ConfigError("interpolate: bin count mismatch");
  RealMatrix out = RealMatrix::Zero(bin_log_cotangent.rows(), static_cast<Eigen::Index>(n_bands_));
  for (Eigen::Index n = 0; n < bin_log_cotangent.rows(); ++n)
    for (std::size_t k = 0; k < bins(); ++k) {
      const double g = bin_log_cotangent(n, static_cast<Eigen::Index>(k));
      const double t = frac_[k];
      out(n, static_cast<Eigen::Index>(lower_[k])) += (1.0 - t) * g;
      out(n, static_cast<Eigen::Index>(upper_[k])) += t * g;
    }
  return out;
}

RealMatrix BandInterpolator::interpolate(const RealMatrix& band_magnitude) const {
  RealMatrix logs(band_magnitude.rows(), band_magnitude.cols());
  for (Eigen::Index i = 0; i < band_magnitude.size(); ++i) {
    const double v = band_magnitude.data()[i];
    if (!(v > 0.0)) throw ConfigError("interpolate: magnitudes must be positive");
    logs.data()[i] = std::log(v);
  }
  return lerp(logs).array().exp().matrix();
}

RealMatrix interpolate_bands(const RealMatrix& band_magnitude, const BandLayout& layout,
                             const dsp::StftConfig& stft) {
  return BandInterpolator(layout, stft).interpolate(band_magnitude);
}

dsp::Spectrogram filter_transform(std::span<const double> h, const dsp::StftConfig& stft) {
  auto s = dsp::stft(h, stft);
  const auto ramp = rotation_ramp(stft);
  const double scale = 1.0 / stft.ola_gain();
  for (Eigen::Index m = 0; m < s.values.rows(); ++m) s.values.row(m).array() *= ramp.row(0).array() * scale;
  return s;
}

std::vector<double> filter_transform_vjp(const dsp::StftConfig& stft, std::size_t length,
                                         const ComplexMatrix& cotangent) {
  const auto ramp = rotation_ramp(stft);
  const double scale = 1.0 / stft.ola_gain();
  ComplexMatrix g = cotangent;
  for (Eigen::Index m = 0; m < g.rows(); ++m) g.row(m).array() *= ramp.row(0).array().conjugate() * scale;
  return dsp::stft_vjp(stft, length, g);
}

AssembledRir assemble_rir(const RirParams& p, const OperatorConfig& cfg) {
  cfg.validate();
  p.validate(cfg);
  AssembledRir out;
  const BandInterpolator interp(cfg.bands, cfg.stft);
  out.magnitude = interp.interpolate(magnitude_from_decay(p));
  out.raw_spectrogram.resize(out.magnitude.rows(), out.magnitude.cols());
  for (Eigen::Index i = 0; i < out.magnitude.size(); ++i)
    out.raw_spectrogram.data()[i] = std::polar(out.magnitude.data()[i], p.phases.data()[i]);

  const std::size_t length = cfg.rir_length();
  out.raw_rir = dsp::istft(dsp::Spectrogram{out.raw_spectrogram, cfg.stft}, length);
  if (std::all_of(out.raw_rir.begin(), out.raw_rir.end(), [](double v) { return v == 0.0; }))
    throw NumericError("assemble_rir: parameters produce an all-zero response");
  out.rir = dsp::minimum_phase(out.raw_rir, cfg.min_phase_oversample);
  out.rir[0] = 1.0;
  out.filter = filter_transform(out.rir, cfg.stft);
  return out;
}

RealMatrix corrected_magnitude(const AssembledRir& rir) {
  return rir.filter.values.cwiseAbs() * rir.filter.config.ola_gain();
}

ComplexMatrix subband_convolve(const ComplexMatrix& filter, const ComplexMatrix& x) {
  if (filter.cols() != x.cols()) throw ConfigError("subband_convolve: bin count mismatch");
  if (filter.rows() == 0 || x.rows() == 0) throw ConfigError("subband_convolve: empty input");
  const Eigen::Index nh = filter.rows();
  const Eigen::Index m = x.rows();
  ComplexMatrix y = ComplexMatrix::Zero(m + nh - 1, x.cols());
  for (Eigen::Index n = 0; n < nh; ++n)
    for (Eigen::Index j = 0; j < m; ++j) y.row(j + n).array() += filter.row(n).array() * x.row(j).array();
  return y;
}

SubbandGradient subband_convolve_vjp(const ComplexMatrix& filter, const ComplexMatrix& x,
                                     const ComplexMatrix& cotangent) {
  const Eigen::Index nh = filter.rows();
  const Eigen::Index m = x.rows();
  if (cotangent.rows() != m + nh - 1 || cotangent.cols() != x.cols())
    throw ConfigError("subband_convolve_vjp: cotangent shape mismatch");
  SubbandGradient g{ComplexMatrix::Zero(nh, x.cols()), ComplexMatrix::Zero(m, x.cols())};
  for (Eigen::Index n = 0; n < nh; ++n)
    for (Eigen::Index j = 0; j < m; ++j) {
      g.filter.row(n).array() += cotangent.row(j + n).array() * x.row(j).array().conjugate();
      g.x.row(j).array() += cotangent.row(j + n).array() * filter.row(n).array().conjugate();
    }
  return g;
}

std::size_t output_length(const OperatorConfig& cfg, std::size_t length) { return length + cfg.rir_length() - 1; }

std::vector<double> apply(const AssembledRir& rir, std::span<const double> x, const OperatorConfig& cfg) {
  if (x.empty()) throw ConfigError("apply: empty input");
  if (cfg.engine == Engine::time_domain) return fft::convolve(x, rir.rir);
  const auto spec = dsp::stft(x, cfg.stft);
  const dsp::Spectrogram y{subband_convolve(rir.filter.values, spec.values), cfg.stft};
  return dsp::overlap_add(y, output_length(cfg, x.size()));
}

std::vector<double> apply(const RirParams& p, std::span<const double> x, const OperatorConfig& cfg) {
  return apply(assemble_rir(p, cfg), x, cfg);
}

ApplyGradient apply_vjp(const AssembledRir& rir, std::span<const double> x, const OperatorConfig& cfg,
                        std::span<const double> cotangent) {
  if (cotangent.size() != output_length(cfg, x.size())) throw ConfigError("apply_vjp: cotangent length mismatch");
  if (cfg.engine == Engine::time_domain)
    return {fft::correlate(cotangent, rir.rir, x.size()), fft::correlate(cotangent, x, rir.rir.size()), {}};
  const auto spec = dsp::stft(x, cfg.stft);
  const std::size_t frames = spec.frames() + rir.filter.frames() - 1;
  const auto y_bar = dsp::overlap_add_vjp(cfg.stft, frames, cotangent);
  auto g = subband_convolve_vjp(rir.filter.values, spec.values, y_bar);
  auto h_bar = filter_transform_vjp(cfg.stft, rir.rir.size(), g.filter);
  return {dsp::stft_vjp(cfg.stft, x.size(), g.x), std::move(h_bar), std::move(g.filter)};
}

RirGradient assemble_vjp(const RirParams& p, const AssembledRir& rir, const OperatorConfig& cfg,
                         std::span<const double> rir_cotangent) {
  if (rir_cotangent.size() != rir.rir.size()) throw ConfigError("assemble_vjp: cotangent length mismatch");
  std::vector<double> h_bar(rir_cotangent.begin(), rir_cotangent.end());
  h_bar[0] = 0.0;  // direct path is a constant
  const auto raw_bar = dsp::minimum_phase_vjp(rir.raw_rir, h_bar, cfg.min_phase_oversample);
  const ComplexMatrix spec_bar = dsp::istft_vjp(cfg.stft, p.n_frames(), raw_bar);

  RirGradient g = RirGradient::zeros_like(p);
  RealMatrix log_bar(spec_bar.rows(), spec_bar.cols());
  for (Eigen::Index i = 0; i < spec_bar.size(); ++i) {
    const Complex u = spec_bar.data()[i];
    const Complex h = rir.raw_spectrogram.data()[i];
    const Complex unit = std::polar(1.0, p.phases.data()[i]);
    const double a_bar = std::real(std::conj(u) * unit);
    g.phases.data()[i] = std::real(std::conj(u) * Complex(0.0, 1.0) * h);
    log_bar.data()[i] = a_bar * rir.magnitude.data()[i];
  }
  const BandInterpolator interp(cfg.bands, cfg.stft);
  const RealMatrix band_bar = interp.lerp_transpose(log_bar);
  for (Eigen::Index b = 0; b < band_bar.cols(); ++b) {
    double sum = 0.0, moment = 0.0;
    for (Eigen::Index n = 0; n < band_bar.rows(); ++n) {
      sum += band_bar(n, b);
      moment += static_cast<double>(n) * band_bar(n, b);
    }
    g.weights_db[static_cast<std::size_t>(b)] = kDbToLog * sum;
    g.decays[static_cast<std::size_t>(b)] = -moment;
  }
  return g;
}

OperatorGradient apply_vjp_full(const RirParams& p, const AssembledRir& rir, std::span<const double> x,
                                const OperatorConfig& cfg, std::span<const double> cotangent) {
  auto g = apply_vjp(rir, x, cfg, cotangent);
  return {std::move(g.x), assemble_vjp(p, rir, cfg, g.rir)};
}

RirParams clamp_params(RirParams p, const ParamBounds& bounds) {
  for (auto& w : p.weights_db) w = std::clamp(w, bounds.weight_db_min, bounds.weight_db_max);
  for (auto& a : p.decays) a = std::clamp(a, bounds.decay_min, bounds.decay_max);
  return p;
}

std::vector<double> render_rir(const RirParams& p, const OperatorConfig& cfg) {
  return assemble_rir(p, cfg).rir;
}

}  // namespace dereverb::reverb
