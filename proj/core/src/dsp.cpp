#include "dereverb/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dereverb/fft.hpp"

namespace dereverb::dsp {
namespace {

std::size_t samples_for_ms(double ms, double sample_rate) {
  return static_cast<std::size_t>(std::llround(ms * 1e-3 * sample_rate));
}

// Adjoint of irfft(.)/n restricted to the stored half spectrum.
void half_spectrum_adjoint(std::span<const double> v, std::size_t n, std::span<Complex> out) {
  fft::rfft(v, out);
  const double interior = 2.0 / static_cast<double>(n);
  const double edge = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= interior;
  out[0] *= edge / interior;
  if (n % 2 == 0) out[n / 2] *= edge / interior;
}

// Sum over frames of window^2 at each covered output sample.
std::vector<double> squared_window_sum(const StftConfig& cfg, std::size_t frames, std::size_t length) {
  const auto w = cfg.window();
  const std::ptrdiff_t hop = static_cast<std::ptrdiff_t>(cfg.hop_length());
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(cfg.pad());
  std::vector<double> d(length, 0.0);
  for (std::size_t m = 0; m < frames; ++m) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m) * hop - pad;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(j);
      if (t >= 0 && t < static_cast<std::ptrdiff_t>(length)) d[static_cast<std::size_t>(t)] += w[j] * w[j];
    }
  }
  return d;
}

// Time offset of buffer index j relative to a frame start under full-frame synthesis.
std::ptrdiff_t wrapped_offset(std::size_t j, std::size_t n, std::size_t pad) {
  return j < n - pad ? static_cast<std::ptrdiff_t>(j)
                     : static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(n);
}

}  // namespace

std::size_t StftConfig::window_length() const { return samples_for_ms(window_ms, sample_rate); }
std::size_t StftConfig::hop_length() const { return samples_for_ms(hop_ms, sample_rate); }
std::size_t StftConfig::fft_length() const { return fft_size == 0 ? 2 * window_length() : fft_size; }

std::size_t StftConfig::frames_for(std::size_t length) const {
  const std::size_t hop = hop_length();
  return (length + pad() + hop - 1) / hop;
}

std::size_t StftConfig::covered_length(std::size_t frames) const {
  const std::size_t total = frames * hop_length();
  return total > pad() ? total - pad() : 0;
}

std::vector<double> StftConfig::window() const {
  const std::size_t n = window_length();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

double StftConfig::ola_gain() const {
  const auto w = window();
  double sum = 0.0;
  for (double v : w) sum += v;
  return sum / static_cast<double>(hop_length());
}

void StftConfig::validate() const {
  if (!(sample_rate > 0.0)) throw ConfigError("stft: sample rate must be positive");
  const std::size_t win = window_length();
  const std::size_t hop = hop_length();
  if (win < 2 || hop == 0) throw ConfigError("stft: window and hop must be non-empty");
  if (win % hop != 0 || win / hop < 2)
    throw ConfigError("stft: hop must divide the window length with at least 50% overlap");
  if (fft_length() < win) throw ConfigError("stft: fft size smaller than the window");
}

Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  cfg.validate();
  if (x.empty()) throw ConfigError("stft: empty input");
  const std::size_t n = cfg.fft_length();
  const std::size_t frames = cfg.frames_for(x.size());
  const auto w = cfg.window();
  const std::ptrdiff_t hop = static_cast<std::ptrdiff_t>(cfg.hop_length());
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(cfg.pad());
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(x.size());

  Spectrogram s{ComplexMatrix::Zero(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(cfg.bins())), cfg};
  std::vector<double> buf(n);
  for (std::size_t m = 0; m < frames; ++m) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m) * hop - pad;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(j);
      if (t >= 0 && t < len) buf[j] = w[j] * x[static_cast<std::size_t>(t)];
    }
    fft::rfft(buf, std::span<Complex>(s.values.row(static_cast<Eigen::Index>(m)).data(), cfg.bins()));
  }
  return s;
}

std::vector<double> istft(const Spectrogram& s, std::size_t length) {
  const auto& cfg = s.config;
  cfg.validate();
  if (s.bins() != cfg.bins()) throw ConfigError("istft: bin count does not match config");
  if (s.frames() == 0) throw ConfigError("istft: no frames");
  if (length == 0) length = cfg.covered_length(s.frames());
  const std::size_t n = cfg.fft_length();
  const auto w = cfg.window();
  const auto norm = squared_window_sum(cfg, s.frames(), length);
  const std::ptrdiff_t hop = static_cast<std::ptrdiff_t>(cfg.hop_length());
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(cfg.pad());
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> y(length, 0.0);
  std::vector<double> buf(n);
  for (std::size_t m = 0; m < s.frames(); ++m) {
    fft::irfft(std::span<const Complex>(s.values.row(static_cast<Eigen::Index>(m)).data(), s.bins()), buf);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m) * hop - pad;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(j);
      if (t >= 0 && t < static_cast<std::ptrdiff_t>(length)) y[static_cast<std::size_t>(t)] += w[j] * buf[j] * inv_n;
    }
  }
  for (std::size_t t = 0; t < length; ++t) y[t] = norm[t] > 1e-12 ? y[t] / norm[t] : 0.0;
  return y;
}

std::vector<double> overlap_add(const Spectrogram& s, std::size_t length) {
  const auto& cfg = s.config;
  cfg.validate();
  if (s.bins() != cfg.bins()) throw ConfigError("overlap_add: bin count does not match config");
  const std::size_t n = cfg.fft_length();
  const std::size_t pad = cfg.pad();
  const std::ptrdiff_t hop = static_cast<std::ptrdiff_t>(cfg.hop_length());
  const double scale = 1.0 / (static_cast<double>(n) * cfg.ola_gain());

  std::vector<double> y(length, 0.0);
  std::vector<double> buf(n);
  for (std::size_t m = 0; m < s.frames(); ++m) {
    fft::irfft(std::span<const Complex>(s.values.row(static_cast<Eigen::Index>(m)).data(), s.bins()), buf);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m) * hop - static_cast<std::ptrdiff_t>(pad);
    for (std::size_t j = 0; j < n; ++j) {
      const std::ptrdiff_t t = start + wrapped_offset(j, n, pad);
      if (t >= 0 && t < static_cast<std::ptrdiff_t>(length)) y[static_cast<std::size_t>(t)] += buf[j] * scale;
    }
  }
  return y;
}

std::vector<double> stft_vjp(const StftConfig& cfg, std::size_t length, const ComplexMatrix& cotangent) {
  cfg.validate();
  const std::size_t n = cfg.fft_length();
  const std::size_t bins = cfg.bins();
  if (static_cast<std::size_t>(cotangent.cols()) != bins) throw ConfigError("stft_vjp: bin mismatch");
  const auto w = cfg.window();
  const std::ptrdiff_t hop = static_cast<std::ptrdiff_t>(cfg.hop_length());
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(cfg.pad());

  std::vector<double> g(length, 0.0);
  std::vector<Complex> half(bins);
  std::vector<double> buf(n);
  for (Eigen::Index m = 0; m < cotangent.rows(); ++m) {
    for (std::size_t k = 0; k < bins; ++k) half[k] = cotangent(m, static_cast<Eigen::Index>(k)) * 0.5;
    half[0] *= 2.0;
    if (n % 2 == 0) half[n / 2] *= 2.0;
    fft::irfft(half, buf);
    const std::ptrdiff_t start = m * hop - pad;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(j);
      if (t >= 0 && t < static_cast<std::ptrdiff_t>(length)) g[static_cast<std::size_t>(t)] += w[j] * buf[j];
    }
  }
  return g;
}

ComplexMatrix istft_vjp(const StftConfig& cfg, std::size_t frames, std::span<const double> cotangent) {
  cfg.validate();
  const std::size_t n = cfg.fft_length();
  const std::size_t length = cotangent.size();
  const auto w = cfg.window();
  const auto norm = squared_window_sum(cfg, frames, length);
  const std::ptrdiff_t hop = static_cast<std::ptrdiff_t>(cfg.hop_length());
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(cfg.pad());

  ComplexMatrix out(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(cfg.bins()));
  std::vector<double> v(n);
  for (std::size_t m = 0; m < frames; ++m) {
    std::fill(v.begin(), v.end(), 0.0);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m) * hop - pad;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(j);
      if (t >= 0 && t < static_cast<std::ptrdiff_t>(length) && norm[static_cast<std::size_t>(t)] > 1e-12)
        v[j] = w[j] * cotangent[static_cast<std::size_t>(t)] / norm[static_cast<std::size_t>(t)];
    }
    half_spectrum_adjoint(v, n, std::span<Complex>(out.row(static_cast<Eigen::Index>(m)).data(), cfg.bins()));
  }
  return out;
}

ComplexMatrix overlap_add_vjp(const StftConfig& cfg, std::size_t frames, std::span<const double> cotangent) {
  cfg.validate();
  const std::size_t n = cfg.fft_length();
  const std::size_t pad = cfg.pad();
  const std::size_t length = cotangent.size();
  const std::ptrdiff_t hop = static_cast<std::ptrdiff_t>(cfg.hop_length());
  const double scale = 1.0 / cfg.ola_gain();

  ComplexMatrix out(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(cfg.bins()));
  std::vector<double> v(n);
  for (std::size_t m = 0; m < frames; ++m) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m) * hop - static_cast<std::ptrdiff_t>(pad);
    for (std::size_t j = 0; j < n; ++j) {
      const std::ptrdiff_t t = start + wrapped_offset(j, n, pad);
      v[j] = (t >= 0 && t < static_cast<std::ptrdiff_t>(length)) ? cotangent[static_cast<std::size_t>(t)] * scale : 0.0;
    }
    half_spectrum_adjoint(v, n, std::span<Complex>(out.row(static_cast<Eigen::Index>(m)).data(), cfg.bins()));
  }
  return out;
}

ComplexMatrix compress(const ComplexMatrix& s, double exponent) {
  ComplexMatrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const Complex z = s.data()[i];
    const double r = std::abs(z);
    out.data()[i] = r > 0.0 ? z * std::pow(r, exponent - 1.0) : Complex{};
  }
  return out;
}

ComplexMatrix compress_vjp(const ComplexMatrix& s, const ComplexMatrix& cotangent, double exponent) {
  if (s.rows() != cotangent.rows() || s.cols() != cotangent.cols())
    throw ConfigError("compress_vjp: shape mismatch");
  ComplexMatrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const Complex z = s.data()[i];
    const double r = std::abs(z);
    if (r == 0.0) {
      out.data()[i] = Complex{};
      continue;
    }
    // In the local (radial, tangential) basis the Jacobian is diag(p r^{p-1}, r^{p-1}).
    const Complex radial = z / r;
    const Complex tangential = Complex(0.0, 1.0) * radial;
    const Complex u = cotangent.data()[i];
    const double a = std::real(u * std::conj(radial));
    const double b = std::real(u * std::conj(tangential));
    const double scale = std::pow(r, exponent - 1.0);
    out.data()[i] = scale * (exponent * a * radial + b * tangential);
  }
  return out;
}

namespace {

// Forward intermediates of minimum_phase, shared with its VJP.
struct MinPhaseTape {
  std::vector<Complex> spectrum;  // F h
  std::vector<double> magnitude;  // |F h|
  std::vector<double> clamped;    // max(|F h|, floor)
  std::size_t argmax = 0;
  double floor = 0.0;
  std::vector<Complex> rotated;   // |F h| e^{j theta}
};

std::vector<double> sign_multiplier(std::size_t n) {
  std::vector<double> sgn(n, 0.0);
  for (std::size_t k = 1; k < (n + 1) / 2; ++k) sgn[k] = 1.0;
  for (std::size_t k = n / 2 + 1; k < n; ++k) sgn[k] = -1.0;
  return sgn;
}

// Real Hilbert transform of a real sequence by the -j sign(omega) multiplier.
std::vector<double> hilbert(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<Complex> buf(v.begin(), v.end()), spec(n);
  fft::fft(buf, spec);
  const auto sgn = sign_multiplier(n);
  for (std::size_t k = 0; k < n; ++k) spec[k] *= Complex(0.0, -sgn[k]);
  fft::ifft(spec, buf);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() / static_cast<double>(n);
  return out;
}

MinPhaseTape min_phase_forward(std::span<const double> h) {
  const std::size_t n = h.size();
  if (n == 0) throw ConfigError("minimum_phase: empty input");
  MinPhaseTape tape;
  tape.spectrum.resize(n);
  std::vector<Complex> buf(h.begin(), h.end());
  fft::fft(buf, tape.spectrum);

  tape.magnitude.resize(n);
  for (std::size_t k = 0; k < n; ++k) tape.magnitude[k] = std::abs(tape.spectrum[k]);
  tape.argmax = static_cast<std::size_t>(
      std::max_element(tape.magnitude.begin(), tape.magnitude.end()) - tape.magnitude.begin());
  const double peak = tape.magnitude[tape.argmax];
  if (!(peak > 0.0) || !std::isfinite(peak)) throw NumericError("minimum_phase: zero or non-finite spectrum");
  tape.floor = 1e-8 * peak;

  tape.clamped.resize(n);
  std::vector<double> log_mag(n);
  for (std::size_t k = 0; k < n; ++k) {
    tape.clamped[k] = std::max(tape.magnitude[k], tape.floor);
    log_mag[k] = std::log(tape.clamped[k]);
  }
  const auto hil = hilbert(log_mag);
  tape.rotated.resize(n);
  for (std::size_t k = 0; k < n; ++k) tape.rotated[k] = std::polar(tape.magnitude[k], -hil[k]);
  return tape;
}

std::vector<double> min_phase_exact(std::span<const double> h) {
  const auto tape = min_phase_forward(h);
  const std::size_t n = h.size();
  std::vector<Complex> time(n);
  fft::ifft(tape.rotated, time);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = time[i].real() / static_cast<double>(n);
  return out;
}

std::vector<double> min_phase_exact_vjp(std::span<const double> h, std::span<const double> cotangent) {
  const std::size_t n = h.size();
  if (cotangent.size() != n) throw ConfigError("minimum_phase_vjp: size mismatch");
  const auto tape = min_phase_forward(h);

  // out = Re(ifft(Z)) / n  ->  Z_bar = fft(g) / n
  std::vector<Complex> g(cotangent.begin(), cotangent.end()), z_bar(n);
  fft::fft(g, z_bar);
  for (auto& v : z_bar) v /= static_cast<double>(n);

  std::vector<double> mag_bar(n), theta_bar(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Complex z = tape.rotated[k];
    const double m = tape.magnitude[k];
    const Complex unit = m > 0.0 ? z / m : std::polar(1.0, std::arg(z));
    mag_bar[k] = std::real(std::conj(z_bar[k]) * unit);
    theta_bar[k] = std::real(std::conj(z_bar[k]) * Complex(0.0, 1.0) * z);
  }
  // theta = -H(log_mag) and H^T = -H, so log_mag_bar = H(theta_bar).
  const auto log_bar = hilbert(theta_bar);
  double floor_bar = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double clamped_bar = log_bar[k] / tape.clamped[k];
    if (tape.magnitude[k] >= tape.floor)
      mag_bar[k] += clamped_bar;
    else
      floor_bar += clamped_bar;
  }
  mag_bar[tape.argmax] += 1e-8 * floor_bar;

  std::vector<Complex> spec_bar(n), time(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double m = tape.magnitude[k];
    spec_bar[k] = m > 0.0 ? mag_bar[k] * tape.spectrum[k] / m : Complex{};
  }
  fft::ifft(spec_bar, time);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = time[i].real();
  return out;
}

std::size_t padded_length(std::size_t n, std::size_t oversample) {
  if (oversample == 0) throw ConfigError("minimum_phase: oversample must be positive");
  return oversample == 1 ? n : fft::good_size(n * oversample);
}

// Cepstral estimate on h zero-padded to n samples, truncated to |h|.
std::vector<double> min_phase_padded(std::span<const double> h, std::size_t n) {
  std::vector<double> padded(n, 0.0);
  std::copy(h.begin(), h.end(), padded.begin());
  auto out = min_phase_exact(padded);
  out.resize(h.size());
  return out;
}

std::vector<double> min_phase_padded_vjp(std::span<const double> h, std::span<const double> cotangent,
                                         std::size_t n) {
  std::vector<double> padded(n, 0.0), cot(n, 0.0);
  std::copy(h.begin(), h.end(), padded.begin());
  std::copy(cotangent.begin(), cotangent.end(), cot.begin());
  auto out = min_phase_exact_vjp(padded, cot);
  out.resize(h.size());
  return out;
}

std::vector<Complex> dft(std::span<const double> x) {
  std::vector<Complex> buf(x.begin(), x.end()), spec(x.size());
  fft::fft(buf, spec);
  return spec;
}

// Phase of the padded estimate with the exact |F h| put back:
//   out = F^-1(|A| B / |B|),  A = F h,  B = F p(h).
std::vector<double> reimpose_magnitude(std::span<const Complex> a, std::span<const Complex> b) {
  const std::size_t n = a.size();
  std::vector<Complex> z(n), time(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double mb = std::abs(b[k]);
    z[k] = mb > 0.0 ? std::abs(a[k]) * b[k] / mb : Complex(std::abs(a[k]), 0.0);
  }
  fft::ifft(z, time);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = time[i].real() / static_cast<double>(n);
  return out;
}

std::vector<double> real_ifft(std::span<const Complex> spec) {
  std::vector<Complex> time(spec.size());
  fft::ifft(spec, time);
  std::vector<double> out(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) out[i] = time[i].real();
  return out;
}

}  // namespace

std::vector<double> minimum_phase(std::span<const double> h, std::size_t oversample) {
  const std::size_t n = padded_length(h.size(), oversample);
  if (n == h.size()) return min_phase_exact(h);
  const auto p = min_phase_padded(h, n);
  return reimpose_magnitude(dft(h), dft(p));
}

std::vector<double> minimum_phase_vjp(std::span<const double> h, std::span<const double> cotangent,
                                      std::size_t oversample) {
  if (cotangent.size() != h.size()) throw ConfigError("minimum_phase_vjp: size mismatch");
  const std::size_t n = padded_length(h.size(), oversample);
  if (n == h.size()) return min_phase_exact_vjp(h, cotangent);

  const std::size_t m = h.size();
  const auto p = min_phase_padded(h, n);
  const auto a = dft(h), b = dft(p);
  auto z_bar = dft(cotangent);
  for (auto& v : z_bar) v /= static_cast<double>(m);

  // Z = |A| u,  u = B / |B|.  du = j u Im(conj(u) dB) / |B|.
  std::vector<Complex> a_bar(m), b_bar(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double ma = std::abs(a[k]), mb = std::abs(b[k]);
    const Complex u = mb > 0.0 ? b[k] / mb : Complex(1.0, 0.0);
    const double mag_bar = std::real(std::conj(z_bar[k]) * u);
    a_bar[k] = ma > 0.0 ? mag_bar * a[k] / ma : Complex{};
    if (mb > 0.0) {
      const Complex ju = Complex(0.0, 1.0) * u;
      b_bar[k] = ma * std::real(std::conj(z_bar[k]) * ju) / mb * ju;
    }
  }
  auto out = real_ifft(a_bar);
  const auto via_b = min_phase_padded_vjp(h, real_ifft(b_bar), n);
  for (std::size_t i = 0; i < m; ++i) out[i] += via_b[i];
  return out;
}

double rms(std::span<const double> x) {
  if (x.empty()) throw ConfigError("rms: empty input");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

std::vector<double> rescale_rms(std::span<const double> x, double target) {
  if (!(target > 0.0)) throw ConfigError("rescale_rms: target must be positive");
  const double r = rms(x);
  if (!(r > 0.0)) throw NumericError("rescale_rms: all-zero input");
  std::vector<double> out(x.begin(), x.end());
  const double g = target / r;
  for (double& v : out) v *= g;
  return out;
}

std::vector<double> rescale_rms_vjp(std::span<const double> x, double target, std::span<const double> cotangent) {
  if (cotangent.size() != x.size()) throw ConfigError("rescale_rms_vjp: size mismatch");
  const double r = rms(x);
  if (!(r > 0.0)) throw NumericError("rescale_rms_vjp: all-zero input");
  // J = (t/r) (I - x x^T / (L r^2)), symmetric.
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * cotangent[i];
  const double denom = static_cast<double>(x.size()) * r * r;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (target / r) * (cotangent[i] - x[i] * dot / denom);
  return out;
}

}  // namespace dereverb::dsp
