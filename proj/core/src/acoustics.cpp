#include "dereverb/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include "dereverb/types.hpp"

namespace dereverb::acoustics {
namespace {

constexpr double kPi = std::numbers::pi;

std::complex<double> response(std::span<const Biquad> sections, double omega) {
  const std::complex<double> z1 = std::polar(1.0, -omega);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

// Forward-backward filtering with zero padding of `pad` samples on both sides;
// returns the full padded result.
std::vector<double> zero_phase_padded(std::span<const double> x, std::span<const Biquad> sections,
                                      std::size_t pad) {
  std::vector<double> buf(x.size() + 2 * pad, 0.0);
  std::copy(x.begin(), x.end(), buf.begin() + static_cast<std::ptrdiff_t>(pad));
  buf = filter(buf, sections);
  std::reverse(buf.begin(), buf.end());
  buf = filter(buf, sections);
  std::reverse(buf.begin(), buf.end());
  return buf;
}

// Long enough for the band-pass impulse response to decay far below any
// level the decay fits look at (about 40 periods of the lower band edge).
std::size_t band_padding(double center_hz, double sample_rate) {
  return static_cast<std::size_t>(std::ceil(40.0 * std::sqrt(2.0) / center_hz * sample_rate));
}

void check_band(double center_hz, double sample_rate) {
  if (!(sample_rate > 0.0)) throw ConfigError("acoustics: sample rate must be positive");
  if (!(center_hz > 0.0) || center_hz * std::sqrt(2.0) >= sample_rate / 2.0)
    throw ConfigError("acoustics: octave band exceeds Nyquist");
}

double energy(std::span<const double> x, std::size_t begin, std::size_t end) {
  double acc = 0.0;
  for (std::size_t i = begin; i < end && i < x.size(); ++i) acc += x[i] * x[i];
  return acc;
}

std::size_t peak_index(std::span<const double> h) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < h.size(); ++i)
    if (std::abs(h[i]) > std::abs(h[best])) best = i;
  return best;
}

Clarity clarity_from(std::span<const double> h, std::size_t boundary) {
  const double early = energy(h, 0, boundary);
  const double tail = energy(h, boundary, h.size());
  if (!(early > 0.0)) throw NumericError("c50: no energy before the 50 ms boundary");
  if (tail <= early * std::pow(10.0, -kC50Clip / 10.0)) return {kC50Clip, true};
  return {10.0 * std::log10(early / tail), false};
}

}  // namespace

std::vector<double> octave_centers(double sample_rate) {
  std::vector<double> out;
  for (double c : {125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0})
    if (c * std::sqrt(2.0) < sample_rate / 2.0) out.push_back(c);
  return out;
}

std::vector<Biquad> octave_bandpass(double center_hz, double sample_rate) {
  check_band(center_hz, sample_rate);
  const double k = 2.0 * sample_rate;
  const double lo = k * std::tan(kPi * center_hz / std::sqrt(2.0) / sample_rate);
  const double hi = k * std::tan(kPi * center_hz * std::sqrt(2.0) / sample_rate);
  const double w0 = std::sqrt(lo * hi);
  const double bw = hi - lo;
  // Second-order Butterworth prototype pole; low-pass to band-pass maps it
  // to the roots of s^2 - p bw s + w0^2.
  const std::complex<double> p = std::polar(1.0, 3.0 * kPi / 4.0);
  const std::complex<double> disc = std::sqrt(p * p * bw * bw - 4.0 * w0 * w0);
  const std::complex<double> poles[2] = {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0};

  std::vector<Biquad> sections;
  for (const auto& s : poles) {
    const std::complex<double> z = (1.0 + s / k) / (1.0 - s / k);
    Biquad b;
    b.b0 = 1.0;
    b.b1 = 0.0;
    b.b2 = -1.0;  // zeros at z = 1 and z = -1
    b.a1 = -2.0 * z.real();
    b.a2 = std::norm(z);
    sections.push_back(b);
  }
  const double center_digital = 2.0 * std::atan(w0 / k);
  const double g = 1.0 / std::sqrt(std::abs(response(sections, center_digital)));
  for (auto& b : sections) {
    b.b0 *= g;
    b.b2 *= g;
  }
  return sections;
}

std::vector<double> filter(std::span<const double> x, std::span<const Biquad> sections) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> octave_filter(std::span<const double> h, double center_hz, double sample_rate) {
  if (h.empty()) throw ConfigError("octave_filter: empty input");
  const auto sections = octave_bandpass(center_hz, sample_rate);
  const std::size_t pad = band_padding(center_hz, sample_rate);
  const auto full = zero_phase_padded(h, sections, pad);
  return {full.begin() + static_cast<std::ptrdiff_t>(pad),
          full.begin() + static_cast<std::ptrdiff_t>(pad + h.size())};
}

std::vector<double> edc_db(std::span<const double> h) {
  if (h.empty()) throw ConfigError("edc: empty input");
  std::vector<double> e(h.size());
  double acc = 0.0;
  for (std::size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    e[i] = acc;
  }
  const double total = e[0];
  if (!(total > 0.0)) throw NumericError("edc: zero-energy input");
  for (double& v : e) v = v > 0.0 ? 10.0 * std::log10(v / total) : -std::numeric_limits<double>::infinity();
  return e;
}

std::optional<double> t60(std::span<const double> h, double sample_rate) {
  if (!(sample_rate > 0.0)) throw ConfigError("t60: sample rate must be positive");
  const auto e = edc_db(h);
  const auto start = std::find_if(e.begin(), e.end(), [](double v) { return v <= -5.0; });
  const auto stop = std::find_if(e.begin(), e.end(), [](double v) { return v < -35.0; });
  if (stop == e.end() || start == e.end()) return std::nullopt;
  // Fit over [first sample at or below -5 dB, last sample at or above -35 dB].
  const std::size_t i0 = static_cast<std::size_t>(start - e.begin());
  const std::size_t i1 = static_cast<std::size_t>(stop - e.begin());
  if (i1 < i0 + 2) return std::nullopt;
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  const double n = static_cast<double>(i1 - i0);
  for (std::size_t i = i0; i < i1; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    st += t;
    sy += e[i];
    stt += t * t;
    sty += t * e[i];
  }
  const double denom = n * stt - st * st;
  if (!(denom > 0.0)) return std::nullopt;
  const double slope = (n * sty - st * sy) / denom;  // dB per second
  if (!(slope < 0.0)) return std::nullopt;
  return -60.0 / slope;
}

std::optional<double> t60(std::span<const double> h, double center_hz, double sample_rate) {
  const auto sections = octave_bandpass(center_hz, sample_rate);
  const auto band = zero_phase_padded(h, sections, band_padding(center_hz, sample_rate));
  return t60(band, sample_rate);
}

Clarity c50(std::span<const double> h, double sample_rate) {
  if (h.empty()) throw ConfigError("c50: empty input");
  if (!(sample_rate > 0.0)) throw ConfigError("c50: sample rate must be positive");
  const std::size_t boundary = peak_index(h) + static_cast<std::size_t>(std::llround(0.05 * sample_rate));
  return clarity_from(h, boundary);
}

Clarity c50(std::span<const double> h, double center_hz, double sample_rate) {
  if (h.empty()) throw ConfigError("c50: empty input");
  const auto sections = octave_bandpass(center_hz, sample_rate);
  const std::size_t pad = band_padding(center_hz, sample_rate);
  const auto band = zero_phase_padded(h, sections, pad);
  const std::size_t boundary = pad + peak_index(h) + static_cast<std::size_t>(std::llround(0.05 * sample_rate));
  return clarity_from(band, boundary);
}

RirMetrics analyze(std::span<const double> h, double sample_rate) {
  RirMetrics m;
  for (double c : octave_centers(sample_rate)) m.bands.push_back({c, t60(h, c, sample_rate), c50(h, c, sample_rate)});
  return m;
}

MetricsError metrics_error(const RirMetrics& est, const RirMetrics& ref) {
  if (est.bands.size() != ref.bands.size()) throw ConfigError("metrics_error: band mismatch");
  MetricsError out;
  for (std::size_t i = 0; i < est.bands.size(); ++i) {
    const auto& a = est.bands[i];
    const auto& b = ref.bands[i];
    if (a.center_hz != b.center_hz) throw ConfigError("metrics_error: band mismatch");
    BandError e;
    e.center_hz = a.center_hz;
    if (a.t60_s && b.t60_s)
      e.t60_abs_s = std::abs(*a.t60_s - *b.t60_s);
    else
      out.excluded_t60_bands.push_back(a.center_hz);
    if (!a.c50.clipped && !b.c50.clipped)
      e.c50_abs_db = std::abs(a.c50.db - b.c50.db);
    else
      out.excluded_c50_bands.push_back(a.center_hz);
    out.bands.push_back(e);
  }
  return out;
}

std::string to_csv(const RirMetrics& m) {
  std::ostringstream os;
  os.precision(6);
  os << "band_hz,t60_s,c50_db,flags\n";
  for (const auto& b : m.bands) {
    std::string flags;
    if (!b.t60_s) flags += "t60_undefined";
    if (b.c50.clipped) flags += std::string(flags.empty() ? "" : ";") + "c50_clipped";
    os << b.center_hz << ',';
    if (b.t60_s) os << *b.t60_s;
    os << ',' << b.c50.db << ',' << flags << '\n';
  }
  return os.str();
}

}  // namespace dereverb::acoustics
