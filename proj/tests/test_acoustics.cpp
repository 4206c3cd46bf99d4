#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dereverb/acoustics.hpp"
#include "dereverb/harness.hpp"
#include "oracles.hpp"

using namespace dereverb;
using namespace dereverb::acoustics;

namespace {

constexpr double kFs = 16000.0;

std::vector<double> decaying_noise(double tau, double seconds, std::uint64_t seed) {
  auto h = oracle::randn(std::size_t(seconds * kFs), seed);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] *= std::exp(-double(i) / kFs / tau);
  return h;
}

std::vector<double> decaying_tone(double f, double tau, double seconds) {
  std::vector<double> h(std::size_t(seconds * kFs));
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double t = double(i) / kFs;
    h[i] = std::sin(2.0 * std::numbers::pi * f * t + 0.3) * std::exp(-t / tau);
  }
  return h;
}

// steady-state amplitude ratio of the zero-phase filter at frequency f, in dB
double response_db(double center, double f) {
  std::vector<double> x(32000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * double(i) / kFs);
  const auto y = octave_filter(x, center, kFs);
  double ex = 0.0, ey = 0.0;
  for (std::size_t i = 8000; i < 24000; ++i) {
    ex += x[i] * x[i];
    ey += y[i] * y[i];
  }
  return 10.0 * std::log10(ey / ex);
}

double energy(std::span<const double> v) {
  double e = 0.0;
  for (double a : v) e += a * a;
  return e;
}

}  // namespace

TEST_CASE("octave centers below Nyquist") {
  CHECK(octave_centers(16000.0) == std::vector<double>{125, 250, 500, 1000, 2000, 4000});
  CHECK(octave_centers(8000.0) == std::vector<double>{125, 250, 500, 1000, 2000});
  CHECK(octave_bandpass(1000.0, kFs).size() == 2);
  CHECK_THROWS_AS(octave_bandpass(8000.0, kFs), ConfigError);
}

TEST_CASE("octave filter frequency response") {
  for (double c : octave_centers(kFs)) {
    CHECK(std::abs(response_db(c, c)) < 1.0);
    if (c / 2.0 >= 125.0 / 2.0) CHECK(response_db(c, c / 2.0 / std::sqrt(2.0)) < -20.0);
    if (c * 2.0 * std::sqrt(2.0) < kFs / 2.0) CHECK(response_db(c, c * 2.0 * std::sqrt(2.0)) < -20.0);
  }
  // one octave away from the center, in the middle of the neighbouring band
  CHECK(response_db(1000.0, 250.0) < -20.0);
  CHECK(response_db(1000.0, 4000.0) < -20.0);
}

TEST_CASE("octave filter is zero phase and causal cascade matches a direct recursion") {
  // an impulse in the middle comes out symmetric
  std::vector<double> d(4001, 0.0);
  d[2000] = 1.0;
  const auto y = octave_filter(d, 1000.0, kFs);
  for (std::size_t k = 1; k < 500; ++k) CHECK(y[2000 - k] == doctest::Approx(y[2000 + k]).epsilon(1e-9).scale(1e-9));

  const auto secs = octave_bandpass(500.0, kFs);
  const auto x = oracle::randn(300, 1);
  auto ref = x;
  for (const auto& s : secs) {
    std::vector<double> out(ref.size());
    for (std::size_t n = 0; n < ref.size(); ++n) {
      double v = s.b0 * ref[n];
      if (n >= 1) v += s.b1 * ref[n - 1] - s.a1 * out[n - 1];
      if (n >= 2) v += s.b2 * ref[n - 2] - s.a2 * out[n - 2];
      out[n] = v;
    }
    ref = out;
  }
  CHECK(oracle::rel_err(filter(x, secs), ref) < 1e-12);
}

TEST_CASE("octave bands partition the energy") {
  const auto h = decaying_noise(0.1, 0.5, 2);
  std::vector<double> sum(h.size(), 0.0);
  for (double c : octave_centers(kFs)) {
    const auto b = octave_filter(h, c, kFs);
    for (std::size_t i = 0; i < h.size(); ++i) sum[i] += b[i];
  }
  std::vector<double> residual(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) residual[i] = h[i] - sum[i];
  CHECK((energy(sum) + energy(residual)) / energy(h) == doctest::Approx(1.0).epsilon(0.10));
}

TEST_CASE("energy decay curve") {
  const std::vector<double> delta{1.0, 0.0, 0.0, 0.0};
  const auto e = edc_db(delta);
  CHECK(e[0] == 0.0);
  for (std::size_t i = 1; i < e.size(); ++i) CHECK(std::isinf(e[i]));

  const double tau = 0.1;
  const auto h = decaying_noise(tau, 1.2, 3);
  const auto curve = edc_db(h);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1]);

  // least squares slope between -5 and -35 dB against the envelope's rate
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0, n = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i] > -5.0 || curve[i] < -35.0) continue;
    const double t = double(i) / kFs;
    st += t;
    sy += curve[i];
    stt += t * t;
    sty += t * curve[i];
    n += 1.0;
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  CHECK(slope == doctest::Approx(-(10.0 / std::numbers::ln10) * 2.0 / tau).epsilon(0.05));
}

TEST_CASE("t60 against the analytic decay") {
  for (double tau : {0.05, 0.1, 0.2, 0.5, 1.0}) {
    const double expect = 3.0 * std::numbers::ln10 * tau;
    const auto tone = decaying_tone(1000.0, tau, 8.0 * tau + 0.1);
    const auto band = t60(tone, 1000.0, kFs);
    REQUIRE(band.has_value());
    CHECK(*band == doctest::Approx(expect).epsilon(0.05));

    const auto broad = t60(decaying_noise(tau, 8.0 * tau + 0.1, 4), kFs);
    REQUIRE(broad.has_value());
    CHECK(*broad == doctest::Approx(expect).epsilon(0.05));
  }
  const double a = *t60(decaying_tone(500.0, 0.15, 1.5), 500.0, kFs);
  const double b = *t60(decaying_tone(500.0, 0.30, 2.5), 500.0, kFs);
  CHECK(b / a == doctest::Approx(2.0).epsilon(0.05));

  std::vector<double> delta(1000, 0.0);
  delta[0] = 1.0;
  CHECK_FALSE(t60(delta, kFs).has_value());
}

TEST_CASE("clarity") {
  const std::size_t ms50 = 800;
  std::vector<double> h(3200, 0.0);
  h[0] = 1.0;
  h[1600] = 1.0;  // 100 ms
  CHECK(c50(h, kFs).db == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK_FALSE(c50(h, kFs).clipped);

  std::vector<double> early(3200, 0.0);
  early[0] = 1.0;
  early[ms50 - 1] = 0.5;
  const auto cl = c50(early, kFs);
  CHECK(cl.clipped);
  CHECK(cl.db == kC50Clip);

  // the window is measured from the peak, not sample 0
  std::vector<double> late(h.size() + 100, 0.0);
  late[100] = 1.0;
  late[1700] = 1.0;
  late[10] = 0.01;
  CHECK(c50(late, kFs).db == doctest::Approx(10.0 * std::log10(1.0001)).epsilon(1e-9));

  // gain invariance and monotone in tail energy
  auto r = decaying_noise(0.1, 0.6, 6);
  r[0] = 10.0;  // unambiguous peak at sample 0
  auto r2 = r;
  for (double& v : r2) v *= 37.0;
  CHECK(c50(r2, kFs).db == doctest::Approx(c50(r, kFs).db).epsilon(1e-12));
  CHECK(c50(r2, 1000.0, kFs).db == doctest::Approx(c50(r, 1000.0, kFs).db).epsilon(1e-12));
  double prev = c50(r, kFs).db;
  for (double k : {1.2, 1.5, 2.0}) {
    auto t = r;
    for (std::size_t i = ms50 + 1; i < t.size(); ++i) t[i] *= k;
    const double now = c50(t, kFs).db;
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("t60 is gain invariant") {
  const auto r = decaying_tone(2000.0, 0.2, 1.8);
  auto r2 = r;
  for (double& v : r2) v *= 1e-3;
  CHECK(*t60(r2, 2000.0, kFs) == doctest::Approx(*t60(r, 2000.0, kFs)).epsilon(1e-9));
}

TEST_CASE("metrics and their errors") {
  const auto h = harness::synth_rir(harness::SyntheticRirSpec::uniform(0.08, 0.3, 0.8, 7));
  const auto m = analyze(h, kFs);
  REQUIRE(m.bands.size() == 6);
  for (const auto& b : m.bands) {
    REQUIRE(b.t60_s.has_value());
    CHECK(*b.t60_s > 0.0);
    CHECK(*b.t60_s == doctest::Approx(3.0 * std::numbers::ln10 * 0.08).epsilon(0.25));
  }

  const auto zero = metrics_error(m, m);
  for (const auto& b : zero.bands) {
    CHECK(*b.t60_abs_s == 0.0);
    CHECK(*b.c50_abs_db == 0.0);
  }

  auto est = m;
  est.bands[0].t60_s = 0.5;
  auto ref = m;
  ref.bands[0].t60_s = 0.4;
  ref.bands[1].t60_s.reset();
  ref.bands[2].c50 = {kC50Clip, true};
  const auto err = metrics_error(est, ref);
  CHECK(*err.bands[0].t60_abs_s == doctest::Approx(0.1));
  CHECK_FALSE(err.bands[1].t60_abs_s.has_value());
  CHECK_FALSE(err.bands[2].c50_abs_db.has_value());
  CHECK(err.excluded_t60_bands == std::vector<double>{250.0});
  CHECK(err.excluded_c50_bands == std::vector<double>{500.0});

  auto fewer = m;
  fewer.bands.pop_back();
  CHECK_THROWS_AS(metrics_error(fewer, m), ConfigError);

  const auto csv = to_csv(ref);
  CHECK(csv.rfind("band_hz,t60_s,c50_db,flags\n", 0) == 0);
  CHECK(csv.find("250,,") != std::string::npos);
  CHECK(csv.find("t60_undefined") != std::string::npos);
  CHECK(csv.find("c50_clipped") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}
