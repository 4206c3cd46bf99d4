#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dereverb/dsp.hpp"
#include "oracles.hpp"

using namespace dereverb;

namespace {

dsp::StftConfig small_cfg() {
  dsp::StftConfig c;
  c.window_ms = 4.0;  // 64 samples
  c.hop_ms = 1.0;     // 16
  c.fft_size = 128;   // 65 bins
  return c;
}

double spec_inner(const ComplexMatrix& a, const ComplexMatrix& b) { return (a.array() * b.array().conjugate()).real().sum(); }

ComplexMatrix random_spec(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  const auto re = oracle::randn(std::size_t(rows * cols), seed);
  const auto im = oracle::randn(std::size_t(rows * cols), seed + 1);
  ComplexMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows * cols; ++i) m.data()[i] = Complex(re[std::size_t(i)], im[std::size_t(i)]);
  return m;
}

}  // namespace

TEST_CASE("default framing matches the published STFT settings") {
  dsp::StftConfig c;
  CHECK(c.window_length() == 512);
  CHECK(c.hop_length() == 128);
  CHECK(c.bins() == 513);
  CHECK(c.frames_for(16000) == (16000 + 384 + 127) / 128);
}

TEST_CASE("stft equals direct DFT summation") {
  const auto cfg = small_cfg();
  const auto x = oracle::randn(300, 3);
  const auto s = dsp::stft(x, cfg);
  const auto ref = oracle::stft(x, 64, 16, 128);
  REQUIRE(s.frames() == ref.size());
  REQUIRE(s.bins() == ref[0].size());
  double worst = 0.0;
  for (std::size_t m = 0; m < ref.size(); ++m)
    for (std::size_t k = 0; k < ref[m].size(); ++k)
      worst = std::max(worst, std::abs(s.values(Eigen::Index(m), Eigen::Index(k)) - ref[m][k]));
  CHECK(worst < 1e-10);
}

TEST_CASE("stft of silence is zero and stft is linear") {
  dsp::StftConfig cfg;
  const std::vector<double> zeros(16000, 0.0);
  CHECK(dsp::stft(zeros, cfg).values.cwiseAbs().maxCoeff() == 0.0);

  const auto x = oracle::randn(4000, 5);
  auto x2 = x;
  for (auto& v : x2) v *= 2.0;
  const auto a = dsp::stft(x, cfg).values;
  const auto b = dsp::stft(x2, cfg).values;
  CHECK((b - 2.0 * a).cwiseAbs().maxCoeff() < 1e-12 * b.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(dsp::stft(std::vector<double>{}, cfg), ConfigError);
}

TEST_CASE("istft inverts stft") {
  for (const auto& cfg : {dsp::StftConfig{}, small_cfg()}) {
    const auto x = oracle::randn(5000, 11);
    const auto y = dsp::istft(dsp::stft(x, cfg), x.size());
    CHECK(oracle::rel_err(y, x) < 1e-6);
  }
  const auto cfg = small_cfg();
  dsp::Spectrogram zero{ComplexMatrix::Zero(10, 65), cfg};
  const auto z = dsp::istft(zero);
  CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("istft then stft is an idempotent projection") {
  const auto cfg = small_cfg();
  dsp::Spectrogram s{random_spec(20, 65, 7), cfg};
  // DC and Nyquist bins of a real signal are real.
  s.values.col(0) = s.values.col(0).real().cast<Complex>();
  s.values.col(64) = s.values.col(64).real().cast<Complex>();
  const std::size_t len = cfg.covered_length(20);
  const auto p1 = dsp::stft(dsp::istft(s, len), cfg);
  const auto p2 = dsp::stft(dsp::istft(p1, len), cfg);
  CHECK((p2.values - p1.values).norm() / p1.values.norm() < 1e-6);
  CHECK((p1.values - s.values).norm() / s.values.norm() > 0.1);  // the input really was inconsistent
}

TEST_CASE("stft and istft adjoints") {
  const auto cfg = small_cfg();
  const auto x = oracle::randn(333, 1);
  const std::size_t frames = cfg.frames_for(x.size());
  const auto u = random_spec(Eigen::Index(frames), 65, 2);
  const double lhs = spec_inner(dsp::stft(x, cfg).values, u);
  const auto xt = dsp::stft_vjp(cfg, x.size(), u);
  CHECK(oracle::rel_diff(lhs, oracle::dot(x, xt)) < 1e-9);

  dsp::Spectrogram s{random_spec(Eigen::Index(frames), 65, 3), cfg};
  const auto v = oracle::randn(x.size(), 4);
  const double l2 = oracle::dot(dsp::istft(s, x.size()), v);
  CHECK(oracle::rel_diff(l2, spec_inner(s.values, dsp::istft_vjp(cfg, frames, v))) < 1e-9);

  const auto w = oracle::randn(x.size() + 50, 5);
  const double l3 = oracle::dot(dsp::overlap_add(s, w.size()), w);
  CHECK(oracle::rel_diff(l3, spec_inner(s.values, dsp::overlap_add_vjp(cfg, frames, w))) < 1e-9);
}

TEST_CASE("compress") {
  ComplexMatrix s(1, 3);
  s << Complex(8.0, 0.0), Complex(0.0, 0.0), std::polar(5.0, 1.1);
  const auto c = dsp::compress(s);
  CHECK(std::abs(c(0, 0) - Complex(4.0, 0.0)) < 1e-12);
  CHECK(c(0, 1) == Complex(0.0, 0.0));
  CHECK(std::abs(std::abs(c(0, 2)) - std::pow(5.0, 2.0 / 3.0)) < 1e-12);
  CHECK(std::abs(std::arg(c(0, 2)) - 1.1) < 1e-12);

  ComplexMatrix one(1, 1), cot(1, 1);
  one << Complex(1.0, 0.0);
  cot << Complex(1.0, 0.0);
  CHECK(std::abs(dsp::compress_vjp(one, cot)(0, 0) - Complex(2.0 / 3.0, 0.0)) < 1e-12);
  ComplexMatrix zero = ComplexMatrix::Zero(1, 1);
  CHECK(dsp::compress_vjp(zero, cot)(0, 0) == Complex(0.0, 0.0));
}

TEST_CASE("compress vjp matches finite differences") {
  const auto s = random_spec(4, 6, 9);
  const auto u = random_spec(4, 6, 10);
  const auto d = random_spec(4, 6, 11);
  const double eps = 1e-6;
  const double fd = (spec_inner(dsp::compress(s + eps * d), u) - spec_inner(dsp::compress(s - eps * d), u)) / (2 * eps);
  CHECK(oracle::rel_diff(fd, spec_inner(dsp::compress_vjp(s, u), d)) < 1e-6);
}

TEST_CASE("minimum phase two-tap closed forms") {
  const std::vector<double> delta = {1.0, 0.0, 0.0, 0.0};
  const auto d = dsp::minimum_phase(delta);
  CHECK(oracle::rel_err(d, delta) < 1e-12);

  const std::vector<double> minph = {1.0, 0.5};
  CHECK(oracle::rel_err(dsp::minimum_phase(minph), minph) < 1e-6);
  const std::vector<double> maxph = {0.5, 1.0};
  CHECK(oracle::rel_err(dsp::minimum_phase(maxph), minph) < 1e-6);

  CHECK_THROWS_AS(dsp::minimum_phase(std::vector<double>(8, 0.0)), NumericError);
}

TEST_CASE("minimum phase preserves magnitude and front-loads energy") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    // RIR-shaped: direct path plus a decaying tail.
    std::vector<double> h(256);
    for (std::size_t t = 1; t < h.size(); ++t) h[t] = 0.3 * u(rng) * std::exp(-double(t) / 40.0);
    h[0] = 1.0;
    const auto hm = dsp::minimum_phase(h);
    const auto a = oracle::dft_magnitude(h, h.size());
    const auto b = oracle::dft_magnitude(hm, h.size());
    CHECK(oracle::rel_err(b, a) < 1e-6);
    double total = 0.0;
    for (double v : h) total += v * v;
    double ea = 0.0, eb = 0.0, worst = 0.0;
    for (std::size_t n = 0; n < h.size(); ++n) {
      ea += h[n] * h[n];
      eb += hm[n] * hm[n];
      worst = std::max(worst, (ea - eb) / total);
    }
    CHECK(worst < 1e-2);
  }
}

TEST_CASE("minimum phase vjp matches finite differences") {
  auto h = oracle::randn(32, 4);
  h[0] += 3.0;
  const auto g = oracle::randn(32, 5);
  const auto d = oracle::randn(32, 6);
  const auto f = [&](std::span<const double> v) { return oracle::dot(dsp::minimum_phase(v), g); };
  const double fd = oracle::directional_fd(f, h, d, 1e-6);
  CHECK(oracle::rel_diff(fd, oracle::dot(dsp::minimum_phase_vjp(h, g), d)) < 1e-4);
}

TEST_CASE("rms and rescale") {
  const std::vector<double> c(100, -0.3);
  CHECK(std::abs(dsp::rms(c) - 0.3) < 1e-15);
  const auto x = oracle::randn(500, 8, 0.2);
  CHECK(oracle::rel_err(dsp::rescale_rms(x, dsp::rms(x)), x) < 1e-12);
  CHECK(std::abs(dsp::rms(dsp::rescale_rms(x, 0.05)) - 0.05) < 1e-9);
  CHECK_THROWS_AS(dsp::rescale_rms(std::vector<double>(10, 0.0), 0.05), NumericError);
  CHECK_THROWS_AS(dsp::rescale_rms(x, 0.0), ConfigError);

  const auto g = oracle::randn(500, 9);
  const auto d = oracle::randn(500, 10);
  const auto f = [&](std::span<const double> v) { return oracle::dot(dsp::rescale_rms(v, 0.05), g); };
  CHECK(oracle::rel_diff(oracle::directional_fd(f, x, d, 1e-6), oracle::dot(dsp::rescale_rms_vjp(x, 0.05, g), d)) <
        1e-6);
}

TEST_CASE("chained cost gradient through stft, compress and istft") {
  const auto cfg = small_cfg();
  const auto x = oracle::randn(200, 12);
  const auto target = dsp::compress(dsp::stft(oracle::randn(200, 13), cfg).values);
  const auto cost = [&](std::span<const double> v) {
    return (dsp::compress(dsp::stft(v, cfg).values) - target).squaredNorm();
  };
  const auto s = dsp::stft(x, cfg).values;
  const ComplexMatrix diff = 2.0 * (dsp::compress(s) - target);
  const auto grad = dsp::stft_vjp(cfg, x.size(), dsp::compress_vjp(s, diff));
  const auto d = oracle::randn(200, 14);
  CHECK(oracle::rel_diff(oracle::directional_fd(cost, x, d, 1e-6), oracle::dot(grad, d)) < 1e-4);
}

TEST_CASE("oversampled minimum phase") {
  std::vector<double> h(300);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  for (std::size_t t = 1; t < h.size(); ++t) h[t] = 0.3 * nd(rng) * std::exp(-double(t) / 20.0);
  h[0] = 1.0;
  const auto hm = dsp::minimum_phase(h, 8);
  REQUIRE(hm.size() == h.size());
  CHECK(oracle::rel_err(oracle::dft_magnitude(hm, 1024), oracle::dft_magnitude(h, 1024)) < 1e-4);

  const auto g = oracle::randn(h.size(), 5);
  const auto d = oracle::randn(h.size(), 6);
  const auto f = [&](std::span<const double> v) { return oracle::dot(dsp::minimum_phase(v, 8), g); };
  CHECK(oracle::rel_diff(oracle::directional_fd(f, h, d, 1e-6), oracle::dot(dsp::minimum_phase_vjp(h, g, 8), d)) < 1e-4);
  CHECK_THROWS_AS(dsp::minimum_phase(h, 0), ConfigError);
}

TEST_CASE("minimum phase is idempotent") {
  auto h = oracle::randn(128, 31);
  for (std::size_t t = 0; t < h.size(); ++t) h[t] *= std::exp(-double(t) / 10.0);
  const auto once = dsp::minimum_phase(h);
  CHECK(oracle::rel_err(dsp::minimum_phase(once), once) < 1e-6);
}
