#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <random>
#include <vector>

#include "dereverb/reverb_operator.hpp"

namespace fixture {

inline dereverb::dsp::StftConfig small_stft() {
  dereverb::dsp::StftConfig c;
  c.window_ms = 4.0;  // 64 samples
  c.hop_ms = 1.0;     // 16
  c.fft_size = 128;   // 65 bins, 125 Hz apart
  return c;
}

/// K = 65 bins, N_h frames, the default 26 bands.
inline dereverb::reverb::OperatorConfig small_operator(std::size_t n_frames = 8) {
  dereverb::reverb::OperatorConfig c;
  c.stft = small_stft();
  c.n_frames = n_frames;
  return c;
}

/// Random phases, weights and decays inside the default bounds.
inline dereverb::reverb::RirParams random_params(const dereverb::reverb::OperatorConfig& cfg, std::uint64_t seed) {
  auto p = dereverb::reverb::RirParams::initial(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> w(0.0, 20.0), a(0.5, 3.0);
  for (auto& v : p.weights_db) v = w(rng);
  for (auto& v : p.decays) v = a(rng);
  return p;
}

/// Nonstationary AR source: white noise through a two-pole resonance, gated
/// by syllable-like bursts of 80 to 300 ms with 20 to 150 ms gaps.
inline std::vector<double> speech_like(std::size_t n, std::uint64_t seed, double sample_rate = 16000.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> on(0.08, 0.3), off(0.02, 0.15), f0(300.0, 2500.0), level(0.3, 1.0);
  std::vector<double> x(n, 0.0);
  std::size_t t = 0;
  double y1 = 0.0, y2 = 0.0;
  while (t < n) {
    const std::size_t burst = std::size_t(on(rng) * sample_rate);
    const double w = 2.0 * 3.141592653589793 * f0(rng) / sample_rate;
    const double r = 0.97, a = level(rng);
    for (std::size_t i = 0; i < burst && t < n; ++i, ++t) {
      const double env = std::sin(3.141592653589793 * double(i) / double(burst));
      const double v = a * env * z(rng) + 2.0 * r * std::cos(w) * y1 - r * r * y2;
      y2 = y1;
      y1 = v;
      x[t] = v;
    }
    t += std::size_t(off(rng) * sample_rate);
  }
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double g = 0.05 / std::sqrt(ss / double(n));
  for (double& v : x) v *= g;
  return x;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dereverb-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
