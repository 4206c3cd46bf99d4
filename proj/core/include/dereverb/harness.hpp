#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dereverb/dsp.hpp"
#include "dereverb/prior.hpp"
#include "dereverb/sampler.hpp"

namespace dereverb::harness {

/// Deterministic 64-bit mix (splitmix64 finalizer) used to derive per-job seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t derive_seed(std::uint64_t run_seed, double snr_db, std::uint64_t index);

/// Ground-truth RIR: unit direct path plus, per octave band, unit-variance
/// band-passed white noise shaped by gain_b * exp(-t / tau_b).
struct SyntheticRirSpec {
  std::vector<double> band_centers_hz = {125, 250, 500, 1000, 2000, 4000};
  std::vector<double> tau_s;   // amplitude time constant per band
  std::vector<double> gains;   // per band
  double length_s = 0.5;
  double sample_rate = 16000.0;
  double direct_gain = 1.0;
  std::uint64_t seed = 0;

  /// Same tau and gain in every band.
  static SyntheticRirSpec uniform(double tau_s, double gain, double length_s, std::uint64_t seed);
  void validate() const;
};

std::vector<double> synth_rir(const SyntheticRirSpec& spec);

constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// h + n with white Gaussian n scaled so that 10 log10(|h|^2 / |n|^2) equals
/// snr_db exactly. An infinite SNR returns h unchanged.
std::vector<double> perturb_rir(std::span<const double> h, double snr_db, std::uint64_t seed);

constexpr double kSiSdrCap = 60.0;

/// Scale-invariant SDR in dB, capped at kSiSdrCap. Lengths must match.
double si_sdr(std::span<const double> est, std::span<const double> ref);

/// Mean over frames of the RMS difference of 10 log10(|STFT|^2 + floor) in dB,
/// with floor = 1e-10 times the reference's mean power.
double log_spectral_distance(std::span<const double> est, std::span<const double> ref,
                             const dsp::StftConfig& stft = {});

struct Pair {
  std::vector<double> clean;
  std::vector<double> rir;
};

struct DatasetSpec {
  std::size_t pairs = 20;
  std::size_t length = 32000;
  double tau_min_s = 0.03;
  double tau_max_s = 0.1;
  double rir_length_s = 0.25;
  double tail_gain = 0.05;
};

/// Clean signals drawn from `prior`, RIRs from synth_rir with per-band tau
/// uniform in [tau_min, tau_max]. Reproducible from `seed`.
std::vector<Pair> make_dataset(const DatasetSpec& spec, const prior::GaussianPrior& prior, std::uint64_t seed);

enum class Method { informed_dps, wpe, reverberant };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct ReportRow {
  double snr_db = 0.0;
  Method method = Method::informed_dps;
  double si_sdr_db = 0.0;
  double lsd_db = 0.0;
  std::size_t count = 0;
};

struct RobustnessReport {
  std::vector<ReportRow> rows;  // grid-major, methods in the requested order

  const ReportRow& at(double snr_db, Method m) const;
  /// Mean SI-SDR non-decreasing along the grid for method m.
  bool monotone(Method m) const;
  std::string to_csv() const;
  std::string to_json() const;
  /// One CSV per metric: snr_db then one column per method.
  std::string plot_csv(const std::string& metric) const;
};

struct SweepConfig {
  std::vector<double> snr_grid_db = {0.0, 10.0, 20.0, 30.0, kInfiniteSnr};
  std::vector<Method> methods = {Method::informed_dps};
  sampler::SamplerConfig sampler;
  std::size_t jobs = 1;
};

/// For each grid SNR and pair: the observation is the clean signal convolved
/// with the true RIR; informed sampling uses the RIR perturbed at that SNR.
/// Perturbation seeds depend on (run seed, SNR, pair); sampler seeds only on
/// (run seed, pair), so cells share their diffusion noise.
RobustnessReport robustness_sweep(std::span<const Pair> dataset, const prior::ScoreModel& model,
                                  const SweepConfig& cfg, std::uint64_t seed);

/// The per-pair quantities behind one sweep cell.
struct CellResult {
  std::vector<double> estimate;
  double si_sdr_db = 0.0;
  double lsd_db = 0.0;
};
CellResult run_cell(const Pair& pair, double snr_db, Method method, const prior::ScoreModel& model,
                    const SweepConfig& cfg, std::uint64_t seed, std::size_t index);

}  // namespace dereverb::harness
