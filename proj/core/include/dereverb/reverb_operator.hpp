#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dereverb/dsp.hpp"
#include "dereverb/types.hpp"

namespace dereverb::reverb {

/// Frequencies (Hz) at which the decay model is parameterized. Values at the
/// STFT bins are obtained by linear interpolation of log-magnitudes, held
/// constant outside the outermost centers.
struct BandLayout {
  std::vector<double> centers_hz;

  /// 26 centers for 16 kHz: 125..1000 Hz every 125 Hz, 1250..3000 Hz every
  /// 250 Hz, 3500..8000 Hz every 500 Hz.
  static BandLayout default_16k();

  std::size_t size() const { return centers_hz.size(); }
  void validate(double nyquist_hz, std::size_t bins) const;
};

/// Box constraints applied after every optimizer step.
struct ParamBounds {
  double weight_db_min = 0.0;
  double weight_db_max = 40.0;
  double decay_min = 0.5;
  double decay_max = 28.0;
};

/// How A_psi(x) is evaluated once H-bar is assembled. Both give the same
/// result to rounding: subband convolution followed by full-frame overlap-add
/// is, by construction of filter_transform, linear convolution with h.
enum class Engine {
  subband,     // per-bin convolution across frames, O(M N_h K)
  time_domain  // FFT convolution with the projected RIR
};

struct OperatorConfig {
  dsp::StftConfig stft;
  BandLayout bands = BandLayout::default_16k();
  std::size_t n_frames = 100;
  ParamBounds bounds;
  Engine engine = Engine::time_domain;
  /// FFT oversampling of the minimum-phase projection (see dsp::minimum_phase).
  std::size_t min_phase_oversample = 8;

  /// L_h: samples of the time-domain RIR, n_frames * hop - (window - hop).
  std::size_t rir_length() const { return stft.covered_length(n_frames); }
  void validate() const;
};

/// Parameter set psi = {phases, (weight_b, decay_b)}.
struct RirParams {
  RealMatrix phases;                 // n_frames x bins, radians
  std::vector<double> weights_db;    // per band, 20 log10 w_b
  std::vector<double> decays;        // per band, per-frame decay rate alpha_b
  std::vector<double> band_centers;  // Hz, copied from the layout

  std::size_t n_frames() const { return static_cast<std::size_t>(phases.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(phases.cols()); }
  std::size_t n_bands() const { return weights_db.size(); }
  double weight(std::size_t b) const;

  /// Uniform phases in [-pi, pi) from `seed`, 0 dB weights and decays at the
  /// geometric mean of the decay bounds.
  static RirParams initial(const OperatorConfig& cfg, std::uint64_t seed);
  void validate(const OperatorConfig& cfg) const;
};

/// Same layout as RirParams; used for gradients and Adam moments.
struct RirGradient {
  RealMatrix phases;
  std::vector<double> weights_db;
  std::vector<double> decays;

  static RirGradient zeros_like(const RirParams& p);
  RirGradient& operator+=(const RirGradient& other);
  double squared_norm() const;
};

/// A'_{n,b} = w_b exp(-alpha_b n), n_frames x B.
RealMatrix magnitude_from_decay(const RirParams& p);

/// Precomputed log-linear interpolation from band centers to STFT bins.
class BandInterpolator {
 public:
  BandInterpolator(const BandLayout& layout, const dsp::StftConfig& stft);

  /// exp(lerp(log A')) : n x B -> n x K. Throws ConfigError on non-positive input.
  RealMatrix interpolate(const RealMatrix& band_magnitude) const;
  /// Linear map on log-magnitudes and its transpose.
  RealMatrix lerp(const RealMatrix& band_log) const;
  RealMatrix lerp_transpose(const RealMatrix& bin_log_cotangent) const;

  std::size_t bins() const { return lower_.size(); }
  std::size_t bands() const { return n_bands_; }

 private:
  std::vector<std::size_t> lower_;
  std::vector<std::size_t> upper_;
  std::vector<double> frac_;
  std::size_t n_bands_ = 0;
};

RealMatrix interpolate_bands(const RealMatrix& band_magnitude, const BandLayout& layout,
                             const dsp::StftConfig& stft);

/// Time-domain filter -> per-bin filter spectrogram. STFT frames of h rotated
/// by the framing pad and scaled by 1/ola_gain, so that subband convolution
/// followed by overlap_add equals linear convolution with h.
dsp::Spectrogram filter_transform(std::span<const double> h, const dsp::StftConfig& stft);
std::vector<double> filter_transform_vjp(const dsp::StftConfig& stft, std::size_t length,
                                         const ComplexMatrix& cotangent);

/// Projected RIR and the forward intermediates needed for gradients.
struct AssembledRir {
  dsp::Spectrogram filter;       // H-bar, n_frames x bins
  std::vector<double> rir;       // h after minimum-phase projection and direct path
  RealMatrix magnitude;          // A, n_frames x bins
  ComplexMatrix raw_spectrogram; // H = A e^{j Phi}
  std::vector<double> raw_rir;   // iSTFT(H)
};

/// H = A e^{j Phi};  H-bar = STFT(delta (+) P_min(iSTFT(H))).
/// Throws NumericError if the parameters produce an all-zero response.
AssembledRir assemble_rir(const RirParams& p, const OperatorConfig& cfg);

/// Effective magnitude |H-bar| after the direct-path substitution (diagnostic).
RealMatrix corrected_magnitude(const AssembledRir& rir);

/// Y_{m,k} = sum_n H_{n,k} X_{m-n,k}; output has M + N - 1 frames.
ComplexMatrix subband_convolve(const ComplexMatrix& filter, const ComplexMatrix& x);

struct SubbandGradient {
  ComplexMatrix filter;
  ComplexMatrix x;
};
SubbandGradient subband_convolve_vjp(const ComplexMatrix& filter, const ComplexMatrix& x,
                                     const ComplexMatrix& cotangent);

/// Output length of the operator for an input of `length` samples: L + L_h - 1.
std::size_t output_length(const OperatorConfig& cfg, std::size_t length);

/// A_psi(x) for an already assembled RIR.
std::vector<double> apply(const AssembledRir& rir, std::span<const double> x, const OperatorConfig& cfg);
std::vector<double> apply(const RirParams& p, std::span<const double> x, const OperatorConfig& cfg);

struct ApplyGradient {
  std::vector<double> x;
  std::vector<double> rir;  // cotangent on the projected time-domain RIR
  ComplexMatrix filter;     // cotangent on H-bar; empty for the time-domain engine
};
ApplyGradient apply_vjp(const AssembledRir& rir, std::span<const double> x, const OperatorConfig& cfg,
                        std::span<const double> cotangent);

/// Backpropagates a cotangent on the projected time-domain RIR to psi.
RirGradient assemble_vjp(const RirParams& p, const AssembledRir& rir, const OperatorConfig& cfg,
                         std::span<const double> rir_cotangent);

/// Gradient of <cotangent, A_psi(x)> with respect to x and psi.
struct OperatorGradient {
  std::vector<double> x;
  RirGradient params;
};
OperatorGradient apply_vjp_full(const RirParams& p, const AssembledRir& rir, std::span<const double> x,
                                const OperatorConfig& cfg, std::span<const double> cotangent);

/// Projects weights and decays into their bounds; phases are untouched.
RirParams clamp_params(RirParams p, const ParamBounds& bounds = {});

/// h_psi = A_psi(delta) truncated to L_h samples.
std::vector<double> render_rir(const RirParams& p, const OperatorConfig& cfg);

// JSON document {band_centers, w_db, alpha, n_frames, bins, phases}; phases are
// base64 of little-endian float64, row-major.
std::string to_json(const RirParams& p);
RirParams from_json(const std::string& text);

}  // namespace dereverb::reverb
