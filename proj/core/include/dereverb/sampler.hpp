#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dereverb/cost.hpp"
#include "dereverb/prior.hpp"
#include "dereverb/reverb_operator.hpp"
#include "dereverb/rir_optimizer.hpp"
#include "dereverb/types.hpp"
#include "dereverb/wpe.hpp"

namespace dereverb::sampler {

/// sigma_i = (T^{1/rho} + i/(N-1) (T_min^{1/rho} - T^{1/rho}))^rho, i = 0..N-1.
/// The endpoints are returned exactly.
std::vector<double> karras_schedule(double t_max, double t_min, double rho, std::size_t steps);

struct DiffusionSchedule {
  double t_max = 0.5;
  double t_min = 1e-4;
  double rho = 10.0;
  std::size_t steps = 200;
  double s_churn = 50.0;
  double reg_sigma_min = 5e-4;  // clip range of the RIR regularizer noise level
  double reg_sigma_max = 1e-2;
  double zeta_tilde = 0.6;

  std::vector<double> sigmas() const { return karras_schedule(t_max, t_min, rho, steps); }
  /// Per-step churn factor gamma = min(S_churn / N, sqrt(2) - 1); 0 disables churn.
  double gamma() const;
  /// sigma' = clip(sigma, reg_sigma_min, reg_sigma_max).
  double regularizer_sigma(double sigma) const;
  void validate() const;
};

constexpr double kZetaGuard = 1e-12;

/// zeta = sqrt(L) zeta_tilde / grad_norm, so that ||zeta grad|| = sqrt(L) zeta_tilde.
/// Empty when grad_norm <= kZetaGuard (guidance skipped for that step).
std::optional<double> zeta(double grad_norm, std::size_t length, double zeta_tilde);

/// Linear measurement model y = A x. `adjoint(cotangent, n)` returns the
/// gradient of <cotangent, A x> for an input of n samples.
struct LinearOperator {
  std::function<std::vector<double>(std::span<const double>)> forward;
  std::function<std::vector<double>(std::span<const double>, std::size_t)> adjoint;
  std::size_t impulse_length = 1;  // output length is input length + impulse_length - 1
};

/// Linear convolution with a fixed RIR.
LinearOperator convolution_operator(std::vector<double> h);
/// A_psi for an assembled parameter set (copied into the operator).
LinearOperator reverb_operator(const reverb::AssembledRir& rir, const reverb::OperatorConfig& cfg);

struct GuidanceOptions {
  bool rescale = false;      // rescale x0_hat to target_rms before applying the operator
  double target_rms = 0.05;
};

struct LikelihoodTerms {
  std::vector<double> gradient;  // d C(y, A(x0_hat(x))) / d x
  std::vector<double> denoised;  // x0_hat after the optional rescale
  double cost = 0.0;
};

/// Gradient of the measurement cost through the Tweedie estimate x0_hat = x + sigma^2 s,
/// the optional RMS rescale and A. d x0_hat / d x uses the model's VJP when it
/// has one and the identity otherwise. `score` is s(x, sigma), already evaluated.
LikelihoodTerms likelihood_gradient(std::span<const double> x, double sigma, std::span<const double> score,
                                    const SpectralCost& y, const LinearOperator& op, const prior::ScoreModel& model,
                                    const GuidanceOptions& options);
LikelihoodTerms likelihood_gradient(std::span<const double> x, double sigma, const SpectralCost& y,
                                    const LinearOperator& op, const prior::ScoreModel& model,
                                    const GuidanceOptions& options);

/// x_next = x - sigma (sigma_next - sigma) (score + guidance): one Euler step of
/// dx/dsigma = -sigma (s + g).
std::vector<double> posterior_step(std::span<const double> x, double sigma, double sigma_next,
                                   std::span<const double> score, std::span<const double> guidance);

/// x_T = init + sigma_0 z.
std::vector<double> warm_init(std::span<const double> init, double sigma0, std::mt19937_64& rng);
/// WPE(y) truncated to `state_length` samples, plus sigma_0 noise from `seed`.
std::vector<double> warm_init(std::span<const double> y, std::size_t state_length, std::uint64_t seed,
                              const DiffusionSchedule& schedule, const wpe::WpeConfig& wpe = {});

struct SamplerConfig {
  DiffusionSchedule schedule;
  dsp::StftConfig stft;  // for the measurement cost
  wpe::WpeConfig wpe;
  bool warm_start = true;       // false starts from sigma_0 noise around zero
  bool rescale_informed = false;
  double data_rms = 0.0;        // 0 uses the model's value
  bool heun = true;
};

struct TraceRecord {
  std::size_t step = 0;          // counts down from N-1 to 0
  double sigma = 0.0;            // noise level the step starts from (after churn)
  double cost = 0.0;             // C(y, A(x0_hat)) at that level
  std::optional<double> zeta;    // empty if guidance was skipped
  double rms = 0.0;              // RMS of the state after the step
};

std::string trace_to_ndjson(std::span<const TraceRecord> trace);

/// Thrown when the state or a cost becomes non-finite; carries the partial trace.
class SamplerError : public NumericError {
 public:
  SamplerError(const std::string& what, std::vector<TraceRecord> trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const std::vector<TraceRecord>& trace() const { return trace_; }

 private:
  std::vector<TraceRecord> trace_;
};

struct InformedResult {
  std::vector<double> estimate;
  std::vector<TraceRecord> trace;
};

/// Posterior sampling with A fixed to convolution by h. The state has
/// |y| - |h| + 1 samples.
InformedResult run_informed(std::span<const double> y, std::span<const double> h, const prior::ScoreModel& model,
                            const SamplerConfig& cfg, std::uint64_t seed);
/// Same with an explicit initial mean instead of WPE(y).
InformedResult run_informed(std::span<const double> y, std::span<const double> h, const prior::ScoreModel& model,
                            const SamplerConfig& cfg, std::uint64_t seed, std::span<const double> init_mean);

struct BlindConfig {
  SamplerConfig sampler;
  reverb::OperatorConfig op;
  rir::OptimizerConfig optimizer;
};

struct BlindResult {
  std::vector<double> estimate;
  reverb::RirParams params;
  std::vector<TraceRecord> trace;
};

/// Called after every step with the step index and current parameters.
using ParamsObserver = std::function<void(std::size_t, const reverb::RirParams&)>;

/// Joint estimation: at each step the RIR parameters are refined by the inner
/// optimizer on the rescaled Tweedie estimate, then used for guidance. The
/// state has |y| - L_h + 1 samples.
BlindResult run_blind(std::span<const double> y, const prior::ScoreModel& model, const BlindConfig& cfg,
                      std::uint64_t seed, const ParamsObserver& observer = {});

}  // namespace dereverb::sampler
