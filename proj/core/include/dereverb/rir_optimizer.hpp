#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dereverb/cost.hpp"
#include "dereverb/reverb_operator.hpp"

namespace dereverb::rir {

struct AdamConfig {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Moments share the parameter layout; they persist across diffusion steps.
struct AdamState {
  reverb::RirGradient m;
  reverb::RirGradient v;
  std::size_t step = 0;

  static AdamState zeros_like(const reverb::RirParams& p);
};

/// One bias-corrected Adam update on every psi field followed by clamp_params.
void adam_step(AdamState& state, reverb::RirParams& params, const reverb::RirGradient& grad,
               const AdamConfig& cfg = {}, const reverb::ParamBounds& bounds = {});

struct RegularizerValue {
  double value = 0.0;
  reverb::RirGradient grad;
};

/// R = C(h, stopgrad(h) + sigma' v) for the projected RIR h of `rir`, with the
/// gradient taken through the first argument only. `noise` has rir_length()
/// samples.
RegularizerValue noise_regularizer(const reverb::RirParams& params, const reverb::AssembledRir& rir,
                                   const reverb::OperatorConfig& cfg, double sigma_prime,
                                   std::span<const double> noise);

struct OptimizerConfig {
  std::size_t iterations = 10;
  AdamConfig adam;
  bool regularize = true;
};

struct OptimizerTrace {
  std::vector<double> objective;  // J_RIR before each update
  std::vector<double> data_cost;  // C(y, A_psi(x0)) before each update
};

/// Gradient of J_RIR(psi) = C(y, A_psi(x0)) + R(psi) at `params`.
struct ObjectiveValue {
  double data_cost = 0.0;
  double regularizer = 0.0;
  reverb::RirGradient grad;
};
ObjectiveValue rir_objective(const reverb::RirParams& params, std::span<const double> x0, const SpectralCost& y,
                             const reverb::OperatorConfig& cfg, double sigma_prime,
                             std::span<const double> noise);

/// `iterations` Adam steps on J_RIR starting from `params` (modified in
/// place). A fresh noise vector is drawn from `rng` for every iteration when
/// sigma' > 0. Throws NumericError on a non-finite objective.
OptimizerTrace optimize_rir(reverb::RirParams& params, AdamState& state, std::span<const double> x0,
                            const SpectralCost& y, const reverb::OperatorConfig& cfg, const OptimizerConfig& opt,
                            double sigma_prime, std::mt19937_64& rng);

}  // namespace dereverb::rir
