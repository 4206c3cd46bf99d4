#include "dereverb/rir_optimizer.hpp"

#include <cmath>
#include <string>

#include "dereverb/types.hpp"

namespace dereverb::rir {
namespace {

struct AdamCoefficients {
  double b1, b2, step_size, eps;
};

double adam_update(double& m, double& v, double g, const AdamConfig& cfg, const AdamCoefficients& c) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
  const double m_hat = m / c.b1;
  const double v_hat = v / c.b2;
  return c.step_size * m_hat / (std::sqrt(v_hat) + c.eps);
}

bool all_finite(const reverb::RirGradient& g) {
  if (!g.phases.allFinite()) return false;
  for (double v : g.weights_db)
    if (!std::isfinite(v)) return false;
  for (double v : g.decays)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

AdamState AdamState::zeros_like(const reverb::RirParams& p) {
  return {reverb::RirGradient::zeros_like(p), reverb::RirGradient::zeros_like(p), 0};
}

void adam_step(AdamState& state, reverb::RirParams& params, const reverb::RirGradient& grad, const AdamConfig& cfg,
               const reverb::ParamBounds& bounds) {
  if (grad.phases.rows() != params.phases.rows() || grad.phases.cols() != params.phases.cols() ||
      grad.weights_db.size() != params.weights_db.size() || grad.decays.size() != params.decays.size())
    throw ConfigError("adam_step: gradient shape does not match parameters");
  if (state.m.phases.size() != params.phases.size() || state.m.weights_db.size() != params.weights_db.size())
    state = AdamState::zeros_like(params);
  if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const AdamCoefficients c{1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t), cfg.lr, cfg.eps};
  for (Eigen::Index i = 0; i < params.phases.size(); ++i)
    params.phases.data()[i] -=
        adam_update(state.m.phases.data()[i], state.v.phases.data()[i], grad.phases.data()[i], cfg, c);
  for (std::size_t b = 0; b < params.weights_db.size(); ++b) {
    params.weights_db[b] -= adam_update(state.m.weights_db[b], state.v.weights_db[b], grad.weights_db[b], cfg, c);
    params.decays[b] -= adam_update(state.m.decays[b], state.v.decays[b], grad.decays[b], cfg, c);
  }
  params = reverb::clamp_params(std::move(params), bounds);
}

RegularizerValue noise_regularizer(const reverb::RirParams& params, const reverb::AssembledRir& rir,
                                   const reverb::OperatorConfig& cfg, double sigma_prime,
                                   std::span<const double> noise) {
  if (!(sigma_prime >= 0.0)) throw ConfigError("noise_regularizer: sigma' must be >= 0");
  if (noise.size() != rir.rir.size()) throw ConfigError("noise_regularizer: noise length must equal L_h");
  RegularizerValue out{0.0, reverb::RirGradient::zeros_like(params)};
  if (sigma_prime == 0.0) return out;
  std::vector<double> target(rir.rir);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += sigma_prime * noise[i];
  const SpectralCost cost(target, cfg.stft);
  auto cv = cost.value_and_grad(rir.rir);
  out.value = cv.value;
  out.grad = reverb::assemble_vjp(params, rir, cfg, cv.grad);
  return out;
}

ObjectiveValue rir_objective(const reverb::RirParams& params, std::span<const double> x0, const SpectralCost& y,
                             const reverb::OperatorConfig& cfg, double sigma_prime,
                             std::span<const double> noise) {
  const auto rir = reverb::assemble_rir(params, cfg);
  const auto y_hat = reverb::apply(rir, x0, cfg);
  const auto cv = y.value_and_grad(y_hat);
  auto g = reverb::apply_vjp(rir, x0, cfg, cv.grad);

  ObjectiveValue out;
  out.data_cost = cv.value;
  if (sigma_prime > 0.0) {
    if (noise.size() != rir.rir.size()) throw ConfigError("rir_objective: noise length must equal L_h");
    std::vector<double> target(rir.rir);
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += sigma_prime * noise[i];
    const auto rv = SpectralCost(target, cfg.stft).value_and_grad(rir.rir);
    out.regularizer = rv.value;
    for (std::size_t i = 0; i < g.rir.size(); ++i) g.rir[i] += rv.grad[i];
  }
  out.grad = reverb::assemble_vjp(params, rir, cfg, g.rir);
  return out;
}

OptimizerTrace optimize_rir(reverb::RirParams& params, AdamState& state, std::span<const double> x0,
                            const SpectralCost& y, const reverb::OperatorConfig& cfg, const OptimizerConfig& opt,
                            double sigma_prime, std::mt19937_64& rng) {
  OptimizerTrace trace;
  const bool noisy = opt.regularize && sigma_prime > 0.0;
  std::vector<double> noise;
  std::normal_distribution<double> normal;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    if (noisy) {
      noise.resize(cfg.rir_length());
      for (double& v : noise) v = normal(rng);
    }
    const auto obj = rir_objective(params, x0, y, cfg, noisy ? sigma_prime : 0.0, noise);
    const double total = obj.data_cost + obj.regularizer;
    if (!std::isfinite(total))
      throw NumericError("optimize_rir: non-finite objective at iteration " + std::to_string(it));
    trace.objective.push_back(total);
    trace.data_cost.push_back(obj.data_cost);
    adam_step(state, params, obj.grad, opt.adam, cfg.bounds);
  }
  return trace;
}

}  // namespace dereverb::rir
