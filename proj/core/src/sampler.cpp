#include "dereverb/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dereverb/fft.hpp"

namespace dereverb::sampler {

std::vector<double> karras_schedule(double t_max, double t_min, double rho, std::size_t steps) {
  if (steps < 2) throw ConfigError("karras_schedule: need at least 2 steps");
  if (!(t_min > 0.0) || !(t_max > t_min)) throw ConfigError("karras_schedule: need T > T_min > 0");
  if (!(rho > 0.0)) throw ConfigError("karras_schedule: rho must be positive");
  const double a = std::pow(t_max, 1.0 / rho);
  const double b = std::pow(t_min, 1.0 / rho);
  std::vector<double> sigma(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(steps - 1);
    sigma[i] = std::pow(a + f * (b - a), rho);
  }
  sigma.front() = t_max;
  sigma.back() = t_min;
  return sigma;
}

double DiffusionSchedule::gamma() const {
  if (s_churn <= 0.0) return 0.0;
  return std::min(s_churn / static_cast<double>(steps), std::sqrt(2.0) - 1.0);
}

double DiffusionSchedule::regularizer_sigma(double sigma) const {
  return std::clamp(sigma, reg_sigma_min, reg_sigma_max);
}

void DiffusionSchedule::validate() const {
  karras_schedule(t_max, t_min, rho, steps);
  if (s_churn < 0.0) throw ConfigError("schedule: S_churn must be >= 0");
  if (!(reg_sigma_min > 0.0) || !(reg_sigma_max >= reg_sigma_min))
    throw ConfigError("schedule: need 0 < sigma'_min <= sigma'_max");
  if (!(zeta_tilde >= 0.0)) throw ConfigError("schedule: zeta_tilde must be >= 0");
}

std::optional<double> zeta(double grad_norm, std::size_t length, double zeta_tilde) {
  if (!(grad_norm > kZetaGuard)) return std::nullopt;
  return std::sqrt(static_cast<double>(length)) * zeta_tilde / grad_norm;
}

LinearOperator convolution_operator(std::vector<double> h) {
  if (h.empty()) throw ConfigError("convolution_operator: empty filter");
  auto shared = std::make_shared<const std::vector<double>>(std::move(h));
  LinearOperator op;
  op.impulse_length = shared->size();
  op.forward = [shared](std::span<const double> x) { return fft::convolve(x, *shared); };
  op.adjoint = [shared](std::span<const double> g, std::size_t n) { return fft::correlate(g, *shared, n); };
  return op;
}

LinearOperator reverb_operator(const reverb::AssembledRir& rir, const reverb::OperatorConfig& cfg) {
  auto shared = std::make_shared<const reverb::AssembledRir>(rir);
  LinearOperator op;
  op.impulse_length = rir.rir.size();
  op.forward = [shared, cfg](std::span<const double> x) { return reverb::apply(*shared, x, cfg); };
  op.adjoint = [shared, cfg](std::span<const double> g, std::size_t n) {
    const std::vector<double> zeros(n, 0.0);  // apply is linear in x; the primal point is irrelevant
    return reverb::apply_vjp(*shared, zeros, cfg, g).x;
  };
  return op;
}

LikelihoodTerms likelihood_gradient(std::span<const double> x, double sigma, std::span<const double> score,
                                    const SpectralCost& y, const LinearOperator& op, const prior::ScoreModel& model,
                                    const GuidanceOptions& options) {
  if (score.size() != x.size()) throw ConfigError("likelihood_gradient: score length mismatch");
  const double s2 = sigma * sigma;
  std::vector<double> x0(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x0[i] = x[i] + s2 * score[i];

  LikelihoodTerms out;
  out.denoised = options.rescale ? dsp::rescale_rms(x0, options.target_rms) : x0;
  const auto y_hat = op.forward(out.denoised);
  auto cv = y.value_and_grad(y_hat);
  out.cost = cv.value;
  auto g = op.adjoint(cv.grad, x.size());
  if (options.rescale) g = dsp::rescale_rms_vjp(x0, options.target_rms, g);
  out.gradient = prior::tweedie_vjp(x, sigma, model, g);
  return out;
}

LikelihoodTerms likelihood_gradient(std::span<const double> x, double sigma, const SpectralCost& y,
                                    const LinearOperator& op, const prior::ScoreModel& model,
                                    const GuidanceOptions& options) {
  const auto s = model.score(x, sigma);
  return likelihood_gradient(x, sigma, s, y, op, model, options);
}

std::vector<double> posterior_step(std::span<const double> x, double sigma, double sigma_next,
                                   std::span<const double> score, std::span<const double> guidance) {
  if (score.size() != x.size() || (!guidance.empty() && guidance.size() != x.size()))
    throw ConfigError("posterior_step: length mismatch");
  const double c = sigma * (sigma_next - sigma);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = guidance.empty() ? 0.0 : guidance[i];
    out[i] = x[i] - c * (score[i] + g);
  }
  return out;
}

std::vector<double> warm_init(std::span<const double> init, double sigma0, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> x(init.begin(), init.end());
  for (double& v : x) v += sigma0 * normal(rng);
  return x;
}

std::vector<double> warm_init(std::span<const double> y, std::size_t state_length, std::uint64_t seed,
                              const DiffusionSchedule& schedule, const wpe::WpeConfig& wpe) {
  if (y.empty()) throw ConfigError("warm_init: empty observation");
  auto mean = wpe::dereverb(y, wpe);
  mean.resize(state_length, 0.0);
  std::mt19937_64 rng(seed);
  return warm_init(mean, schedule.t_max, rng);
}

std::string trace_to_ndjson(std::span<const TraceRecord> trace) {
  std::ostringstream os;
  for (const auto& r : trace) {
    nlohmann::json j{{"step", r.step}, {"sigma", r.sigma}, {"cost", r.cost}, {"rms", r.rms}};
    j["zeta"] = r.zeta ? nlohmann::json(*r.zeta) : nlohmann::json(nullptr);
    os << j.dump() << '\n';
  }
  return os.str();
}

namespace {

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

double norm(std::span<const double> v) {
  double acc = 0.0;
  for (double a : v) acc += a * a;
  return std::sqrt(acc);
}

// Supplies the operator used for guidance at one step, given the current
// (rescaled) Tweedie estimate and noise level.
using OperatorHook = std::function<LinearOperator(std::span<const double>, double)>;

std::vector<double> integrate(std::vector<double> x, const SpectralCost& y, const prior::ScoreModel& model,
                              const SamplerConfig& cfg, const GuidanceOptions& guidance, std::mt19937_64& rng,
                              const OperatorHook& next_operator, std::vector<TraceRecord>& trace,
                              const std::function<void(std::size_t)>& after_step) {
  const auto& sched = cfg.schedule;
  auto sigmas = sched.sigmas();
  sigmas.push_back(0.0);
  const double gamma = sched.gamma();
  const std::size_t n = sched.steps;
  std::normal_distribution<double> normal;
  trace.reserve(trace.size() + n);

  auto fail = [&](const std::string& what, std::size_t i) {
    throw SamplerError("sampler: " + what + " at step " + std::to_string(n - 1 - i) +
                           " (sigma=" + std::to_string(sigmas[i]) + ")",
                       trace);
  };

  for (std::size_t i = 0; i < n; ++i) {
    const double sigma = sigmas[i];
    const double sigma_next = sigmas[i + 1];
    // Churn: raise the noise level to sigma_hat = sigma (1 + gamma) with fresh noise.
    const double sigma_hat = sigma * (1.0 + gamma);
    if (gamma > 0.0) {
      const double extra = std::sqrt(sigma_hat * sigma_hat - sigma * sigma);
      for (double& v : x) v += extra * normal(rng);
    }
    const auto s = model.score(x, sigma_hat);
    if (s.size() != x.size() || !finite(s)) fail("non-finite score", i);

    TraceRecord rec;
    rec.step = n - 1 - i;
    rec.sigma = sigma_hat;
    std::vector<double> g;
    if (sched.zeta_tilde > 0.0) {
      LinearOperator op;
      if (next_operator) {
        std::vector<double> x0(x.size());
        const double s2 = sigma_hat * sigma_hat;
        for (std::size_t t = 0; t < x.size(); ++t) x0[t] = x[t] + s2 * s[t];
        if (guidance.rescale) x0 = dsp::rescale_rms(x0, guidance.target_rms);
        op = next_operator(x0, sigma_hat);
      }
      const auto lt = likelihood_gradient(x, sigma_hat, s, y, op, model, guidance);
      if (!std::isfinite(lt.cost) || !finite(lt.gradient)) fail("non-finite likelihood gradient", i);
      rec.cost = lt.cost;
      rec.zeta = zeta(norm(lt.gradient), x.size(), sched.zeta_tilde);
      if (rec.zeta) {
        g = lt.gradient;
        for (double& v : g) v *= -*rec.zeta;
      }
    }

    auto x_next = posterior_step(x, sigma_hat, sigma_next, s, g);
    if (cfg.heun && sigma_next > 0.0) {
      const auto s_next = model.score(x_next, sigma_next);
      if (s_next.size() != x.size() || !finite(s_next)) fail("non-finite score", i);
      // Trapezoidal average of the slopes at sigma_hat and sigma_next; the
      // guidance term is evaluated once per step and shared by both.
      const double dsig = sigma_next - sigma_hat;
      for (std::size_t t = 0; t < x.size(); ++t) {
        const double gt = g.empty() ? 0.0 : g[t];
        const double d0 = -sigma_hat * (s[t] + gt);
        const double d1 = -sigma_next * (s_next[t] + gt);
        x_next[t] = x[t] + dsig * 0.5 * (d0 + d1);
      }
    }
    if (!finite(x_next)) fail("non-finite state", i);
    x = std::move(x_next);
    rec.rms = dsp::rms(x);
    trace.push_back(rec);
    if (after_step) after_step(i);
  }
  return x;
}

double resolve_data_rms(const SamplerConfig& cfg, const prior::ScoreModel& model) {
  const double r = cfg.data_rms > 0.0 ? cfg.data_rms : model.data_rms();
  if (!(r > 0.0)) throw ConfigError("sampler: data RMS must be positive");
  return r;
}

}  // namespace

InformedResult run_informed(std::span<const double> y, std::span<const double> h, const prior::ScoreModel& model,
                            const SamplerConfig& cfg, std::uint64_t seed, std::span<const double> init_mean) {
  cfg.schedule.validate();
  if (h.empty() || y.size() < h.size()) throw ConfigError("run_informed: observation shorter than the RIR");
  const std::size_t length = y.size() - h.size() + 1;
  if (init_mean.size() != length) throw ConfigError("run_informed: initial mean has the wrong length");

  std::mt19937_64 rng(seed);
  auto x = warm_init(init_mean, cfg.schedule.t_max, rng);
  const SpectralCost cost(y, cfg.stft);
  const auto op = convolution_operator(std::vector<double>(h.begin(), h.end()));
  GuidanceOptions guidance;
  guidance.rescale = cfg.rescale_informed;
  if (guidance.rescale) guidance.target_rms = resolve_data_rms(cfg, model);

  InformedResult out;
  out.estimate = integrate(std::move(x), cost, model, cfg, guidance, rng,
                           [&](std::span<const double>, double) { return op; }, out.trace, {});
  return out;
}

InformedResult run_informed(std::span<const double> y, std::span<const double> h, const prior::ScoreModel& model,
                            const SamplerConfig& cfg, std::uint64_t seed) {
  if (h.empty() || y.size() < h.size()) throw ConfigError("run_informed: observation shorter than the RIR");
  const std::size_t length = y.size() - h.size() + 1;
  std::vector<double> mean(length, 0.0);
  if (cfg.warm_start) {
    mean = wpe::dereverb(y, cfg.wpe);
    mean.resize(length);
  }
  return run_informed(y, h, model, cfg, seed, mean);
}

BlindResult run_blind(std::span<const double> y, const prior::ScoreModel& model, const BlindConfig& cfg,
                      std::uint64_t seed, const ParamsObserver& observer) {
  cfg.sampler.schedule.validate();
  cfg.op.validate();
  const std::size_t lh = cfg.op.rir_length();
  if (y.size() <= lh) throw ConfigError("run_blind: observation must be longer than the RIR length");
  const std::size_t length = y.size() - lh + 1;

  // Independent streams for the state noise and the parameter initialization.
  std::mt19937_64 rng(seed);
  const std::uint64_t param_seed = rng();
  std::vector<double> mean(length, 0.0);
  if (cfg.sampler.warm_start) {
    mean = wpe::dereverb(y, cfg.sampler.wpe);
    mean.resize(length);
  }
  auto x = warm_init(mean, cfg.sampler.schedule.t_max, rng);

  BlindResult out;
  out.params = reverb::RirParams::initial(cfg.op, param_seed);
  auto adam = rir::AdamState::zeros_like(out.params);
  const SpectralCost cost(y, cfg.sampler.stft);
  GuidanceOptions guidance;
  guidance.rescale = true;
  guidance.target_rms = resolve_data_rms(cfg.sampler, model);

  const auto next_operator = [&](std::span<const double> x0, double sigma) {
    rir::optimize_rir(out.params, adam, x0, cost, cfg.op, cfg.optimizer,
                      cfg.sampler.schedule.regularizer_sigma(sigma), rng);
    return reverb_operator(reverb::assemble_rir(out.params, cfg.op), cfg.op);
  };
  const auto after = [&](std::size_t i) {
    if (observer) observer(cfg.sampler.schedule.steps - 1 - i, out.params);
  };
  out.estimate = integrate(std::move(x), cost, model, cfg.sampler, guidance, rng, next_operator, out.trace, after);
  return out;
}

}  // namespace dereverb::sampler
