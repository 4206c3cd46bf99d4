#include "dereverb/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dereverb/types.hpp"

namespace dereverb::prior {
namespace {

double mean_at(std::span<const double> mean, std::size_t i) { return mean.empty() ? 0.0 : mean[i]; }

void check_sigma(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("score: sigma must be finite and >= 0");
}

}  // namespace

std::vector<double> ScoreModel::vjp_score(std::span<const double>, double, std::span<const double>) const {
  throw ConfigError("score model does not provide a vector-Jacobian product");
}

std::vector<double> gaussian_score(std::span<const double> x, double sigma, std::span<const double> mean,
                                   double variance) {
  check_sigma(sigma);
  if (!mean.empty() && mean.size() != x.size()) throw ConfigError("gaussian_score: mean length mismatch");
  const double v = variance + sigma * sigma;
  if (!(v > 0.0)) throw ConfigError("gaussian_score: total variance must be positive");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (mean_at(mean, i) - x[i]) / v;
  return out;
}

GaussianPrior::GaussianPrior(std::vector<double> mean, double variance, double data_rms)
    : mean_(std::move(mean)), variance_(variance), data_rms_(data_rms) {
  if (!(variance_ > 0.0)) throw ConfigError("GaussianPrior: variance must be positive");
  if (!(data_rms_ > 0.0)) throw ConfigError("GaussianPrior: data_rms must be positive");
}

std::vector<double> GaussianPrior::score(std::span<const double> x, double sigma) const {
  return gaussian_score(x, sigma, mean_, variance_);
}

std::vector<double> GaussianPrior::sample(std::size_t length, std::mt19937_64& rng) const {
  if (!mean_.empty() && mean_.size() != length) throw ConfigError("GaussianPrior::sample: mean length mismatch");
  std::normal_distribution<double> normal;
  const double s = std::sqrt(variance_);
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = mean_at(mean_, i) + s * normal(rng);
  return out;
}

std::vector<double> GaussianPrior::vjp_score(std::span<const double> x, double sigma,
                                             std::span<const double> cotangent) const {
  check_sigma(sigma);
  if (cotangent.size() != x.size()) throw ConfigError("vjp_score: size mismatch");
  const double v = variance_ + sigma * sigma;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = -cotangent[i] / v;
  return out;
}

namespace {

struct GmmTerms {
  std::vector<double> resp;
  std::vector<double> total_var;
};

GmmTerms gmm_terms(std::span<const double> x, double sigma, std::span<const GmmComponent> comps) {
  check_sigma(sigma);
  if (comps.empty()) throw ConfigError("gmm: no components");
  const double d = static_cast<double>(x.size());
  GmmTerms t;
  t.resp.resize(comps.size());
  t.total_var.resize(comps.size());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const auto& comp = comps[c];
    if (!comp.mean.empty() && comp.mean.size() != x.size()) throw ConfigError("gmm: mean length mismatch");
    const double v = comp.variance + sigma * sigma;
    if (!(v > 0.0) || !(comp.weight > 0.0)) throw ConfigError("gmm: weights and variances must be positive");
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = x[i] - mean_at(comp.mean, i);
      sq += r * r;
    }
    t.total_var[c] = v;
    t.resp[c] = std::log(comp.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) - 0.5 * sq / v;
  }
  const double peak = *std::max_element(t.resp.begin(), t.resp.end());
  double norm = 0.0;
  for (double& r : t.resp) norm += (r = std::exp(r - peak));
  for (double& r : t.resp) r /= norm;
  return t;
}

}  // namespace

std::vector<double> gmm_score(std::span<const double> x, double sigma, std::span<const GmmComponent> components) {
  const auto t = gmm_terms(x, sigma, components);
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t c = 0; c < components.size(); ++c) {
    const double w = t.resp[c] / t.total_var[c];
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += w * (mean_at(components[c].mean, i) - x[i]);
  }
  return out;
}

GmmPrior::GmmPrior(std::vector<GmmComponent> components, double data_rms)
    : components_(std::move(components)), data_rms_(data_rms) {
  if (components_.empty()) throw ConfigError("GmmPrior: no components");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0) || !(c.variance > 0.0)) throw ConfigError("GmmPrior: weights and variances must be positive");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("GmmPrior: mixture weights must sum to 1");
  if (!(data_rms_ > 0.0)) throw ConfigError("GmmPrior: data_rms must be positive");
}

std::vector<double> GmmPrior::score(std::span<const double> x, double sigma) const {
  return gmm_score(x, sigma, components_);
}

std::vector<double> GmmPrior::sample(std::size_t length, std::mt19937_64& rng) const {
  std::vector<double> weights;
  for (const auto& c : components_) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const auto& comp = components_[pick(rng)];
  if (!comp.mean.empty() && comp.mean.size() != length) throw ConfigError("GmmPrior::sample: mean length mismatch");
  std::normal_distribution<double> normal;
  const double s = std::sqrt(comp.variance);
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = mean_at(comp.mean, i) + s * normal(rng);
  return out;
}

std::vector<double> GmmPrior::responsibilities(std::span<const double> x, double sigma) const {
  return gmm_terms(x, sigma, components_).resp;
}

std::vector<double> GmmPrior::vjp_score(std::span<const double> x, double sigma,
                                        std::span<const double> cotangent) const {
  if (cotangent.size() != x.size()) throw ConfigError("vjp_score: size mismatch");
  const auto t = gmm_terms(x, sigma, components_);
  // J = sum_c r_c (m_c m_c^T - I / v_c) - m_bar m_bar^T,  m_c = (mu_c - x) / v_c.  J is symmetric.
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0), m_bar(n, 0.0), m(n);
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const double r = t.resp[c];
    if (r == 0.0) continue;
    const double v = t.total_var[c];
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = (mean_at(components_[c].mean, i) - x[i]) / v;
      dot += m[i] * cotangent[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += r * (m[i] * dot - cotangent[i] / v);
      m_bar[i] += r * m[i];
    }
  }
  double dot_bar = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot_bar += m_bar[i] * cotangent[i];
  for (std::size_t i = 0; i < n; ++i) out[i] -= m_bar[i] * dot_bar;
  return out;
}

std::vector<double> tweedie_denoise(std::span<const double> x, double sigma, const ScoreModel& model) {
  check_sigma(sigma);
  auto s = model.score(x, sigma);
  if (s.size() != x.size()) throw NumericError("score model returned a vector of the wrong length");
  const double s2 = sigma * sigma;
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = x[i] + s2 * s[i];
  return s;
}

std::vector<double> tweedie_vjp(std::span<const double> x, double sigma, const ScoreModel& model,
                                std::span<const double> cotangent) {
  if (cotangent.size() != x.size()) throw ConfigError("tweedie_vjp: size mismatch");
  std::vector<double> out(cotangent.begin(), cotangent.end());
  if (!model.has_vjp()) return out;
  const auto j = model.vjp_score(x, sigma, cotangent);
  const double s2 = sigma * sigma;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += s2 * j[i];
  return out;
}

double KarrasPreconditioning::c_skip(double sigma) const {
  const double sd2 = sigma_data * sigma_data;
  return sd2 / (sigma * sigma + sd2);
}
double KarrasPreconditioning::c_out(double sigma) const {
  return sigma * sigma_data / std::sqrt(sigma * sigma + sigma_data * sigma_data);
}
double KarrasPreconditioning::c_in(double sigma) const {
  return 1.0 / std::sqrt(sigma * sigma + sigma_data * sigma_data);
}
double KarrasPreconditioning::c_noise(double sigma) const { return 0.25 * std::log(sigma); }
double KarrasPreconditioning::denoiser_weight(double sigma) const {
  const double p = sigma * sigma_data;
  return (sigma * sigma + sigma_data * sigma_data) / (p * p);
}
double KarrasPreconditioning::score_weight(double sigma) const {
  return sigma * sigma * (sigma * sigma + sigma_data * sigma_data) / (sigma_data * sigma_data);
}

PreconditionedScore::PreconditionedScore(Network network, KarrasPreconditioning precond, double data_rms)
    : network_(std::move(network)), precond_(precond), data_rms_(data_rms) {
  if (!network_) throw ConfigError("PreconditionedScore: empty network");
}

std::vector<double> PreconditionedScore::score(std::span<const double> x, double sigma) const {
  if (!(sigma > 0.0)) throw ConfigError("PreconditionedScore: sigma must be positive");
  std::vector<double> scaled(x.begin(), x.end());
  const double c_in = precond_.c_in(sigma);
  for (double& v : scaled) v *= c_in;
  const auto f = network_(scaled, precond_.c_noise(sigma));
  if (f.size() != x.size()) throw NumericError("PreconditionedScore: network output length mismatch");
  const double c_skip = precond_.c_skip(sigma), c_out = precond_.c_out(sigma), s2 = sigma * sigma;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (c_skip * x[i] + c_out * f[i] - x[i]) / s2;
  return out;
}

double dsm_loss(const ScoreModel& model, std::span<const double> x0, double sigma, std::span<const double> noise,
                double weight) {
  if (!(sigma > 0.0)) throw ConfigError("dsm_loss: sigma must be positive");
  if (noise.size() != x0.size()) throw ConfigError("dsm_loss: noise length mismatch");
  std::vector<double> x(x0.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = x0[i] + sigma * noise[i];
  const auto s = model.score(x, sigma);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = s[i] + noise[i] / sigma;
    acc += r * r;
  }
  return weight * acc;
}

double dsm_loss(const ScoreModel& model, std::span<const double> x0, double sigma, std::span<const double> noise,
                const KarrasPreconditioning& precond) {
  return dsm_loss(model, x0, sigma, noise, precond.score_weight(sigma));
}

}  // namespace dereverb::prior
