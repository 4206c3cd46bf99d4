#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dereverb/types.hpp"

namespace dereverb::prior {

/// Score of the noised data density, s(x, sigma) ~ grad_x log p_sigma(x),
/// for the variance-exploding process x_sigma = x_0 + sigma z.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual std::vector<double> score(std::span<const double> x, double sigma) const = 0;

  /// Whether vjp_score is available. Without it the sampler uses the
  /// identity-Jacobian approximation d x0_hat / d x = I.
  virtual bool has_vjp() const { return false; }
  /// cotangent^T (d score / d x). Throws ConfigError when unsupported.
  virtual std::vector<double> vjp_score(std::span<const double> x, double sigma,
                                        std::span<const double> cotangent) const;

  /// RMS of clean training data; target of the sampler's rescale step.
  virtual double data_rms() const = 0;
};

/// Closed form for the marginal of N(mean, variance I) noised by sigma:
/// (mean - x) / (variance + sigma^2). An empty mean means zeros.
std::vector<double> gaussian_score(std::span<const double> x, double sigma, std::span<const double> mean,
                                   double variance);

class GaussianPrior final : public ScoreModel {
 public:
  GaussianPrior(std::vector<double> mean, double variance, double data_rms);

  std::vector<double> score(std::span<const double> x, double sigma) const override;
  bool has_vjp() const override { return true; }
  std::vector<double> vjp_score(std::span<const double> x, double sigma,
                                std::span<const double> cotangent) const override;
  double data_rms() const override { return data_rms_; }

  const std::vector<double>& mean() const { return mean_; }
  double variance() const { return variance_; }
  /// Draw of `length` samples (the mean must be empty or of that length).
  std::vector<double> sample(std::size_t length, std::mt19937_64& rng) const;

 private:
  std::vector<double> mean_;
  double variance_;
  double data_rms_;
};

struct GmmComponent {
  double weight = 1.0;
  std::vector<double> mean;  // empty means zeros
  double variance = 1.0;
};

/// grad log sum_i pi_i N(x; mu_i, (s_i^2 + sigma^2) I), log-sum-exp stabilized.
std::vector<double> gmm_score(std::span<const double> x, double sigma, std::span<const GmmComponent> components);

class GmmPrior final : public ScoreModel {
 public:
  GmmPrior(std::vector<GmmComponent> components, double data_rms);

  std::vector<double> score(std::span<const double> x, double sigma) const override;
  bool has_vjp() const override { return true; }
  std::vector<double> vjp_score(std::span<const double> x, double sigma,
                                std::span<const double> cotangent) const override;
  double data_rms() const override { return data_rms_; }

  const std::vector<GmmComponent>& components() const { return components_; }
  std::vector<double> sample(std::size_t length, std::mt19937_64& rng) const;
  /// Posterior component probabilities at noise level sigma.
  std::vector<double> responsibilities(std::span<const double> x, double sigma) const;

 private:
  std::vector<GmmComponent> components_;
  double data_rms_;
};

/// x0_hat = x + sigma^2 s(x, sigma).
std::vector<double> tweedie_denoise(std::span<const double> x, double sigma, const ScoreModel& model);

/// cotangent^T (d x0_hat / d x) = cotangent + sigma^2 vjp_score(...), or the
/// cotangent itself if the model has no VJP.
std::vector<double> tweedie_vjp(std::span<const double> x, double sigma, const ScoreModel& model,
                                std::span<const double> cotangent);

/// EDM preconditioning: D(x; sigma) = c_skip x + c_out F(c_in x; c_noise),
/// with c_skip = sd^2/(sigma^2+sd^2), c_out = sigma sd / sqrt(sigma^2+sd^2),
/// c_in = 1/sqrt(sigma^2+sd^2), c_noise = ln(sigma)/4, and denoiser loss weight
/// lambda = (sigma^2+sd^2) / (sigma sd)^2.
struct KarrasPreconditioning {
  double sigma_data = 0.5;

  double c_skip(double sigma) const;
  double c_out(double sigma) const;
  double c_in(double sigma) const;
  double c_noise(double sigma) const;
  double denoiser_weight(double sigma) const;
  /// Same weighting expressed on the score error: D - x0 = sigma^2 (s + z/sigma),
  /// so the weight is sigma^4 * denoiser_weight = sigma^2 (sigma^2+sd^2)/sd^2.
  double score_weight(double sigma) const;
};

/// Wraps a raw network F(c_in x, c_noise) into a score model through the
/// preconditioned denoiser: s = (D(x; sigma) - x) / sigma^2.
class PreconditionedScore final : public ScoreModel {
 public:
  using Network = std::function<std::vector<double>(std::span<const double>, double)>;
  PreconditionedScore(Network network, KarrasPreconditioning precond, double data_rms);

  std::vector<double> score(std::span<const double> x, double sigma) const override;
  double data_rms() const override { return data_rms_; }

 private:
  Network network_;
  KarrasPreconditioning precond_;
  double data_rms_;
};

/// Denoising score matching for one draw: weight * || s(x0 + sigma z, sigma) + z / sigma ||^2.
double dsm_loss(const ScoreModel& model, std::span<const double> x0, double sigma, std::span<const double> noise,
                double weight);
/// Same with the Karras weight.
double dsm_loss(const ScoreModel& model, std::span<const double> x0, double sigma, std::span<const double> noise,
                const KarrasPreconditioning& precond = {});

}  // namespace dereverb::prior
