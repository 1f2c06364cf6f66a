#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ggmm {

inline constexpr double kMinShape = 0.3;
inline constexpr double kMaxShape = 2.0;

/// One-dimensional zero-mean generalized Gaussian, parameterized by its
/// standard deviation `lambda` and shape `nu`.
///
/// Density: kappa / (2 lambda_nu) * exp(-(|x| / lambda_nu)^nu) with
/// lambda_nu = lambda * sqrt(Gamma(1/nu) / Gamma(3/nu)) and kappa = nu / Gamma(1/nu).
class GGDParams {
 public:
  /// Throws std::invalid_argument unless lambda > 0 and nu in [0.3, 2].
  GGDParams(double lambda, double nu);

  double lambda() const { return lambda_; }
  double nu() const { return nu_; }
  double lambda_nu() const { return lambda_nu_; }
  double kappa() const { return kappa_; }
  /// log(kappa / (2 lambda_nu)), the log density at zero.
  double log_norm() const { return log_norm_; }

 private:
  double lambda_;
  double nu_;
  double lambda_nu_;
  double kappa_;
  double log_norm_;
};

/// lambda_nu / lambda = sqrt(Gamma(1/nu) / Gamma(3/nu)); valid for any nu > 0.
double ggd_scale_ratio(double nu);

double ggd_log_pdf(double x, const GGDParams& p);

/// Draws |X| = lambda_nu * G^(1/nu), G ~ Gamma(1/nu, 1), with a uniform sign.
class GGDSampler {
 public:
  explicit GGDSampler(const GGDParams& p);
  template <class Engine>
  double operator()(Engine& eng) {
    const double g = gamma_(eng);
    const double mag = lambda_nu_ * std::pow(g, inv_nu_);
    return sign_(eng) ? mag : -mag;
  }

 private:
  double lambda_nu_;
  double inv_nu_;
  std::gamma_distribution<double> gamma_;
  std::bernoulli_distribution sign_{0.5};
};

std::vector<double> ggd_sample(const GGDParams& p, std::size_t n, std::uint64_t seed);

/// F(x) = Gamma(2/x)^2 / (Gamma(3/x) Gamma(1/x)); the squared first absolute
/// moment over the second moment of a GGD with shape x. Throws
/// std::domain_error for x <= 0.
double mallat_F(double x);

/// Table inversion of mallat_F over x in [0.25, 2.5] (2048 log-spaced nodes,
/// monotone piecewise linear). Out-of-range y clamps to the endpoints.
double mallat_F_inverse(double y);

}  // namespace ggmm
