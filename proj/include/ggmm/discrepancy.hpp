#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ggmm {

// The discrepancy f_{sigma,lambda}^nu(x) is the negative log density, at x,
// of a GGD(lambda, nu) variable plus independent N(0, sigma^2) noise. It
// satisfies f_{sigma,lambda}(x) = log(sigma) + f_{1,lambda/sigma}(x/sigma), and
// with gamma0 = f_{1,lambda}(0) the log-discrepancy
//   phi(x) = log(f_{1,lambda}(x) - gamma0)
// is log-linear with slope 2 near 0 and slope nu near infinity.

/// Parameters of the softplus-rectified two-asymptote model of phi.
struct AsymptoticParams {
  double gamma0 = 0.0;
  double alpha1 = 2.0;
  double beta1 = 0.0;
  double alpha2 = 2.0;
  double beta2 = 0.0;
  double h = 1.0;
};

double discrepancy_exact_nu2(double x, double sigma, double lambda);
double discrepancy_exact_nu1(double x, double sigma, double lambda);

/// Ground truth by adaptive quadrature of the convolution integral.
/// `rel_tol` bounds the relative error of the integral. Throws
/// QuadratureError when the tolerance cannot be met.
double discrepancy_oracle(double x, double sigma, double lambda, double nu,
                          double rel_tol = 1e-10);

/// phi_lambda^nu(x) at unit noise, computed so that it stays accurate when
/// f(x) - gamma0 is many orders of magnitude below gamma0.
double log_discrepancy_oracle(double x, double lambda, double nu);

/// 1 - M2, where M2 is the second moment of the density proportional to
/// exp(-t^2/2 - (|t|/lambda_nu)^nu). Evaluated as nu * E[(|t|/lambda_nu)^nu]
/// (integration by parts) so that no cancellation occurs.
double second_moment_gap(double lambda, double nu);

/// Closed-form left-asymptote intercept for nu = 1.
double beta1_closed_form_nu1(double lambda);

double softplus(double x, double h);

/// phi-hat(u) = alpha1 log u + beta1 - softplus((alpha1 - alpha2) log u + beta1 - beta2, h).
double log_discrepancy_approx(double u, const AsymptoticParams& a);

/// Evaluation grid of the softplus fit: 201 log-spaced points over [1e-3, 1e3].
std::vector<double> h_fit_grid();

/// Sum of squared phi-hat residuals on `xs` against the oracle values `phis`
/// (non-finite oracle values are skipped).
double softplus_fit_residual(double h, std::span<const double> xs,
                             std::span<const double> phis, const AsymptoticParams& a);

struct HFit {
  double h = 1.0;
  double residual = 0.0;
  bool degenerate = false;
};

inline constexpr double kMinSoftplusSharpness = 1e-8;
inline constexpr double kMaxSoftplusSharpness = 1e3;

/// Least-squares h by golden-section search on log h. Falls back to h = 1 and
/// flags `degenerate` when more than 5% of the oracle values are non-finite.
HFit fit_h(double lambda, double nu, const AsymptoticParams& asym);

/// gamma0, beta1 (quadrature), beta2 (closed form) and the fitted h.
/// `lambda` is the prior-to-noise ratio (unit noise).
AsymptoticParams compute_asymptotics(double lambda, double nu);

/// Four 100x100 tables over a regular nu grid on [0.3, 2] and a log lambda
/// grid on [1e-3, 1e3]. Row index is nu.
struct DiscrepancyLUT {
  static constexpr std::size_t kNuCount = 100;
  static constexpr std::size_t kLambdaCount = 100;
  static constexpr double kNuMin = 0.3;
  static constexpr double kNuMax = 2.0;
  static constexpr double kLambdaMin = 1e-3;
  static constexpr double kLambdaMax = 1e3;

  std::vector<double> gamma0, beta1, beta2, h;

  DiscrepancyLUT();

  static double nu_at(std::size_t i);
  static double lambda_at(std::size_t j);
  static std::size_t index(std::size_t i, std::size_t j) { return i * kLambdaCount + j; }

  /// Bilinear interpolation in (nu, log lambda); out-of-range inputs clamp
  /// to the grid boundary. alpha2 is set to the requested nu.
  AsymptoticParams lookup(double nu, double lambda) const;

  bool operator==(const DiscrepancyLUT&) const = default;
};

/// f-hat via the lookup tables. Exactly log(sigma) + gamma0 at x = 0.
double approx_discrepancy(double x, double sigma, double lambda, double nu,
                          const DiscrepancyLUT& lut);

/// Same as approx_discrepancy at unit noise with parameters already looked up.
double approx_discrepancy_unit(double u, const AsymptoticParams& a);

class LutBuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fills all tables by running compute_asymptotics at every grid node
/// (parallel over nodes; output independent of the schedule). `progress` is
/// called with the number of finished nodes.
DiscrepancyLUT build_lut(const std::function<void(std::size_t)>& progress = {});

/// One node of build_lut, for spot checks.
AsymptoticParams build_lut_node(std::size_t nu_index, std::size_t lambda_index);

}  // namespace ggmm
