#pragma once

#include <stdexcept>

namespace ggmm {

// MAP estimate of a clean coefficient t from a noisy one x = t + N(0, sigma^2)
// under a GGD(lambda, nu) prior, i.e. the minimizer of
//   (x - t)^2 / 2 + (gamma / nu) |t|^nu,   gamma = nu sigma^2 lambda_nu^-nu.

/// Closed form used by `shrink` for a given shape.
enum class ShrinkForm { hard_threshold, soft, four_thirds, three_halves, wiener };

/// nu < 1 -> hard_threshold; otherwise the nearest of {1, 4/3, 3/2, 2} with
/// boundaries 7/6, 17/12, 7/4 (ties go to the smaller shape).
ShrinkForm shrink_form(double nu);

/// Noise/prior pair with the derived shrinkage constants.
struct ShrinkContext {
  /// Throws std::invalid_argument for non-positive sigma or lambda, or nu
  /// outside [0.3, 2].
  ShrinkContext(double sigma, double lambda, double nu);

  double sigma;
  double lambda;
  double nu;
  double lambda_nu;
  double gamma;
  /// Threshold below which the estimate is zero; NaN for nu > 1.
  double tau;
  ShrinkForm form;
  /// gamma of the shape that `form` solves exactly (equal to gamma for
  /// nu < 1 and nu in {1, 4/3, 3/2, 2}).
  double form_gamma;
};

/// Fast shrinkage: the hard-threshold approximation for nu < 1, otherwise
/// the exact shrinkage of the nearest shape in {1, 4/3, 3/2, 2}.
double shrink(double x, const ShrinkContext& ctx);

/// Objective (x - t)^2 / 2 + (gamma / nu) |t|^nu.
double shrink_objective(double t, double x, const ShrinkContext& ctx);

class ShrinkageNoConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reference solver: safeguarded Halley for nu > 1, Newton plus a comparison
/// against t = 0 for nu < 1, exact forms for nu in {1, 2}.
double shrink_oracle(double x, const ShrinkContext& ctx);

}  // namespace ggmm
