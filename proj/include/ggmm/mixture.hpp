#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ggmm {

/// gmm, lmm and hlmm pin every shape to 2, 1 and 0.5; ggmm learns shapes.
enum class MixtureMode { ggmm, gmm, lmm, hlmm };

std::string to_string(MixtureMode mode);
/// Throws std::invalid_argument for unknown names.
MixtureMode parse_mixture_mode(const std::string& name);
/// Pinned shape of a fixed-shape mode (2, 1, 0.5); 2 for ggmm initialization.
double pinned_shape(MixtureMode mode);

/// Patches are stored one per column.
using PatchMatrix = Eigen::MatrixXd;

/// Zero-mean mixture of multivariate generalized Gaussians. Component k is
/// separable in the orthonormal basis bases[k]: coordinate j of bases[k]^T z is
/// GGD(scales(k, j), shapes(k, j)).
struct GGMMModel {
  MixtureMode mode = MixtureMode::ggmm;
  std::vector<double> weights;
  std::vector<Eigen::MatrixXd> bases;
  Eigen::MatrixXd scales;
  Eigen::MatrixXd shapes;

  std::size_t K() const { return weights.size(); }
  std::size_t P() const { return static_cast<std::size_t>(scales.cols()); }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// Per-component constants for fast density evaluation.
struct ComponentTerms {
  Eigen::VectorXd log_norm;
  Eigen::VectorXd inv_lambda_nu;
  Eigen::VectorXd nu;
  double log_norm_sum = 0.0;
};

ComponentTerms component_terms(const GGMMModel& model, std::size_t k);

/// Sum of ggd log densities of the whitened coordinates `y = U_k^T z`.
double whitened_log_pdf(const Eigen::Ref<const Eigen::VectorXd>& y, const ComponentTerms& t);

/// Throws std::invalid_argument on dimension mismatch or k out of range.
double component_log_pdf(const Eigen::Ref<const Eigen::VectorXd>& z, const GGMMModel& model,
                         std::size_t k);

/// Mean over patches of log sum_k w_k p_k(z).
double model_log_likelihood(const PatchMatrix& patches, const GGMMModel& model);

/// K x n matrix of posterior component probabilities.
using Responsibilities = Eigen::MatrixXd;

struct EStepResult {
  Responsibilities resp;
  double mean_log_likelihood = 0.0;
};

/// Parallel E-step over fixed-size column chunks; results do not depend on
/// the thread count.
EStepResult e_step(const PatchMatrix& patches, const GGMMModel& model);

/// Responsibility-weighted statistics for one component.
struct ComponentStats {
  double mass = 0.0;
  Eigen::MatrixXd second_moment;
};

/// Weighted second moments per component (parallel, chunked, ordered reduction).
std::vector<ComponentStats> accumulate_second_moments(const PatchMatrix& patches,
                                                      const Responsibilities& resp);

/// Weighted first absolute moments of the whitened coordinates, K x P.
Eigen::MatrixXd accumulate_abs_moments(const PatchMatrix& patches, const Responsibilities& resp,
                                       const std::vector<Eigen::MatrixXd>& bases,
                                       const std::vector<double>& masses);

namespace reference {

// Straightforward single-threaded loops, kept to validate the parallel kernels.
EStepResult e_step(const PatchMatrix& patches, const GGMMModel& model);
std::vector<ComponentStats> accumulate_second_moments(const PatchMatrix& patches,
                                                      const Responsibilities& resp);
Eigen::MatrixXd accumulate_abs_moments(const PatchMatrix& patches, const Responsibilities& resp,
                                       const std::vector<Eigen::MatrixXd>& bases,
                                       const std::vector<double>& masses);

}  // namespace reference

/// Eigendecomposition of a symmetric second moment into an orthonormal basis
/// and standard deviations (decreasing). Eigenvalues are floored at 1e-8 of
/// the largest.
void decompose_covariance(const Eigen::MatrixXd& cov, Eigen::MatrixXd& basis,
                          Eigen::VectorXd& scales);

struct EMOptions {
  std::size_t K = 20;
  MixtureMode mode = MixtureMode::ggmm;
  std::size_t iters = 50;
  std::uint64_t seed = 0;
  std::optional<GGMMModel> init;
  /// Stop after this many consecutive likelihood decreases (0 disables).
  std::size_t max_decreases = 5;
  /// Called after every iteration with (iteration, mean log-likelihood).
  std::function<void(std::size_t, double)> on_iteration;
};

struct EMTrace {
  std::vector<double> log_likelihood;
  std::size_t respawns = 0;
  bool stopped_early = false;
};

/// Modified EM: E-step, weighted covariance eigendecomposition, and (ggmm
/// mode) the moment step nu = clamp(F^-1(chi^2 / lambda^2), 0.3, 2).
/// Throws std::invalid_argument when patches are not centered or too few.
GGMMModel em_fit(const PatchMatrix& patches, const EMOptions& opt, EMTrace* trace = nullptr);

/// Draws n patches; deterministic given the seed.
PatchMatrix sample_model(const GGMMModel& model, std::size_t n, std::uint64_t seed,
                         std::vector<std::size_t>* labels = nullptr);

}  // namespace ggmm
