#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ggmm/discrepancy.hpp"
#include "ggmm/image.hpp"
#include "ggmm/mixture.hpp"
#include "ggmm/shrinkage.hpp"

namespace ggmm {

struct DenoiseConfig {
  /// Noise standard deviation in intensity units.
  double sigma = 20.0;
  /// Coupling weights; empty means {1, 4, 8, 16, 32} / sigma^2.
  std::vector<double> beta_schedule;
  std::size_t patch_edge = 8;
  /// Fraction of all patch positions visited per stage.
  double patch_fraction = 0.03;
  std::uint64_t seed = 0;
  /// Quadrature discrepancy instead of the lookup-table approximation.
  bool use_exact_discrepancy = false;
  /// Root-finding shrinkage instead of the closed forms.
  bool use_exact_shrinkage = false;

  std::vector<double> betas() const;
  /// Throws std::invalid_argument on a non-increasing schedule, a fraction
  /// outside (0, 1] or a non-positive sigma.
  void validate() const;
};

/// Interior patch positions of a width x height image, stride 1, row-major.
struct PatchGrid {
  std::size_t width = 0, height = 0, edge = 8;
  PatchGrid(std::size_t w, std::size_t h, std::size_t e);
  std::size_t cols() const { return width - edge + 1; }
  std::size_t rows() const { return height - edge + 1; }
  std::size_t count() const { return cols() * rows(); }
  std::size_t x(std::size_t index) const { return index % cols(); }
  std::size_t y(std::size_t index) const { return index / cols(); }
};

struct PatchSet {
  PatchMatrix patches;
  std::vector<double> means;
};

/// Vectorized (row-major within the window), mean-removed patches. Throws
/// std::out_of_range for an index outside the grid.
PatchSet extract_patches(const ImageBuffer& u, std::span<const std::size_t> indices,
                         std::size_t edge = 8);

/// Per-stage precomputed terms for choosing a component from a noisy patch.
class ComponentSelector {
 public:
  ComponentSelector(const GGMMModel& model, const DiscrepancyLUT& lut, double sigma_eff,
                    bool exact);
  /// argmin_k -log w_k + sum_j f((U_k^T z)_j); ties go to the smallest k.
  std::size_t select(const Eigen::Ref<const Eigen::VectorXd>& z) const;
  /// Cost of component k for whitened coordinates y.
  double cost(const Eigen::Ref<const Eigen::VectorXd>& y, std::size_t k) const;

 private:
  const GGMMModel* model_;
  double sigma_;
  bool exact_;
  std::vector<Eigen::MatrixXd> transposed_;
  std::vector<double> offset_;
  std::vector<std::vector<AsymptoticParams>> approx_;
  // Closed-form Gaussian coefficient 1/(2(sigma^2 + lambda^2)), or 0 when
  // the component coordinate is not Gaussian.
  std::vector<std::vector<double>> quadratic_;
};

std::size_t select_component(const Eigen::Ref<const Eigen::VectorXd>& z_noisy, double sigma_eff,
                             const GGMMModel& model, const DiscrepancyLUT& lut);

/// Per-stage shrinkage constants for every component coordinate.
class PatchShrinker {
 public:
  PatchShrinker(const GGMMModel& model, double sigma_eff, bool exact);
  /// U_k shrink(U_k^T z).
  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& z, std::size_t k) const;

 private:
  const GGMMModel* model_;
  bool exact_;
  std::vector<std::vector<ShrinkContext>> contexts_;
};

/// U_k shrink(U_k^T z) with per-coordinate GGD shrinkage at noise sigma_eff.
Eigen::VectorXd denoise_patch(const Eigen::Ref<const Eigen::VectorXd>& z_noisy, std::size_t k,
                              double sigma_eff, const GGMMModel& model, bool exact = false);

/// (v + c sum P_i^T z_i) / (1 + c count) with c = beta sigma^2 / P, where
/// `estimates` already include the patch means. Uncovered pixels keep v.
ImageBuffer image_update(const ImageBuffer& v, const PatchMatrix& estimates,
                         std::span<const std::size_t> indices, double beta, double sigma,
                         std::size_t edge = 8);

struct StageReport {
  double beta = 0.0;
  double sigma_eff = 0.0;
  std::size_t patches = 0;
  double discrepancy_seconds = 0.0;
  double shrinkage_seconds = 0.0;
  double patch_seconds = 0.0;
  /// Half-quadratic objective on the visited patches after the update, with
  /// the subset coupling beta / patch_fraction.
  double energy = 0.0;
};

struct DenoiseReport {
  std::vector<StageReport> stages;
  double discrepancy_seconds() const;
  double shrinkage_seconds() const;
  double patch_seconds() const;
};

/// Uniform subset of floor(fraction * count + 0.5) (at least 1) patch
/// indices, sorted, drawn without replacement.
std::vector<std::size_t> draw_patch_subset(const PatchGrid& grid, double fraction,
                                           std::uint64_t seed, std::size_t stage);

/// Half-quadratic-splitting EPLL over a fresh random patch subset per stage.
/// The image update weighs the subset by beta / patch_fraction and leaves
/// pixels outside it at the previous estimate. Returns the estimate clipped
/// to [0, 255]. Throws std::invalid_argument if the image is smaller than a
/// patch.
ImageBuffer epll_denoise(const ImageBuffer& v, const GGMMModel& model, const DiscrepancyLUT& lut,
                         const DenoiseConfig& cfg, DenoiseReport* report = nullptr);

}  // namespace ggmm
