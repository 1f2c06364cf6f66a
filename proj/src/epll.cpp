#include "ggmm/epll.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

#include "ggmm/special.hpp"

namespace ggmm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kOracleTolerance = 1e-8;

}  // namespace

std::vector<double> DenoiseConfig::betas() const {
  if (!beta_schedule.empty()) return beta_schedule;
  const double s2 = sigma * sigma;
  return {1.0 / s2, 4.0 / s2, 8.0 / s2, 16.0 / s2, 32.0 / s2};
}

void DenoiseConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
  if (!(patch_fraction > 0.0 && patch_fraction <= 1.0))
    throw std::invalid_argument("patch fraction must lie in (0, 1]");
  if (patch_edge == 0) throw std::invalid_argument("patch edge must be positive");
  const auto b = betas();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!(b[i] > 0.0) || !std::isfinite(b[i])) throw std::invalid_argument("beta values must be positive");
    if (i > 0 && !(b[i] > b[i - 1])) throw std::invalid_argument("beta schedule must be increasing");
  }
}

PatchGrid::PatchGrid(std::size_t w, std::size_t h, std::size_t e) : width(w), height(h), edge(e) {
  if (e == 0 || w < e || h < e) throw std::invalid_argument("image is smaller than the patch");
}

PatchSet extract_patches(const ImageBuffer& u, std::span<const std::size_t> indices,
                         std::size_t edge) {
  const PatchGrid grid(u.width, u.height, edge);
  const auto P = static_cast<Eigen::Index>(edge * edge);
  PatchSet out;
  out.patches.resize(P, static_cast<Eigen::Index>(indices.size()));
  out.means.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= grid.count()) throw std::out_of_range("patch index outside the image");
    const std::size_t x0 = grid.x(indices[i]), y0 = grid.y(indices[i]);
    auto col = out.patches.col(static_cast<Eigen::Index>(i));
    Eigen::Index j = 0;
    for (std::size_t dy = 0; dy < edge; ++dy)
      for (std::size_t dx = 0; dx < edge; ++dx) col[j++] = u.at(x0 + dx, y0 + dy);
    const double mean = col.mean();
    col.array() -= mean;
    out.means[i] = mean;
  }
  return out;
}

ComponentSelector::ComponentSelector(const GGMMModel& model, const DiscrepancyLUT& lut,
                                     double sigma_eff, bool exact)
    : model_(&model), sigma_(sigma_eff), exact_(exact) {
  const std::size_t K = model.K();
  const auto P = static_cast<Eigen::Index>(model.P());
  const double log_sigma = std::log(sigma_eff);
  transposed_.resize(K);
  offset_.assign(K, 0.0);
  approx_.assign(K, std::vector<AsymptoticParams>(model.P()));
  quadratic_.assign(K, std::vector<double>(model.P(), 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    transposed_[k] = model.bases[k].transpose();
    double c = -std::log(model.weights[k]);
    for (Eigen::Index j = 0; j < P; ++j) {
      const double lam = model.scales(row, j);
      const double nu = model.shapes(row, j);
      const auto jj = static_cast<std::size_t>(j);
      if (exact) continue;
      if (nu == 2.0) {
        const double var = sigma_eff * sigma_eff + lam * lam;
        quadratic_[k][jj] = 0.5 / var;
        c += 0.5 * (kLogTwoPi + std::log(var));
      } else {
        approx_[k][jj] = lut.lookup(nu, lam / sigma_eff);
        c += log_sigma + approx_[k][jj].gamma0;
      }
    }
    offset_[k] = c;
  }
}

double ComponentSelector::cost(const Eigen::Ref<const Eigen::VectorXd>& y, std::size_t k) const {
  double c = offset_[k];
  const auto row = static_cast<Eigen::Index>(k);
  if (exact_) {
    for (Eigen::Index j = 0; j < y.size(); ++j)
      c += discrepancy_oracle(y[j], sigma_, model_->scales(row, j), model_->shapes(row, j),
                              kOracleTolerance);
    return c;
  }
  const double inv_sigma = 1.0 / sigma_;
  const auto& quad = quadratic_[k];
  const auto& params = approx_[k];
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const double v = y[j];
    if (quad[jj] > 0.0) {
      c += quad[jj] * v * v;
    } else if (v != 0.0) {
      c += std::exp(log_discrepancy_approx(std::abs(v) * inv_sigma, params[jj]));
    }
  }
  return c;
}

std::size_t ComponentSelector::select(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd y;
  for (std::size_t k = 0; k < transposed_.size(); ++k) {
    y.noalias() = transposed_[k] * z;
    const double c = cost(y, k);
    if (c < best_cost) {
      best_cost = c;
      best = k;
    }
  }
  return best;
}

std::size_t select_component(const Eigen::Ref<const Eigen::VectorXd>& z_noisy, double sigma_eff,
                             const GGMMModel& model, const DiscrepancyLUT& lut) {
  return ComponentSelector(model, lut, sigma_eff, false).select(z_noisy);
}

namespace {

std::vector<ShrinkContext> component_contexts(const GGMMModel& model, std::size_t k, double sigma_eff) {
  const auto row = static_cast<Eigen::Index>(k);
  std::vector<ShrinkContext> out;
  out.reserve(model.P());
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(model.P()); ++j)
    out.emplace_back(sigma_eff, model.scales(row, j), model.shapes(row, j));
  return out;
}

Eigen::VectorXd shrink_patch(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::MatrixXd& U,
                             const std::vector<ShrinkContext>& ctx, bool exact) {
  Eigen::VectorXd x = U.transpose() * z;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const auto& c = ctx[static_cast<std::size_t>(j)];
    x[j] = exact ? shrink_oracle(x[j], c) : shrink(x[j], c);
  }
  return U * x;
}

}  // namespace

PatchShrinker::PatchShrinker(const GGMMModel& model, double sigma_eff, bool exact)
    : model_(&model), exact_(exact) {
  for (std::size_t k = 0; k < model.K(); ++k) contexts_.push_back(component_contexts(model, k, sigma_eff));
}

Eigen::VectorXd PatchShrinker::operator()(const Eigen::Ref<const Eigen::VectorXd>& z, std::size_t k) const {
  if (k >= contexts_.size()) throw std::invalid_argument("component index out of range");
  return shrink_patch(z, model_->bases[k], contexts_[k], exact_);
}

Eigen::VectorXd denoise_patch(const Eigen::Ref<const Eigen::VectorXd>& z_noisy, std::size_t k,
                              double sigma_eff, const GGMMModel& model, bool exact) {
  if (k >= model.K()) throw std::invalid_argument("component index out of range");
  return shrink_patch(z_noisy, model.bases[k], component_contexts(model, k, sigma_eff), exact);
}

ImageBuffer image_update(const ImageBuffer& v, const PatchMatrix& estimates,
                         std::span<const std::size_t> indices, double beta, double sigma,
                         std::size_t edge) {
  const PatchGrid grid(v.width, v.height, edge);
  if (static_cast<std::size_t>(estimates.cols()) != indices.size() ||
      static_cast<std::size_t>(estimates.rows()) != edge * edge)
    throw std::invalid_argument("patch estimates do not match the indices");
  std::vector<double> sum(v.size(), 0.0);
  std::vector<double> count(v.size(), 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= grid.count()) throw std::out_of_range("patch index outside the image");
    const std::size_t x0 = grid.x(indices[i]), y0 = grid.y(indices[i]);
    const auto col = estimates.col(static_cast<Eigen::Index>(i));
    Eigen::Index j = 0;
    for (std::size_t dy = 0; dy < edge; ++dy)
      for (std::size_t dx = 0; dx < edge; ++dx) {
        const std::size_t p = (y0 + dy) * v.width + x0 + dx;
        sum[p] += col[j++];
        count[p] += 1.0;
      }
  }
  const double c = beta * sigma * sigma / static_cast<double>(edge * edge);
  ImageBuffer out = v;
  for (std::size_t p = 0; p < v.size(); ++p)
    if (count[p] > 0.0) out.pixels[p] = (v.pixels[p] + c * sum[p]) / (1.0 + c * count[p]);
  return out;
}

double DenoiseReport::discrepancy_seconds() const {
  double s = 0.0;
  for (const auto& st : stages) s += st.discrepancy_seconds;
  return s;
}

double DenoiseReport::shrinkage_seconds() const {
  double s = 0.0;
  for (const auto& st : stages) s += st.shrinkage_seconds;
  return s;
}

double DenoiseReport::patch_seconds() const {
  double s = 0.0;
  for (const auto& st : stages) s += st.patch_seconds;
  return s;
}

std::vector<std::size_t> draw_patch_subset(const PatchGrid& grid, double fraction,
                                           std::uint64_t seed, std::size_t stage) {
  const std::size_t total = grid.count();
  const auto m = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total) + 0.5)), 1, total);
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage)};
  std::mt19937_64 eng(seq);
  std::vector<std::size_t> picked;
  picked.reserve(m);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), m, eng);
  return picked;
}

namespace {

double stage_energy(const ImageBuffer& u, const ImageBuffer& v, const PatchMatrix& z_hat,
                    const std::vector<std::size_t>& labels, std::span<const std::size_t> indices,
                    const GGMMModel& model, double beta, double sigma, std::size_t edge) {
  const double P = static_cast<double>(edge * edge);
  double data = 0.0;
  for (std::size_t p = 0; p < u.size(); ++p) {
    const double d = u.pixels[p] - v.pixels[p];
    data += d * d;
  }
  const PatchSet cur = extract_patches(u, indices, edge);
  double coupling = 0.0, prior = 0.0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    Eigen::VectorXd diff = cur.patches.col(col) - z_hat.col(col);
    diff.array() += cur.means[i];
    const double mean_hat = z_hat.col(col).mean();
    coupling += diff.squaredNorm();
    const Eigen::VectorXd centered = z_hat.col(col).array() - mean_hat;
    prior -= std::log(model.weights[labels[i]]) + component_log_pdf(centered, model, labels[i]);
  }
  return P / (2.0 * sigma * sigma) * data + 0.5 * beta * coupling + prior;
}

}  // namespace

ImageBuffer epll_denoise(const ImageBuffer& v, const GGMMModel& model, const DiscrepancyLUT& lut,
                         const DenoiseConfig& cfg, DenoiseReport* report) {
  cfg.validate();
  const std::size_t edge = cfg.patch_edge;
  if (model.P() != edge * edge) throw std::invalid_argument("model patch size does not match the config");
  const PatchGrid grid(v.width, v.height, edge);
  const auto betas = cfg.betas();
  ImageBuffer u = v;
  if (report) report->stages.clear();

  for (std::size_t s = 0; s < betas.size(); ++s) {
    StageReport st;
    st.beta = betas[s];
    st.sigma_eff = 1.0 / std::sqrt(betas[s]);

    auto t0 = Clock::now();
    const auto indices = draw_patch_subset(grid, cfg.patch_fraction, cfg.seed, s);
    PatchSet set = extract_patches(u, indices, edge);
    st.patches = indices.size();
    st.patch_seconds += seconds_since(t0);

    const auto n = static_cast<Eigen::Index>(indices.size());
    std::vector<std::size_t> labels(indices.size());
    t0 = Clock::now();
    const ComponentSelector selector(model, lut, st.sigma_eff, cfg.use_exact_discrepancy);
#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index i = 0; i < n; ++i)
      labels[static_cast<std::size_t>(i)] = selector.select(set.patches.col(i));
    st.discrepancy_seconds = seconds_since(t0);

    PatchMatrix estimates(set.patches.rows(), n);
    t0 = Clock::now();
    const PatchShrinker shrinker(model, st.sigma_eff, cfg.use_exact_shrinkage);
#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index i = 0; i < n; ++i)
      estimates.col(i) = shrinker(set.patches.col(i), labels[static_cast<std::size_t>(i)]);
    st.shrinkage_seconds = seconds_since(t0);

    t0 = Clock::now();
    for (Eigen::Index i = 0; i < n; ++i) estimates.col(i).array() += set.means[static_cast<std::size_t>(i)];
    // The visited subset stands in for all patches: its coupling is scaled
    // by 1 / fraction, and pixels it misses keep the previous estimate.
    ImageBuffer next = image_update(v, estimates, indices, betas[s] / cfg.patch_fraction, cfg.sigma, edge);
    std::vector<char> covered(v.size(), 0);
    for (std::size_t i : indices)
      for (std::size_t dy = 0; dy < edge; ++dy)
        std::fill_n(covered.begin() + static_cast<std::ptrdiff_t>((grid.y(i) + dy) * v.width + grid.x(i)), edge, 1);
    for (std::size_t p = 0; p < v.size(); ++p)
      if (!covered[p]) next.pixels[p] = u.pixels[p];
    u = std::move(next);
    st.patch_seconds += seconds_since(t0);

    if (report) {
      st.energy = stage_energy(u, v, estimates, labels, indices, model, betas[s] / cfg.patch_fraction, cfg.sigma, edge);
      report->stages.push_back(st);
    }
  }
  for (double& p : u.pixels) p = std::clamp(p, 0.0, 255.0);
  return u;
}

}  // namespace ggmm
