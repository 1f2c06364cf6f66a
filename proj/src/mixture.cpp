#include "ggmm/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ggmm/ggd.hpp"

namespace ggmm {

std::string to_string(MixtureMode mode) {
  switch (mode) {
    case MixtureMode::ggmm:
      return "ggmm";
    case MixtureMode::gmm:
      return "gmm";
    case MixtureMode::lmm:
      return "lmm";
    case MixtureMode::hlmm:
      return "hlmm";
  }
  return "ggmm";
}

MixtureMode parse_mixture_mode(const std::string& name) {
  if (name == "ggmm") return MixtureMode::ggmm;
  if (name == "gmm") return MixtureMode::gmm;
  if (name == "lmm") return MixtureMode::lmm;
  if (name == "hlmm") return MixtureMode::hlmm;
  throw std::invalid_argument("unknown mixture mode '" + name + "'");
}

double pinned_shape(MixtureMode mode) {
  switch (mode) {
    case MixtureMode::lmm:
      return 1.0;
    case MixtureMode::hlmm:
      return 0.5;
    default:
      return 2.0;
  }
}

void GGMMModel::validate() const {
  const std::size_t k_count = K();
  const auto p = static_cast<Eigen::Index>(P());
  if (k_count == 0) throw std::invalid_argument("model has no components");
  if (bases.size() != k_count || static_cast<std::size_t>(scales.rows()) != k_count ||
      static_cast<std::size_t>(shapes.rows()) != k_count || shapes.cols() != p || p == 0)
    throw std::invalid_argument("model arrays have inconsistent sizes");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
  for (std::size_t k = 0; k < k_count; ++k) {
    const Eigen::MatrixXd& U = bases[k];
    if (U.rows() != p || U.cols() != p) throw std::invalid_argument("basis has wrong shape");
    const Eigen::MatrixXd gram = U.transpose() * U - Eigen::MatrixXd::Identity(p, p);
    if (!(gram.cwiseAbs().maxCoeff() <= 1e-8))
      throw std::invalid_argument("basis " + std::to_string(k) + " is not orthonormal");
    for (Eigen::Index j = 0; j < p; ++j) {
      const double s = scales(static_cast<Eigen::Index>(k), j);
      const double v = shapes(static_cast<Eigen::Index>(k), j);
      if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("scales must be positive");
      if (!(v >= kMinShape && v <= kMaxShape))
        throw std::invalid_argument("shapes must lie in [0.3, 2]");
    }
  }
}

ComponentTerms component_terms(const GGMMModel& model, std::size_t k) {
  const auto p = static_cast<Eigen::Index>(model.P());
  const auto row = static_cast<Eigen::Index>(k);
  ComponentTerms t;
  t.log_norm.resize(p);
  t.inv_lambda_nu.resize(p);
  t.nu.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const GGDParams g(model.scales(row, j), model.shapes(row, j));
    t.log_norm[j] = g.log_norm();
    t.inv_lambda_nu[j] = 1.0 / g.lambda_nu();
    t.nu[j] = g.nu();
  }
  t.log_norm_sum = t.log_norm.sum();
  return t;
}

namespace {

inline double penalty(double a, double nu) {
  if (nu == 2.0) return a * a;
  if (nu == 1.0) return a;
  if (nu == 0.5) return std::sqrt(a);
  return a > 0.0 ? std::exp(nu * std::log(a)) : 0.0;
}

constexpr Eigen::Index kChunk = 4096;

// Subnormal responsibilities carry no mass but slow every later product.
template <class V>
void flush_subnormal(V&& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] < std::numeric_limits<double>::min()) v[i] = 0.0;
}

Eigen::Index chunk_count(Eigen::Index n) { return (n + kChunk - 1) / kChunk; }

}  // namespace

double whitened_log_pdf(const Eigen::Ref<const Eigen::VectorXd>& y, const ComponentTerms& t) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) s += penalty(std::abs(y[j]) * t.inv_lambda_nu[j], t.nu[j]);
  return t.log_norm_sum - s;
}

double component_log_pdf(const Eigen::Ref<const Eigen::VectorXd>& z, const GGMMModel& model,
                         std::size_t k) {
  if (k >= model.K()) throw std::invalid_argument("component index out of range");
  if (static_cast<std::size_t>(z.size()) != model.P())
    throw std::invalid_argument("patch length does not match the model");
  const Eigen::VectorXd y = model.bases[k].transpose() * z;
  return whitened_log_pdf(y, component_terms(model, k));
}

EStepResult e_step(const PatchMatrix& patches, const GGMMModel& model) {
  if (static_cast<std::size_t>(patches.rows()) != model.P())
    throw std::invalid_argument("patch length does not match the model");
  const std::size_t K = model.K();
  const Eigen::Index n = patches.cols();
  std::vector<ComponentTerms> terms(K);
  for (std::size_t k = 0; k < K; ++k) terms[k] = component_terms(model, k);
  std::vector<double> log_w(K);
  for (std::size_t k = 0; k < K; ++k) log_w[k] = std::log(model.weights[k]);

  EStepResult out;
  out.resp.resize(static_cast<Eigen::Index>(K), n);
  const Eigen::Index chunks = chunk_count(n);
  std::vector<double> chunk_ll(static_cast<std::size_t>(chunks), 0.0);

#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunk;
    const Eigen::Index len = std::min(kChunk, n - begin);
    const auto block = patches.middleCols(begin, len);
    auto logp = out.resp.middleCols(begin, len);
    Eigen::MatrixXd y;
    for (std::size_t k = 0; k < K; ++k) {
      y.noalias() = model.bases[k].transpose() * block;
      for (Eigen::Index i = 0; i < len; ++i)
        logp(static_cast<Eigen::Index>(k), i) = log_w[k] + whitened_log_pdf(y.col(i), terms[k]);
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < len; ++i) {
      auto col = logp.col(i);
      const double m = col.maxCoeff();
      const double s = (col.array() - m).exp().sum();
      const double lse = m + std::log(s);
      col = (col.array() - lse).exp();
      flush_subnormal(col);
      ll += lse;
    }
    chunk_ll[static_cast<std::size_t>(c)] = ll;
  }
  double total = 0.0;
  for (double v : chunk_ll) total += v;
  out.mean_log_likelihood = total / static_cast<double>(n);
  return out;
}

double model_log_likelihood(const PatchMatrix& patches, const GGMMModel& model) {
  return e_step(patches, model).mean_log_likelihood;
}

std::vector<ComponentStats> accumulate_second_moments(const PatchMatrix& patches,
                                                      const Responsibilities& resp) {
  const auto K = static_cast<std::size_t>(resp.rows());
  const Eigen::Index P = patches.rows(), n = patches.cols();
  const Eigen::Index chunks = chunk_count(n);
  std::vector<ComponentStats> stats(K);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < K; ++k) {
    ComponentStats& s = stats[k];
    s.second_moment = Eigen::MatrixXd::Zero(P, P);
    Eigen::MatrixXd weighted;
    for (Eigen::Index c = 0; c < chunks; ++c) {
      const Eigen::Index begin = c * kChunk;
      const Eigen::Index len = std::min(kChunk, n - begin);
      const auto block = patches.middleCols(begin, len);
      const auto r = resp.row(static_cast<Eigen::Index>(k)).segment(begin, len);
      weighted = block * r.asDiagonal();
      s.second_moment.noalias() += weighted * block.transpose();
      s.mass += r.sum();
    }
  }
  return stats;
}

Eigen::MatrixXd accumulate_abs_moments(const PatchMatrix& patches, const Responsibilities& resp,
                                       const std::vector<Eigen::MatrixXd>& bases,
                                       const std::vector<double>& masses) {
  const auto K = static_cast<std::size_t>(resp.rows());
  const Eigen::Index P = patches.rows(), n = patches.cols();
  const Eigen::Index chunks = chunk_count(n);
  Eigen::MatrixXd chi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), P);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < K; ++k) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(P);
    Eigen::MatrixXd y;
    for (Eigen::Index c = 0; c < chunks; ++c) {
      const Eigen::Index begin = c * kChunk;
      const Eigen::Index len = std::min(kChunk, n - begin);
      y.noalias() = bases[k].transpose() * patches.middleCols(begin, len);
      acc.noalias() += y.cwiseAbs() * resp.row(static_cast<Eigen::Index>(k)).segment(begin, len).transpose();
    }
    chi.row(static_cast<Eigen::Index>(k)) = acc.transpose() / masses[k];
  }
  return chi;
}

namespace reference {

EStepResult e_step(const PatchMatrix& patches, const GGMMModel& model) {
  const std::size_t K = model.K();
  const std::size_t P = model.P();
  const Eigen::Index n = patches.cols();
  std::vector<std::vector<GGDParams>> params(K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < P; ++j)
      params[k].emplace_back(model.scales(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)),
                             model.shapes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
  EStepResult out;
  out.resp.resize(static_cast<Eigen::Index>(K), n);
  std::vector<double> logp(K);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = std::log(model.weights[k]);
      for (std::size_t j = 0; j < P; ++j) {
        double y = 0.0;
        for (std::size_t r = 0; r < P; ++r)
          y += model.bases[k](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) *
               patches(static_cast<Eigen::Index>(r), i);
        s += ggd_log_pdf(y, params[k][j]);
      }
      logp[k] = s;
    }
    const double m = *std::max_element(logp.begin(), logp.end());
    double sum = 0.0;
    for (double v : logp) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    for (std::size_t k = 0; k < K; ++k) {
      const double r = std::exp(logp[k] - lse);
      out.resp(static_cast<Eigen::Index>(k), i) = r < std::numeric_limits<double>::min() ? 0.0 : r;
    }
    total += lse;
  }
  out.mean_log_likelihood = total / static_cast<double>(n);
  return out;
}

std::vector<ComponentStats> accumulate_second_moments(const PatchMatrix& patches,
                                                      const Responsibilities& resp) {
  const auto K = static_cast<std::size_t>(resp.rows());
  const Eigen::Index P = patches.rows(), n = patches.cols();
  std::vector<ComponentStats> stats(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& s = stats[k];
    s.second_moment = Eigen::MatrixXd::Zero(P, P);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = resp(static_cast<Eigen::Index>(k), i);
      s.mass += r;
      for (Eigen::Index a = 0; a < P; ++a)
        for (Eigen::Index b = 0; b < P; ++b) s.second_moment(a, b) += r * patches(a, i) * patches(b, i);
    }
  }
  return stats;
}

Eigen::MatrixXd accumulate_abs_moments(const PatchMatrix& patches, const Responsibilities& resp,
                                       const std::vector<Eigen::MatrixXd>& bases,
                                       const std::vector<double>& masses) {
  const auto K = static_cast<std::size_t>(resp.rows());
  const Eigen::Index P = patches.rows(), n = patches.cols();
  Eigen::MatrixXd chi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), P);
  for (std::size_t k = 0; k < K; ++k)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = resp(static_cast<Eigen::Index>(k), i);
      for (Eigen::Index j = 0; j < P; ++j) {
        double y = 0.0;
        for (Eigen::Index a = 0; a < P; ++a) y += bases[k](a, j) * patches(a, i);
        chi(static_cast<Eigen::Index>(k), j) += r * std::abs(y);
      }
    }
  for (std::size_t k = 0; k < K; ++k) chi.row(static_cast<Eigen::Index>(k)) /= masses[k];
  return chi;
}

}  // namespace reference

void decompose_covariance(const Eigen::MatrixXd& cov, Eigen::MatrixXd& basis,
                          Eigen::VectorXd& scales) {
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Eigen::Index p = sym.rows();
  basis = eig.eigenvectors().rowwise().reverse();
  Eigen::VectorXd values = eig.eigenvalues().reverse();
  const double floor = std::max(values[0], 0.0) * 1e-8;
  scales.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double v = std::max(values[j], floor);
    scales[j] = v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::min();
  }
}

namespace {

void check_centered(const PatchMatrix& z) {
  const double range = z.maxCoeff() - z.minCoeff();
  const Eigen::VectorXd means = z.colwise().mean().transpose();
  if (means.size() > 0 && means.cwiseAbs().maxCoeff() > 1e-6 * range)
    throw std::invalid_argument("training patches must be mean-subtracted");
}

// Hard assignment to the most collinear of K randomly drawn seed patches.
Responsibilities cosine_assignment(const PatchMatrix& z, std::size_t K, std::uint64_t seed) {
  const Eigen::Index n = z.cols();
  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  std::vector<Eigen::Index> picks;
  std::mt19937_64 eng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picks), K, eng);
  Eigen::MatrixXd seeds(z.rows(), static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const auto col = z.col(picks[k]);
    const double norm = col.norm();
    seeds.col(static_cast<Eigen::Index>(k)) = norm > 0.0 ? Eigen::VectorXd(col / norm) : Eigen::VectorXd(col);
  }
  Responsibilities resp = Responsibilities::Zero(static_cast<Eigen::Index>(K), n);
  const Eigen::Index chunks = chunk_count(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunk;
    const Eigen::Index len = std::min(kChunk, n - begin);
    const Eigen::MatrixXd dots = (seeds.transpose() * z.middleCols(begin, len)).cwiseAbs();
    for (Eigen::Index i = 0; i < len; ++i) {
      Eigen::Index best = 0;
      dots.col(i).maxCoeff(&best);
      resp(best, begin + i) = 1.0;
    }
  }
  return resp;
}

struct Respawner {
  Eigen::MatrixXd cov;
  explicit Respawner(const PatchMatrix& z) {
    Eigen::Index top = 0;
    z.colwise().squaredNorm().maxCoeff(&top);
    const Eigen::VectorXd v = z.col(top);
    const double floor = 0.1 * (z.squaredNorm() / static_cast<double>(z.size()));
    cov = v * v.transpose() + floor * Eigen::MatrixXd::Identity(z.rows(), z.rows());
  }
};

// M-step and moment step from responsibilities. Components with negligible
// mass are respawned from the highest-energy sample.
GGMMModel maximize(const PatchMatrix& z, const Responsibilities& resp, MixtureMode mode,
                   std::size_t& respawns) {
  const auto K = static_cast<std::size_t>(resp.rows());
  const Eigen::Index P = z.rows();
  const double n = static_cast<double>(z.cols());
  const auto stats = accumulate_second_moments(z, resp);
  GGMMModel m;
  m.mode = mode;
  m.weights.resize(K);
  m.bases.resize(K);
  m.scales.resize(static_cast<Eigen::Index>(K), P);
  m.shapes = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(K), P, pinned_shape(mode));
  std::vector<double> masses(K);
  std::vector<bool> live(K, true);
  std::optional<Respawner> spawn;
  for (std::size_t k = 0; k < K; ++k) {
    Eigen::VectorXd s;
    if (stats[k].mass < 1e-8 * n) {
      if (!spawn) spawn.emplace(z);
      decompose_covariance(spawn->cov, m.bases[k], s);
      masses[k] = n / static_cast<double>(K);
      live[k] = false;
      ++respawns;
    } else {
      decompose_covariance(stats[k].second_moment / stats[k].mass, m.bases[k], s);
      masses[k] = stats[k].mass;
    }
    m.scales.row(static_cast<Eigen::Index>(k)) = s.transpose();
  }
  const double total = std::accumulate(masses.begin(), masses.end(), 0.0);
  for (std::size_t k = 0; k < K; ++k) m.weights[k] = masses[k] / total;
  const double wsum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
  for (double& w : m.weights) w /= wsum;

  if (mode == MixtureMode::ggmm) {
    std::vector<double> live_mass(K);
    for (std::size_t k = 0; k < K; ++k) live_mass[k] = live[k] ? stats[k].mass : 1.0;
    const Eigen::MatrixXd chi = accumulate_abs_moments(z, resp, m.bases, live_mass);
    for (std::size_t k = 0; k < K; ++k) {
      if (!live[k]) continue;
      const auto row = static_cast<Eigen::Index>(k);
      for (Eigen::Index j = 0; j < P; ++j) {
        const double lam = m.scales(row, j);
        const double ratio = chi(row, j) * chi(row, j) / (lam * lam);
        m.shapes(row, j) = std::clamp(mallat_F_inverse(ratio), kMinShape, kMaxShape);
      }
    }
  }
  return m;
}

}  // namespace

GGMMModel em_fit(const PatchMatrix& patches, const EMOptions& opt, EMTrace* trace) {
  const Eigen::Index n = patches.cols();
  if (patches.rows() == 0 || n == 0) throw std::invalid_argument("no training patches");
  check_centered(patches);
  EMTrace local;
  EMTrace& tr = trace ? *trace : local;
  tr = EMTrace{};

  GGMMModel model;
  if (opt.init) {
    model = *opt.init;
    model.validate();
    if (static_cast<Eigen::Index>(model.P()) != patches.rows())
      throw std::invalid_argument("initial model patch size does not match the data");
    model.mode = opt.mode;
    if (opt.mode != MixtureMode::ggmm) model.shapes.setConstant(pinned_shape(opt.mode));
  } else {
    if (opt.K == 0) throw std::invalid_argument("K must be positive");
    if (static_cast<Eigen::Index>(opt.K) > n) throw std::invalid_argument("fewer patches than components");
    const Responsibilities resp = cosine_assignment(patches, opt.K, opt.seed);
    model = maximize(patches, resp, opt.mode == MixtureMode::ggmm ? MixtureMode::gmm : opt.mode,
                     tr.respawns);
    model.mode = opt.mode;
  }

  std::size_t decreases = 0;
  for (std::size_t it = 0; it < opt.iters; ++it) {
    const EStepResult e = e_step(patches, model);
    if (!tr.log_likelihood.empty() && e.mean_log_likelihood < tr.log_likelihood.back())
      ++decreases;
    else
      decreases = 0;
    tr.log_likelihood.push_back(e.mean_log_likelihood);
    if (opt.on_iteration) opt.on_iteration(it, e.mean_log_likelihood);
    if (opt.max_decreases > 0 && decreases >= opt.max_decreases) {
      tr.stopped_early = true;
      break;
    }
    model = maximize(patches, e.resp, opt.mode, tr.respawns);
  }
  return model;
}

PatchMatrix sample_model(const GGMMModel& model, std::size_t n, std::uint64_t seed,
                         std::vector<std::size_t>* labels) {
  model.validate();
  const std::size_t K = model.K();
  const auto P = static_cast<Eigen::Index>(model.P());
  std::vector<std::vector<GGDSampler>> draw(K);
  for (std::size_t k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < P; ++j)
      draw[k].emplace_back(GGDParams(model.scales(static_cast<Eigen::Index>(k), j),
                                     model.shapes(static_cast<Eigen::Index>(k), j)));
  std::mt19937_64 eng(seed);
  std::discrete_distribution<std::size_t> pick(model.weights.begin(), model.weights.end());
  PatchMatrix out(P, static_cast<Eigen::Index>(n));
  if (labels) labels->resize(n);
  Eigen::VectorXd x(P);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(eng);
    for (Eigen::Index j = 0; j < P; ++j) x[j] = draw[k][static_cast<std::size_t>(j)](eng);
    out.col(static_cast<Eigen::Index>(i)).noalias() = model.bases[k] * x;
    if (labels) (*labels)[i] = k;
  }
  return out;
}

}  // namespace ggmm
