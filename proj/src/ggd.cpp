#include "ggmm/ggd.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "ggmm/special.hpp"

namespace ggmm {

double ggd_scale_ratio(double nu) {
  return std::exp(0.5 * (log_gamma(1.0 / nu) - log_gamma(3.0 / nu)));
}

GGDParams::GGDParams(double lambda, double nu) : lambda_(lambda), nu_(nu) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("GGD scale must be positive and finite");
  if (!(nu >= kMinShape && nu <= kMaxShape))
    throw std::invalid_argument("GGD shape must lie in [0.3, 2]");
  lambda_nu_ = lambda * ggd_scale_ratio(nu);
  kappa_ = nu / std::exp(log_gamma(1.0 / nu));
  log_norm_ = std::log(nu) - log_gamma(1.0 / nu) - std::log(2.0 * lambda_nu_);
}

double ggd_log_pdf(double x, const GGDParams& p) {
  return p.log_norm() - std::pow(std::abs(x) / p.lambda_nu(), p.nu());
}

GGDSampler::GGDSampler(const GGDParams& p)
    : lambda_nu_(p.lambda_nu()), inv_nu_(1.0 / p.nu()), gamma_(1.0 / p.nu(), 1.0) {}

std::vector<double> ggd_sample(const GGDParams& p, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  GGDSampler draw(p);
  std::vector<double> out(n);
  for (auto& v : out) v = draw(eng);
  return out;
}

double mallat_F(double x) {
  if (!(x > 0.0)) throw std::domain_error("mallat_F requires x > 0");
  return std::exp(2.0 * log_gamma(2.0 / x) - log_gamma(3.0 / x) - log_gamma(1.0 / x));
}

namespace {

constexpr std::size_t kInverseNodes = 2048;
constexpr double kInverseLo = 0.25;
constexpr double kInverseHi = 2.5;

struct InverseTable {
  std::array<double, kInverseNodes> x{};
  std::array<double, kInverseNodes> y{};
  InverseTable() {
    const double step = std::log(kInverseHi / kInverseLo) / (kInverseNodes - 1);
    for (std::size_t i = 0; i < kInverseNodes; ++i) {
      x[i] = i + 1 == kInverseNodes ? kInverseHi : kInverseLo * std::exp(step * i);
      y[i] = mallat_F(x[i]);
    }
  }
};

const InverseTable& inverse_table() {
  static const InverseTable table;
  return table;
}

}  // namespace

double mallat_F_inverse(double y) {
  const auto& t = inverse_table();
  if (!(y > t.y.front())) return t.x.front();
  if (y >= t.y.back()) return t.x.back();
  const auto it = std::upper_bound(t.y.begin(), t.y.end(), y);
  const std::size_t hi = static_cast<std::size_t>(it - t.y.begin());
  const std::size_t lo = hi - 1;
  const double w = (y - t.y[lo]) / (t.y[hi] - t.y[lo]);
  return t.x[lo] + w * (t.x[hi] - t.x[lo]);
}

}  // namespace ggmm
