#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <random>
#include <string>
#include <vector>

#include "ggmm/discrepancy.hpp"
#include "ggmm/shrinkage.hpp"
#include "test_support.hpp"

namespace ggmm::test {

/// Violation counts per property clause.
struct PropertyReport {
  std::vector<std::string> names;
  std::vector<std::size_t> violations;
  std::size_t draws = 0;
  /// (nu, x) of every kill-clause violation.
  std::vector<std::pair<double, double>> kill_failures;

  void add(const std::string& name) {
    names.push_back(name);
    violations.push_back(0);
  }
  bool ok() const {
    for (auto v : violations)
      if (v) return false;
    return true;
  }
  std::string summary() const {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i)
      s += (i ? ", " : "") + names[i] + "=" + std::to_string(violations[i]);
    return s;
  }
};

using ShrinkFn = std::function<double(double, const ShrinkContext&)>;

inline double draw_shape(std::mt19937_64& eng) {
  static const double special[] = {0.5, 1.0, 4.0 / 3.0, 1.5, 2.0};
  if (std::uniform_int_distribution<int>(0, 3)(eng) == 0)
    return special[std::uniform_int_distribution<int>(0, 4)(eng)];
  return uniform(eng, 0.3, 2.0);
}

/// Reduction, oddness, shrinkage interval, monotonicity in x and in lambda,
/// and the low/high SNR limits, over `draws` random (x, sigma, lambda, nu).
inline PropertyReport shrinkage_properties(const ShrinkFn& s, std::size_t draws, std::uint64_t seed) {
  PropertyReport r;
  for (const char* n : {"reduction", "odd", "interval", "monotone_x", "monotone_lambda", "kill", "keep"}) r.add(n);
  r.draws = draws;
  std::mt19937_64 eng(seed);
  std::vector<double> grid(64);
  for (std::size_t d = 0; d < draws; ++d) {
    const double sigma = log_uniform(eng, 1e-2, 1e2), lambda = log_uniform(eng, 1e-2, 1e2);
    const double nu = draw_shape(eng);
    const double x = sigma * uniform(eng, -50.0, 50.0);
    const ShrinkContext c(sigma, lambda, nu);
    const double v = s(x, c);

    const double unit = sigma * s(x / sigma, ShrinkContext(1.0, lambda / sigma, nu));
    if (!(std::abs(v - unit) <= 1e-10)) ++r.violations[0];
    if (s(-x, c) != -v) ++r.violations[1];
    const bool inside = x >= 0 ? (v >= 0.0 && v <= x) : (v <= 0.0 && v >= x);
    if (!inside) ++r.violations[2];

    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sigma * 60.0 * static_cast<double>(i) / (grid.size() - 1);
    double prev = -1.0;
    for (double g : grid) {
      const double cur = s(g, c);
      if (cur < prev) {
        ++r.violations[3];
        break;
      }
      prev = cur;
    }

    const double lambda_hi = lambda * log_uniform(eng, 1.0, 100.0);
    const double ax = std::abs(x);
    if (s(ax, ShrinkContext(sigma, lambda_hi, nu)) < s(ax, c)) ++r.violations[4];

    const double y = uniform(eng, -100.0, 100.0);
    if (!(std::abs(s(y, ShrinkContext(1.0, 1e-6, nu))) <= 1e-3 * std::abs(y))) {
      ++r.violations[5];
      r.kill_failures.emplace_back(nu, y);
    }
    if (nu >= 1.0) {
      const double z = log_uniform(eng, 1e-2, 1e2) * (y < 0 ? -1.0 : 1.0);
      if (!(std::abs(s(z, ShrinkContext(1.0, 1e6, nu)) - z) <= 1e-3 * std::abs(z))) ++r.violations[6];
    }
  }
  return r;
}

using DiscrepancyFn = std::function<double(double, double, double, double)>;

/// Scale reduction, evenness, unimodality and a finite minimum at zero.
inline PropertyReport discrepancy_properties(const DiscrepancyFn& f, double reduction_tol,
                                             std::size_t draws, std::uint64_t seed) {
  PropertyReport r;
  for (const char* n : {"reduction", "even", "unimodal", "minimum_at_zero"}) r.add(n);
  r.draws = draws;
  std::mt19937_64 eng(seed);
  for (std::size_t d = 0; d < draws; ++d) {
    const double sigma = log_uniform(eng, 0.1, 50.0), lambda = log_uniform(eng, 0.05, 500.0);
    const double nu = uniform(eng, 0.3, 2.0);
    const double x = sigma * uniform(eng, -100.0, 100.0);
    const double v = f(x, sigma, lambda, nu);
    const double reduced = std::log(sigma) + f(x / sigma, 1.0, lambda / sigma, nu);
    if (!(std::abs(v - reduced) <= reduction_tol)) ++r.violations[0];
    if (f(-x, sigma, lambda, nu) != v) ++r.violations[1];
    double prev = f(0.0, sigma, lambda, nu);
    const double at_zero = prev;
    for (int i = 0; i <= 40; ++i) {
      const double cur = f(sigma * std::pow(10.0, -2.0 + 0.1 * i), sigma, lambda, nu);
      if (cur < prev) {
        ++r.violations[2];
        break;
      }
      prev = cur;
    }
    if (!std::isfinite(at_zero) || v < at_zero) ++r.violations[3];
  }
  return r;
}

}  // namespace ggmm::test
