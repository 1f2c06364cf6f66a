#pragma once

#include <cmath>
#include <numbers>
#include <utility>

namespace ggmm {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178032973640562;

/// log Gamma(x) for x > 0. Reentrant (does not touch signgam).
double log_gamma(double x);

/// Scaled complementary error function exp(x^2) * erfc(x), x >= 0.
double erfcx(double x);

/// log erfc(x), finite for every finite x.
double log_erfc(double x);

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -INFINITY) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace ggmm
