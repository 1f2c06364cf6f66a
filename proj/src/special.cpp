#include "ggmm/special.hpp"

#include <math.h>

namespace ggmm {

double log_gamma(double x) {
  int sign = 1;
  return ::lgamma_r(x, &sign);
}

double erfcx(double x) {
  // Direct evaluation is accurate while erfc(x) is far from underflow.
  if (x < 5.0) return std::exp(x * x) * std::erfc(x);
  // Laplace continued fraction, evaluated backwards:
  //   erfcx(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
  double tail = x;
  for (int k = 80; k >= 1; --k) tail = x + 0.5 * k / tail;
  return 1.0 / (std::sqrt(std::numbers::pi) * tail);
}

double log_erfc(double x) {
  if (x < 0.5) return std::log(std::erfc(x));
  return std::log(erfcx(x)) - x * x;
}

}  // namespace ggmm
