#include "ggmm/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ggmm/ggd.hpp"

namespace ggmm {

namespace {

double form_shape(ShrinkForm form, double nu) {
  switch (form) {
    case ShrinkForm::soft:
      return 1.0;
    case ShrinkForm::four_thirds:
      return 4.0 / 3.0;
    case ShrinkForm::three_halves:
      return 1.5;
    case ShrinkForm::wiener:
      return 2.0;
    default:
      return nu;
  }
}

double shrink_gamma(double sigma, double lambda_nu, double nu) {
  return nu * sigma * sigma * std::pow(lambda_nu, -nu);
}

}  // namespace

ShrinkContext::ShrinkContext(double s, double l, double n) : sigma(s), lambda(l), nu(n) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("noise std must be positive");
  const GGDParams p(l, n);
  lambda_nu = p.lambda_nu();
  const double scaled = sigma * sigma * std::pow(lambda_nu, -nu);
  gamma = nu * scaled;
  form = shrink_form(nu);
  const double snapped = form_shape(form, nu);
  form_gamma = snapped == nu ? gamma : shrink_gamma(sigma, GGDParams(l, snapped).lambda_nu(), snapped);
  if (nu < 1.0) {
    tau = (2.0 - nu) * std::pow(2.0 - 2.0 * nu, -(1.0 - nu) / (2.0 - nu)) *
          std::pow(scaled, 1.0 / (2.0 - nu));
  } else if (nu == 1.0) {
    tau = gamma;
  } else {
    tau = std::numeric_limits<double>::quiet_NaN();
  }
}

ShrinkForm shrink_form(double nu) {
  if (!(nu >= kMinShape && nu <= kMaxShape)) throw std::invalid_argument("shape must lie in [0.3, 2]");
  if (nu < 1.0) return ShrinkForm::hard_threshold;
  if (nu <= 7.0 / 6.0) return ShrinkForm::soft;
  if (nu <= 17.0 / 12.0) return ShrinkForm::four_thirds;
  if (nu <= 7.0 / 4.0) return ShrinkForm::three_halves;
  return ShrinkForm::wiener;
}

namespace {

double hard_threshold(double a, const ShrinkContext& c) {
  if (a <= c.tau) return 0.0;
  return std::clamp(a - c.gamma * std::pow(a, c.nu - 1.0), 0.0, a);
}

// Real root of u^3 + gamma u - a = 0 via Cardano, written as
// a / (p^2 + p q + q^2) to avoid the cancellation in p - q.
double four_thirds(double a, double gamma) {
  const double g3 = gamma / 3.0;
  const double zeta = std::sqrt(a * a + 4.0 * g3 * g3 * g3);
  const double p = std::cbrt(0.5 * (zeta + a));
  const double q = std::cbrt(2.0 * g3 * g3 * g3 / (zeta + a));
  const double u = a / (p * p + p * q + q * q);
  return u * u * u;
}

// Root u of u^2 + gamma u - a = 0, squared.
double three_halves(double a, double gamma) {
  const double d = std::sqrt(gamma * gamma + 4.0 * a) + gamma;
  return 4.0 * a * a / (d * d);
}

double magnitude(double a, const ShrinkContext& c) {
  const double g = c.form_gamma;
  switch (c.form) {
    case ShrinkForm::hard_threshold:
      return hard_threshold(a, c);
    case ShrinkForm::soft:
      return std::max(a - g, 0.0);
    case ShrinkForm::four_thirds:
      return four_thirds(a, g);
    case ShrinkForm::three_halves:
      return three_halves(a, g);
    case ShrinkForm::wiener:
      return a / (1.0 + g);
  }
  return a;
}

[[noreturn]] void fail(double x, const ShrinkContext& c) {
  std::ostringstream msg;
  msg.precision(17);
  msg << "shrinkage oracle did not converge at x=" << x << " sigma=" << c.sigma
      << " lambda=" << c.lambda << " nu=" << c.nu;
  throw ShrinkageNoConvergence(msg.str());
}

// Root of t + gamma t^(nu-1) = a on (0, a] for 1 < nu < 2.
double halley_root(double a, const ShrinkContext& c) {
  const double e = c.nu - 1.0;
  const double tol = 1e-12 * std::max(1.0, a);
  double t = std::min(a, std::pow(a / c.gamma, 1.0 / e));
  if (!(t > 0.0)) return 0.0;
  // The start bounds the root from above; gamma t^(nu-1) = a - t >= a - t0
  // bounds it from below. Tight when the root is many decades below a.
  double lo = t < a ? std::pow((a - t) / c.gamma, 1.0 / e) : 0.0, hi = t;
  for (int it = 0; it < 100; ++it) {
    const double pe = c.gamma * std::pow(t, e);
    const double g = t + pe - a;
    const double d1 = 1.0 + e * pe / t;
    if (std::abs(g) <= tol) return std::clamp(t - g / d1, lo, hi);
    if (g > 0.0) hi = t; else lo = t;
    const double d2 = e * (e - 1.0) * pe / (t * t);
    double next = t - 2.0 * g * d1 / (2.0 * d1 * d1 - g * d2);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return next;
    t = next;
  }
  const double g = t + c.gamma * std::pow(t, e) - a;
  if (std::abs(g) <= tol) return t;
  fail(a, c);
}

// Largest root of t + gamma t^(nu-1) = a for nu < 1, or 0 if the objective
// at that root does not beat t = 0.
double newton_threshold(double a, const ShrinkContext& c) {
  const double e = c.nu - 1.0;
  const double t_min = std::pow(c.gamma * (1.0 - c.nu), 1.0 / (2.0 - c.nu));
  if (t_min >= a) return 0.0;
  auto h = [&](double t) { return t + c.gamma * std::pow(t, e) - a; };
  if (h(t_min) > 0.0) return 0.0;
  const double tol = 1e-12 * std::max(1.0, a);
  double lo = t_min, hi = a, t = a;
  bool done = false;
  for (int it = 0; it < 100; ++it) {
    const double pe = c.gamma * std::pow(t, e);
    const double g = t + pe - a;
    if (std::abs(g) <= tol) {
      done = true;
      break;
    }
    if (g > 0.0) hi = t; else lo = t;
    double next = t - g / (1.0 + e * pe / t);
    if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
    if (next == t) {
      done = true;
      break;
    }
    t = next;
  }
  if (!done) fail(a, c);
  return shrink_objective(t, a, c) < 0.5 * a * a ? t : 0.0;
}

}  // namespace

double shrink(double x, const ShrinkContext& ctx) {
  const double m = magnitude(std::abs(x), ctx);
  return x < 0.0 ? -m : m;
}

double shrink_objective(double t, double x, const ShrinkContext& ctx) {
  const double d = x - t;
  return 0.5 * d * d + ctx.gamma / ctx.nu * std::pow(std::abs(t), ctx.nu);
}

double shrink_oracle(double x, const ShrinkContext& ctx) {
  const double a = std::abs(x);
  double m;
  if (a == 0.0) {
    m = 0.0;
  } else if (ctx.nu == 2.0) {
    m = a / (1.0 + ctx.gamma);
  } else if (ctx.nu == 1.0) {
    m = std::max(a - ctx.gamma, 0.0);
  } else if (ctx.nu > 1.0) {
    m = halley_root(a, ctx);
  } else {
    m = newton_threshold(a, ctx);
  }
  return x < 0.0 ? -m : m;
}

}  // namespace ggmm
