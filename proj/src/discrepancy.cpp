#include "ggmm/discrepancy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "ggmm/ggd.hpp"
#include "ggmm/quadrature.hpp"
#include "ggmm/special.hpp"

namespace ggmm {

double discrepancy_exact_nu2(double x, double sigma, double lambda) {
  const double var = sigma * sigma + lambda * lambda;
  return 0.5 * (kLogTwoPi + std::log(var) + x * x / var);
}

double discrepancy_exact_nu1(double x, double sigma, double lambda) {
  // Each e^{a} erfc(b) term is combined in the log domain through log_erfc,
  // which switches to the scaled erfc for large b.
  const double a = std::numbers::sqrt2 * x / lambda;
  const double b = x / (std::numbers::sqrt2 * sigma);
  const double r = sigma / lambda;
  const double left = a + log_erfc(b + r);
  const double right = -a + log_erfc(-b + r);
  return std::log(2.0 * std::numbers::sqrt2 * lambda) - r * r - log_add_exp(left, right);
}

namespace {

constexpr double kLogDrop = 750.0;
constexpr double kGolden = 0.61803398874989484820;

// GGD factor at unit noise: penalty(t) = (|t| / lambda_nu)^nu.
struct Kernel {
  double nu;
  double lambda_nu;
  double inv_lambda_nu;
  double log_norm;

  Kernel(double lambda, double shape) : nu(shape) {
    const GGDParams p(lambda, shape);
    lambda_nu = p.lambda_nu();
    inv_lambda_nu = 1.0 / lambda_nu;
    log_norm = p.log_norm();
  }
  double penalty(double t) const {
    const double a = std::abs(t) * inv_lambda_nu;
    if (nu == 2.0) return a * a;
    if (nu == 1.0) return a;
    return std::pow(a, nu);
  }
  double min_width() const { return 1e-3 * std::min(1.0, lambda_nu); }
};

template <class G>
double golden_argmax(const G& g, double a, double b) {
  double c = b - kGolden * (b - a);
  double d = a + kGolden * (b - a);
  double gc = g(c), gd = g(d);
  for (int it = 0; it < 200; ++it) {
    if (b - a <= 1e-14 * (std::abs(a) + std::abs(b)) || b - a < 1e-300) break;
    if (gc > gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - kGolden * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + kGolden * (b - a);
      gd = g(d);
    }
  }
  return 0.5 * (a + b);
}

// First point start + dir * 2^k (k >= 0) where the decreasing log-integrand
// falls below `level`.
template <class G>
double find_bound(const G& g, double start, double dir, double level) {
  double step = 1.0;
  while (g(start + dir * step) > level && step < 1e300) step *= 2.0;
  return start + dir * step;
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

[[noreturn]] void quadrature_failure(const char* what, double x, double lambda, double nu) {
  std::ostringstream os;
  os.precision(17);
  os << what << ": tolerance not met at x=" << x << " lambda=" << lambda << " nu=" << nu;
  throw QuadratureError(os.str());
}

// Integrals of the unit-noise convolution at fixed (lambda, nu).
class UnitConvolution {
 public:
  UnitConvolution(double lambda, double nu) : lambda_(lambda), k_(lambda, nu) {}

  double lambda() const { return lambda_; }
  const Kernel& kernel() const { return k_; }

  // log of the integral over R of exp(-penalty(t) - (x - t)^2 / 2).
  double log_conv(double x, double rel_tol) const {
    x = std::abs(x);
    auto g = [&](double t) { return -k_.penalty(t) - 0.5 * (x - t) * (x - t); };
    std::vector<double> bps{0.0};
    double gmax = g(0.0);
    if (x > 0.0) {
      constexpr int n = 64;
      std::array<double, n + 1> v{};
      for (int i = 0; i <= n; ++i) v[i] = g(x * i / n);
      for (int i = 0; i <= n; ++i) {
        const bool left_ok = i == 0 || v[i] >= v[i - 1];
        const bool right_ok = i == n || v[i] >= v[i + 1];
        if (!(left_ok && right_ok)) continue;
        double t = x * i / n;
        const double a = x * std::max(i - 1, 0) / n;
        const double b = x * std::min(i + 1, n) / n;
        const double refined = golden_argmax(g, a, b);
        if (g(refined) > v[i]) t = refined;
        bps.push_back(t);
        gmax = std::max(gmax, g(t));
      }
      bps.push_back(x);
    }
    bps.push_back(find_bound(g, 0.0, -1.0, gmax - kLogDrop));
    bps.push_back(find_bound(g, x, 1.0, gmax - kLogDrop));
    const auto part = graded_partition(sorted_unique(std::move(bps)), k_.min_width());
    auto integrand = [&](double t) { return std::exp(g(t) - gmax); };
    // g(t) - gmax carries absolute rounding of order eps * |gmax|.
    const double tol = std::max(rel_tol, 64.0 * 2.2e-16 * (1.0 + std::abs(gmax)));
    const auto r = integrate_adaptive(integrand, part, {tol, 0.0, 20000});
    if (!r.converged || !(r.value > 0.0)) quadrature_failure("convolution", x, lambda_, k_.nu);
    return gmax + std::log(r.value);
  }

  // Integral over [0, inf) of q(t) * weight(t), q(t) = exp(-penalty(t) - t^2/2).
  template <class W>
  double half_line(W&& weight, double extra_break, double rel_tol, bool cancels = false) const {
    auto logq = [&](double t) { return -k_.penalty(t) - 0.5 * t * t; };
    std::vector<double> bps{0.0, find_bound(logq, 0.0, 1.0, -kLogDrop)};
    if (extra_break > 0.0 && extra_break < bps[1]) bps.push_back(extra_break);
    const auto part = graded_partition(sorted_unique(std::move(bps)), k_.min_width());
    auto integrand = [&](double t) { return std::exp(logq(t)) * weight(t); };
    const auto r = integrate_adaptive(integrand, part, {rel_tol, 0.0, 20000, cancels});
    if (!r.converged) quadrature_failure("half-line moment", extra_break, lambda_, k_.nu);
    return r.value;
  }

  double z0() const {
    if (z0_ < 0.0) z0_ = half_line([](double) { return 1.0; }, 0.0, 1e-13);
    return z0_;
  }

  double gamma0() const {
    return -k_.log_norm + kLogSqrtTwoPi - std::log(2.0 * z0());
  }

  double second_moment_gap() const {
    const double inv = k_.inv_lambda_nu;
    const double nu = k_.nu;
    const double m = half_line([&](double t) { return std::pow(t * inv, nu); }, 0.0, 1e-13);
    return nu * m / z0();
  }

  // f(x) - gamma0 at unit noise.
  double excess(double x) const {
    x = std::abs(x);
    if (x == 0.0) return 0.0;
    const double direct = std::log(2.0 * z0()) - log_conv(x, 1e-12);
    if (direct > 0.05) return direct;
    // Small excess: integrate the ratio I(x)/I(0) - 1 directly against the
    // symmetric density q, with the integrand written free of cancellation.
    double ratio;
    if (lambda_ <= 2.0) {
      const double em = std::expm1(-0.5 * x * x);
      auto c = [&](double t) {
        const double sh = std::sinh(0.5 * x * t);
        return em * std::cosh(x * t) + 2.0 * sh * sh;
      };
      ratio = half_line(c, x, 1e-12, true) / z0();
    } else {
      auto c = [&](double t) {
        double s, d;
        if (t > 8.0 * x) {
          // (1 -+ y)^nu expanded in y = x/t: even terms give s, odd terms d.
          const double y = x / t;
          const double nu = k_.nu;
          double even = 0.0, odd = 0.0, coef = 1.0, power = 1.0;
          for (int m = 1; m <= 24; ++m) {
            coef *= (nu - (m - 1)) / m;
            power *= y;
            if (m % 2 == 0) even += coef * power;
            else odd += coef * power;
          }
          const double p0 = k_.penalty(t);
          s = 2.0 * p0 * even;
          d = -2.0 * p0 * odd;
        } else {
          const double pm = k_.penalty(x - t);
          const double pp = k_.penalty(x + t);
          const double p0 = k_.penalty(t);
          s = (pm - p0) + (pp - p0);
          d = pm - pp;
        }
        const double sh = std::sinh(0.25 * d);
        return std::expm1(-0.5 * s) * std::cosh(0.5 * d) + 2.0 * sh * sh;
      };
      ratio = half_line(c, x, 1e-12, true) / z0();
    }
    return -std::log1p(ratio);
  }

  double phi(double x) const { return std::log(excess(x)); }

 private:
  double lambda_;
  Kernel k_;
  mutable double z0_ = -1.0;
};

}  // namespace

double discrepancy_oracle(double x, double sigma, double lambda, double nu, double rel_tol) {
  const UnitConvolution conv(lambda / sigma, nu);
  const double f1 = -conv.kernel().log_norm + kLogSqrtTwoPi - conv.log_conv(x / sigma, rel_tol);
  return std::log(sigma) + f1;
}

double log_discrepancy_oracle(double x, double lambda, double nu) {
  return UnitConvolution(lambda, nu).phi(x);
}

double second_moment_gap(double lambda, double nu) {
  return UnitConvolution(lambda, nu).second_moment_gap();
}

double beta1_closed_form_nu1(double lambda) {
  const double r = 1.0 / lambda;
  // exp(-r^2) / erfc(r) = 1 / erfcx(r)
  const double ratio = 1.0 / (std::sqrt(std::numbers::pi) * erfcx(r));
  return -std::log(lambda) + std::log(ratio - r);
}

double softplus(double x, double h) {
  const double z = x / h;
  if (z > 40.0) return x;
  if (z < -40.0) return h * std::exp(z);
  return h * std::log1p(std::exp(z));
}

double log_discrepancy_approx(double u, const AsymptoticParams& a) {
  const double l = std::log(u);
  const double left = a.alpha1 * l + a.beta1;
  const double right = a.alpha2 * l + a.beta2;
  return left - softplus(left - right, a.h);
}

std::vector<double> h_fit_grid() {
  constexpr int n = 201;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = std::pow(10.0, -3.0 + 6.0 * i / (n - 1));
  xs.front() = 1e-3;
  xs.back() = 1e3;
  return xs;
}

double softplus_fit_residual(double h, std::span<const double> xs,
                             std::span<const double> phis, const AsymptoticParams& a) {
  AsymptoticParams p = a;
  p.h = h;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(phis[i])) continue;
    const double r = log_discrepancy_approx(xs[i], p) - phis[i];
    sse += r * r;
  }
  return sse;
}

namespace {

HFit fit_h_from(const UnitConvolution& conv, const AsymptoticParams& asym) {
  const auto xs = h_fit_grid();
  std::vector<double> phis(xs.size());
  std::size_t bad = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double v;
    try {
      v = conv.phi(xs[i]);
    } catch (const QuadratureError&) {
      v = NAN;
    }
    phis[i] = v;
    if (!std::isfinite(v)) ++bad;
  }
  HFit fit;
  if (bad * 20 > xs.size()) {
    fit.h = 1.0;
    fit.degenerate = true;
    fit.residual = softplus_fit_residual(1.0, xs, phis, asym);
    return fit;
  }
  auto cost = [&](double logh) { return softplus_fit_residual(std::exp(logh), xs, phis, asym); };
  double a = std::log(kMinSoftplusSharpness);
  double b = std::log(kMaxSoftplusSharpness);
  double c = b - kGolden * (b - a);
  double d = a + kGolden * (b - a);
  double fc = cost(c), fd = cost(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kGolden * (b - a);
      fc = cost(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kGolden * (b - a);
      fd = cost(d);
    }
  }
  fit.h = std::exp(0.5 * (a + b));
  fit.residual = cost(0.5 * (a + b));
  return fit;
}

AsymptoticParams asymptotics_without_h(const UnitConvolution& conv, double lambda, double nu) {
  AsymptoticParams a;
  a.gamma0 = conv.gamma0();
  a.alpha1 = 2.0;
  a.beta1 = -std::numbers::ln2 + std::log(conv.second_moment_gap());
  a.alpha2 = nu;
  a.beta2 = -nu * std::log(lambda * ggd_scale_ratio(nu));
  a.h = 1.0;
  return a;
}

}  // namespace

HFit fit_h(double lambda, double nu, const AsymptoticParams& asym) {
  return fit_h_from(UnitConvolution(lambda, nu), asym);
}

AsymptoticParams compute_asymptotics(double lambda, double nu) {
  const UnitConvolution conv(lambda, nu);
  auto a = asymptotics_without_h(conv, lambda, nu);
  a.h = fit_h_from(conv, a).h;
  return a;
}

DiscrepancyLUT::DiscrepancyLUT()
    : gamma0(kNuCount * kLambdaCount),
      beta1(kNuCount * kLambdaCount),
      beta2(kNuCount * kLambdaCount),
      h(kNuCount * kLambdaCount, 1.0) {}

double DiscrepancyLUT::nu_at(std::size_t i) {
  if (i + 1 >= kNuCount) return kNuMax;
  return kNuMin + (kNuMax - kNuMin) * static_cast<double>(i) / (kNuCount - 1);
}

double DiscrepancyLUT::lambda_at(std::size_t j) {
  if (j == 0) return kLambdaMin;
  if (j + 1 >= kLambdaCount) return kLambdaMax;
  return std::pow(10.0, -3.0 + 6.0 * static_cast<double>(j) / (kLambdaCount - 1));
}

AsymptoticParams DiscrepancyLUT::lookup(double nu, double lambda) const {
  constexpr double nu_step = (kNuMax - kNuMin) / (kNuCount - 1);
  constexpr double log_step = 6.0 / (kLambdaCount - 1);
  const double fi = std::clamp((nu - kNuMin) / nu_step, 0.0, double(kNuCount - 1));
  const double fj =
      std::clamp((std::log10(lambda) + 3.0) / log_step, 0.0, double(kLambdaCount - 1));
  const std::size_t i0 = std::min(static_cast<std::size_t>(fi), kNuCount - 2);
  const std::size_t j0 = std::min(static_cast<std::size_t>(fj), kLambdaCount - 2);
  const double wi = fi - i0;
  const double wj = fj - j0;
  const std::size_t n00 = index(i0, j0), n01 = n00 + 1;
  const std::size_t n10 = index(i0 + 1, j0), n11 = n10 + 1;
  auto interp = [&](const std::vector<double>& t) {
    const double lo = t[n00] + wj * (t[n01] - t[n00]);
    const double hi = t[n10] + wj * (t[n11] - t[n10]);
    return lo + wi * (hi - lo);
  };
  AsymptoticParams a;
  a.gamma0 = interp(gamma0);
  a.beta1 = interp(beta1);
  a.beta2 = interp(beta2);
  a.h = interp(h);
  a.alpha1 = 2.0;
  a.alpha2 = nu;
  return a;
}

double approx_discrepancy_unit(double u, const AsymptoticParams& a) {
  u = std::abs(u);
  if (u == 0.0) return a.gamma0;
  return a.gamma0 + std::exp(log_discrepancy_approx(u, a));
}

double approx_discrepancy(double x, double sigma, double lambda, double nu,
                          const DiscrepancyLUT& lut) {
  const auto a = lut.lookup(nu, lambda / sigma);
  return std::log(sigma) + approx_discrepancy_unit(x / sigma, a);
}

AsymptoticParams build_lut_node(std::size_t nu_index, std::size_t lambda_index) {
  const double nu = DiscrepancyLUT::nu_at(nu_index);
  const double lambda = DiscrepancyLUT::lambda_at(lambda_index);
  return compute_asymptotics(lambda, nu);
}

DiscrepancyLUT build_lut(const std::function<void(std::size_t)>& progress) {
  DiscrepancyLUT lut;
  constexpr std::size_t total = DiscrepancyLUT::kNuCount * DiscrepancyLUT::kLambdaCount;
  std::atomic<std::size_t> done{0};
  std::atomic<bool> failed{false};
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(total); ++n) {
    if (failed.load()) continue;
    const std::size_t i = n / DiscrepancyLUT::kLambdaCount;
    const std::size_t j = n % DiscrepancyLUT::kLambdaCount;
    try {
      const auto a = build_lut_node(i, j);
      lut.gamma0[n] = a.gamma0;
      lut.beta1[n] = a.beta1;
      lut.beta2[n] = a.beta2;
      lut.h[n] = a.h;
    } catch (const std::exception& e) {
#pragma omp critical(ggmm_lut_failure)
      {
        if (!failed.exchange(true)) {
          std::ostringstream os;
          os << "LUT node (nu=" << DiscrepancyLUT::nu_at(i)
             << ", lambda=" << DiscrepancyLUT::lambda_at(j) << "): " << e.what();
          failure = os.str();
        }
      }
    }
    const std::size_t finished = ++done;
    if (progress) {
#pragma omp critical(ggmm_lut_progress)
      progress(finished);
    }
  }
  if (failed) throw LutBuildError(failure);
  return lut;
}

}  // namespace ggmm
