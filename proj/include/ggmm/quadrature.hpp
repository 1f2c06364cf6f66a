#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ggmm {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;
  int evaluations = 0;
  bool converged = false;
};

struct QuadratureOptions {
  double rel_tol = 1e-10;
  double abs_tol = 0.0;
  int max_panels = 4000;
  /// Measure rel_tol against the integral of |f| instead of |integral f|.
  /// Use for sign-changing integrands whose integral cancels.
  bool relative_to_magnitude = false;
};

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error, magnitude;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gauss_kronrod_15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  double magnitude = std::abs(fc) * kKronrodWeights[7];
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[i];
    const double lo = f(center - dx);
    const double hi = f(center + dx);
    kronrod += kKronrodWeights[i] * (lo + hi);
    magnitude += kKronrodWeights[i] * (std::abs(lo) + std::abs(hi));
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * (lo + hi);
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss), magnitude * std::abs(half)};
}

}  // namespace detail

/// Subdivides every interval between consecutive breakpoints into panels
/// whose widths grow geometrically (ratio 2) away from both ends, starting
/// at `min_width`. Resolves narrow peaks and cusps sitting on breakpoints.
inline std::vector<double> graded_partition(std::span<const double> breakpoints,
                                            double min_width) {
  std::vector<double> out;
  if (breakpoints.empty()) return out;
  out.push_back(breakpoints.front());
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double a = breakpoints[i];
    const double b = breakpoints[i + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    std::vector<double> right;
    for (double w = min_width; a + w < mid; w *= 2.0) out.push_back(a + w);
    for (double w = min_width; b - w > mid; w *= 2.0) right.push_back(b - w);
    out.push_back(mid);
    out.insert(out.end(), right.rbegin(), right.rend());
    out.push_back(b);
  }
  return out;
}

/// Globally adaptive Gauss-Kronrod 7/15 quadrature over the panels defined by
/// `partition` (sorted). The panel with the largest error estimate is bisected
/// until the summed estimate meets max(abs_tol, rel_tol * |integral|).
template <class F>
QuadratureResult integrate_adaptive(F&& f, std::span<const double> partition,
                                    const QuadratureOptions& opt = {}) {
  QuadratureResult res;
  if (partition.size() < 2) return res;
  std::priority_queue<detail::Panel> heap;
  double total = 0.0, error = 0.0, magnitude = 0.0;
  for (std::size_t i = 0; i + 1 < partition.size(); ++i) {
    if (!(partition[i + 1] > partition[i])) continue;
    auto p = detail::gauss_kronrod_15(f, partition[i], partition[i + 1]);
    res.evaluations += 15;
    total += p.value;
    error += p.error;
    magnitude += p.magnitude;
    heap.push(p);
  }
  int panels = static_cast<int>(heap.size());
  auto scale = [&] { return opt.relative_to_magnitude ? magnitude : std::abs(total); };
  while (error > std::max(opt.abs_tol, opt.rel_tol * scale())) {
    if (panels >= opt.max_panels || heap.empty()) {
      res.value = total;
      res.abs_error = error;
      return res;
    }
    const auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      res.value = total;
      res.abs_error = error;
      return res;
    }
    auto left = detail::gauss_kronrod_15(f, worst.a, mid);
    auto right = detail::gauss_kronrod_15(f, mid, worst.b);
    res.evaluations += 30;
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    magnitude += left.magnitude + right.magnitude - worst.magnitude;
    heap.push(left);
    heap.push(right);
    ++panels;
  }
  // Re-sum to shed the drift of the incremental updates.
  total = 0.0;
  error = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    error += heap.top().error;
    heap.pop();
  }
  res.value = total;
  res.abs_error = error;
  res.converged = true;
  return res;
}

}  // namespace ggmm
