// Serial reference kernels versus their OpenMP counterparts. Prints CSV:
// kernel,n,threads,serial_s,parallel_s,speedup,max_rel_diff

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ggmm/epll.hpp"
#include "ggmm/io.hpp"
#include "ggmm/mixture.hpp"
#include "ggmm/parallel.hpp"

using namespace ggmm;

namespace {

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

GGMMModel bench_model(std::size_t K, Eigen::Index P, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  GGMMModel m;
  m.mode = MixtureMode::ggmm;
  m.weights.assign(K, 1.0 / static_cast<double>(K));
  m.scales.resize(static_cast<Eigen::Index>(K), P);
  m.shapes.resize(static_cast<Eigen::Index>(K), P);
  for (std::size_t k = 0; k < K; ++k) {
    Eigen::MatrixXd a(P, P);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(eng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    m.bases.push_back(qr.householderQ() * Eigen::MatrixXd::Identity(P, P));
    for (Eigen::Index j = 0; j < P; ++j) {
      m.scales(static_cast<Eigen::Index>(k), j) = 60.0 * std::pow(0.9, static_cast<double>(j));
      m.shapes(static_cast<Eigen::Index>(k), j) = u(eng);
    }
  }
  return m;
}

void row(const char* kernel, long n, double serial, double parallel, double diff) {
  std::printf("%s,%ld,%d,%.6f,%.6f,%.2f,%.3g\n", kernel, n, max_threads(), serial, parallel, serial / parallel, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  configure_threads();
  const std::size_t K = quick ? 4 : 20;
  const Eigen::Index n = quick ? 5000 : 50000;
  const int reps = quick ? 1 : 3;
  const auto model = bench_model(K, 64, 1);
  const PatchMatrix z = sample_model(model, static_cast<std::size_t>(n), 2);

  std::printf("kernel,n,threads,serial_s,parallel_s,speedup,max_rel_diff\n");

  EStepResult fast, slow;
  const double es = best_of(reps, [&] { slow = reference::e_step(z, model); });
  const double ep = best_of(reps, [&] { fast = e_step(z, model); });
  row("e_step", n, es, ep, max_rel(fast.resp, slow.resp));

  std::vector<ComponentStats> s1, s2;
  const double ms = best_of(reps, [&] { s2 = reference::accumulate_second_moments(z, fast.resp); });
  const double mp = best_of(reps, [&] { s1 = accumulate_second_moments(z, fast.resp); });
  double diff = 0.0;
  std::vector<double> masses;
  for (std::size_t k = 0; k < K; ++k) {
    diff = std::max(diff, max_rel(s1[k].second_moment, s2[k].second_moment));
    masses.push_back(s1[k].mass);
  }
  row("second_moments", n, ms, mp, diff);

  Eigen::MatrixXd c1, c2;
  const double as = best_of(reps, [&] { c2 = reference::accumulate_abs_moments(z, fast.resp, model.bases, masses); });
  const double ap = best_of(reps, [&] { c1 = accumulate_abs_moments(z, fast.resp, model.bases, masses); });
  row("abs_moments", n, as, ap, max_rel(c1, c2));

  // One EPLL stage: selection and shrinkage over every patch of a 128x128
  // image, single thread versus the configured pool.
  const DiscrepancyLUT lut = load_lut(std::string(GGMM_DATA_DIR) + "/ggmm_lut.txt");
  std::mt19937_64 eng(3);
  std::normal_distribution<double> noise(128.0, 40.0);
  ImageBuffer img(128, 128);
  for (double& p : img.pixels) p = noise(eng);
  DenoiseConfig cfg;
  cfg.patch_fraction = quick ? 0.03 : 0.3;
  const int threads = max_threads();
  ImageBuffer out_serial, out_parallel;
  set_threads(1);
  const double ds = best_of(reps, [&] { out_serial = epll_denoise(img, model, lut, cfg); });
  set_threads(threads);
  const double dp = best_of(reps, [&] { out_parallel = epll_denoise(img, model, lut, cfg); });
  double pix = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) pix = std::max(pix, std::abs(out_serial.pixels[i] - out_parallel.pixels[i]));
  row("epll_denoise", static_cast<long>(img.size()), ds, dp, pix);
  return 0;
}
