#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ggmm/discrepancy.hpp"
#include "ggmm/epll.hpp"
#include "ggmm/image.hpp"
#include "ggmm/io.hpp"
#include "ggmm/mixture.hpp"
#include "ggmm/parallel.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr std::size_t kEdge = 8;

int cmd_build_luts(const std::string& out) {
  const auto start = Clock::now();
  const std::size_t total = ggmm::DiscrepancyLUT::kNuCount * ggmm::DiscrepancyLUT::kLambdaCount;
  const auto lut = ggmm::build_lut([&](std::size_t done) {
    if (done % 500 == 0 || done == total) std::fprintf(stderr, "build-luts: %zu/%zu nodes\n", done, total);
  });
  ggmm::save_lut(out, lut);
  std::fprintf(stderr, "build-luts: wrote %s in %.1f s\n", out.c_str(), seconds_since(start));
  return 0;
}

struct TrainArgs {
  std::string patches, mode = "ggmm", init, out;
  std::size_t k = 20, iters = 50, stride = 4;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
  ggmm::EMOptions opt;
  opt.K = a.k;
  opt.mode = ggmm::parse_mixture_mode(a.mode);
  opt.iters = a.iters;
  opt.seed = a.seed;
  if (!a.init.empty()) opt.init = ggmm::load_model(a.init);
  const ggmm::PatchMatrix z = ggmm::load_training_patches(a.patches, kEdge, a.stride, a.seed);
  std::fprintf(stderr, "train: %ld patches, K=%zu, mode=%s\n", static_cast<long>(z.cols()),
               opt.init ? opt.init->K() : opt.K, a.mode.c_str());
  opt.on_iteration = [](std::size_t it, double ll) {
    std::fprintf(stderr, "train: iter %zu mean log-likelihood %.6f\n", it, ll);
  };
  ggmm::EMTrace trace;
  const auto start = Clock::now();
  const ggmm::GGMMModel model = ggmm::em_fit(z, opt, &trace);
  if (trace.respawns > 0) std::fprintf(stderr, "train: respawned %zu components\n", trace.respawns);
  if (trace.stopped_early) std::fprintf(stderr, "train: stopped after repeated likelihood decreases\n");
  ggmm::save_model(a.out, model);
  std::fprintf(stderr, "train: wrote %s in %.1f s\n", a.out.c_str(), seconds_since(start));
  return 0;
}

struct DenoiseArgs {
  std::string in, out, model, luts, ref;
  double sigma = 0.0, fraction = 0.03;
  std::uint64_t seed = 0;
  bool exact_discrepancy = false, exact_shrinkage = false, add_noise = false;
  std::uint64_t noise_seed = 0;
};

ggmm::DenoiseConfig make_config(double sigma, double fraction, std::uint64_t seed) {
  ggmm::DenoiseConfig cfg;
  cfg.sigma = sigma;
  cfg.patch_fraction = fraction;
  cfg.seed = seed;
  return cfg;
}

int cmd_denoise(const DenoiseArgs& a) {
  ggmm::ImageBuffer v = ggmm::load_pgm(a.in);
  if (a.add_noise) v = ggmm::add_gaussian_noise(v, a.sigma, a.noise_seed);
  const auto model = ggmm::load_model(a.model);
  const auto lut = ggmm::load_lut(a.luts);
  auto cfg = make_config(a.sigma, a.fraction, a.seed);
  cfg.use_exact_discrepancy = a.exact_discrepancy;
  cfg.use_exact_shrinkage = a.exact_shrinkage;
  ggmm::DenoiseReport report;
  const ggmm::ImageBuffer u = ggmm::epll_denoise(v, model, lut, cfg, &report);
  ggmm::save_pgm(a.out, u);
  if (!a.ref.empty()) {
    const ggmm::ImageBuffer ref = ggmm::load_pgm(a.ref);
    std::printf("psnr,ssim,discrepancy_s,shrinkage_s,patch_s\n");
    std::printf("%.4f,%.6f,%.6f,%.6f,%.6f\n", ggmm::psnr(u, ref), ggmm::ssim(u, ref),
                report.discrepancy_seconds(), report.shrinkage_seconds(), report.patch_seconds());
  }
  return 0;
}

int cmd_loglik(const std::string& model_path, const std::string& dir) {
  const auto model = ggmm::load_model(model_path);
  const auto files = ggmm::list_pgm_files(dir);
  if (files.empty()) throw ggmm::FormatError("no .pgm images in " + dir);
  std::printf("image,patches,mean_log_likelihood\n");
  for (const auto& f : files) {
    const auto z = ggmm::image_patches(ggmm::load_pgm(f), kEdge, kEdge);
    if (z.cols() == 0) continue;
    std::printf("%s,%ld,%.6f\n", std::filesystem::path(f).filename().string().c_str(),
                static_cast<long>(z.cols()), ggmm::model_log_likelihood(z, model));
  }
  return 0;
}

// Patches laid out on a square grid with one-pixel gaps, each stretched to
// the full intensity range.
ggmm::ImageBuffer contact_sheet(const ggmm::PatchMatrix& z) {
  const auto n = static_cast<std::size_t>(z.cols());
  const auto per_row = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + per_row - 1) / per_row, cell = kEdge + 1;
  ggmm::ImageBuffer sheet(per_row * cell + 1, rows * cell + 1, 255.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = z.col(static_cast<Eigen::Index>(i));
    const double lo = col.minCoeff(), hi = col.maxCoeff();
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    const std::size_t x0 = (i % per_row) * cell + 1, y0 = (i / per_row) * cell + 1;
    for (std::size_t dy = 0; dy < kEdge; ++dy)
      for (std::size_t dx = 0; dx < kEdge; ++dx)
        sheet.at(x0 + dx, y0 + dy) = hi > lo ? (col[static_cast<Eigen::Index>(dy * kEdge + dx)] - lo) * scale : 128.0;
  }
  return sheet;
}

int cmd_sample(const std::string& model_path, std::size_t n, std::uint64_t seed, const std::string& out) {
  const auto model = ggmm::load_model(model_path);
  const auto z = ggmm::sample_model(model, n, seed);
  ggmm::save_pgm(out, contact_sheet(z));
  const std::string raw = std::filesystem::path(out).replace_extension(".patches").string();
  ggmm::save_patches(raw, z);
  std::fprintf(stderr, "sample: wrote %s and %s\n", out.c_str(), raw.c_str());
  return 0;
}

int cmd_metrics(const std::string& a, const std::string& b) {
  const auto ia = ggmm::load_pgm(a), ib = ggmm::load_pgm(b);
  std::printf("psnr,ssim\n%.4f,%.6f\n", ggmm::psnr(ia, ib), ggmm::ssim(ia, ib));
  return 0;
}

struct BenchArgs {
  std::string in, model, luts;
  double sigma = 20.0, fraction = 0.03;
  std::uint64_t seed = 0, noise_seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  const ggmm::ImageBuffer clean = ggmm::load_pgm(a.in);
  const ggmm::ImageBuffer noisy = ggmm::add_gaussian_noise(clean, a.sigma, a.noise_seed);
  const auto model = ggmm::load_model(a.model);
  const auto lut = ggmm::load_lut(a.luts);
  struct Variant {
    const char* name;
    bool exact_discrepancy, exact_shrinkage;
  };
  const Variant variants[] = {{"exact_exact", true, true},
                              {"exact_discrepancy", true, false},
                              {"exact_shrinkage", false, true},
                              {"approx_approx", false, false}};
  std::printf("variant,discrepancy_s,shrinkage_s,patch_s,total_s,psnr,ssim\n");
  for (const auto& v : variants) {
    auto cfg = make_config(a.sigma, a.fraction, a.seed);
    cfg.use_exact_discrepancy = v.exact_discrepancy;
    cfg.use_exact_shrinkage = v.exact_shrinkage;
    ggmm::DenoiseReport report;
    const auto t0 = Clock::now();
    const auto u = ggmm::epll_denoise(noisy, model, lut, cfg, &report);
    const double total = seconds_since(t0);
    std::printf("%s,%.6f,%.6f,%.6f,%.6f,%.4f,%.6f\n", v.name, report.discrepancy_seconds(),
                report.shrinkage_seconds(), report.patch_seconds(), total, ggmm::psnr(u, clean),
                ggmm::ssim(u, clean));
    std::fflush(stdout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EPLL denoising with generalized Gaussian mixture priors"};
  app.require_subcommand(1);

  std::string lut_out;
  auto* build = app.add_subcommand("build-luts", "Tabulate the discrepancy approximation parameters");
  build->add_option("--out", lut_out, "Output GGLUT1 file")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fit a mixture model to image patches");
  train->add_option("--patches", ta.patches, "Directory of PGM images or a PATCH1 file")->required();
  train->add_option("--k", ta.k, "Number of components")->check(CLI::PositiveNumber);
  train->add_option("--mode", ta.mode, "ggmm, gmm, lmm or hlmm")
      ->check(CLI::IsMember({"ggmm", "gmm", "lmm", "hlmm"}));
  train->add_option("--iters", ta.iters, "EM iterations");
  train->add_option("--seed", ta.seed, "Random seed");
  train->add_option("--init", ta.init, "Warm-start GGMM1 model");
  train->add_option("--stride", ta.stride, "Patch stride for image directories")->check(CLI::PositiveNumber);
  train->add_option("--out", ta.out, "Output GGMM1 file")->required();

  DenoiseArgs da;
  auto* denoise = app.add_subcommand("denoise", "Denoise a PGM image");
  denoise->add_option("--in", da.in, "Noisy input PGM")->required();
  denoise->add_option("--out", da.out, "Output PGM")->required();
  denoise->add_option("--sigma", da.sigma, "Noise standard deviation")->required()->check(CLI::PositiveNumber);
  denoise->add_option("--model", da.model, "GGMM1 model")->required();
  denoise->add_option("--luts", da.luts, "GGLUT1 table")->required();
  denoise->add_option("--fraction", da.fraction, "Fraction of patches per stage");
  denoise->add_option("--seed", da.seed, "Patch subsampling seed");
  denoise->add_flag("--exact-discrepancy", da.exact_discrepancy, "Use the quadrature discrepancy");
  denoise->add_flag("--exact-shrinkage", da.exact_shrinkage, "Use root-finding shrinkage");
  denoise->add_option("--ref", da.ref, "Clean reference PGM; prints metrics");
  denoise->add_flag("--add-noise", da.add_noise, "Corrupt --in with Gaussian noise of std --sigma first");
  denoise->add_option("--noise-seed", da.noise_seed, "Seed for --add-noise");

  std::string ll_model, ll_images;
  auto* loglik = app.add_subcommand("loglik", "Per-image mean patch log-likelihood (CSV)");
  loglik->add_option("--model", ll_model, "GGMM1 model")->required();
  loglik->add_option("--images", ll_images, "Directory of PGM images")->required();

  std::string sm_model, sm_out;
  std::size_t sm_n = 100;
  std::uint64_t sm_seed = 0;
  auto* sample = app.add_subcommand("sample", "Draw patches from a model");
  sample->add_option("--model", sm_model, "GGMM1 model")->required();
  sample->add_option("--n", sm_n, "Number of patches")->check(CLI::PositiveNumber);
  sample->add_option("--seed", sm_seed, "Random seed");
  sample->add_option("--out", sm_out, "Contact sheet PGM (raw values go next to it as .patches)")->required();

  std::string ma, mb;
  auto* metrics = app.add_subcommand("metrics", "PSNR and SSIM between two images");
  metrics->add_option("--a", ma, "First PGM")->required();
  metrics->add_option("--b", mb, "Second PGM")->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Exact versus approximate pipeline timings (CSV)");
  bench->add_option("--in", ba.in, "Clean PGM; noise is synthesized")->required();
  bench->add_option("--sigma", ba.sigma, "Noise standard deviation")->required()->check(CLI::PositiveNumber);
  bench->add_option("--model", ba.model, "GGMM1 model")->required();
  bench->add_option("--luts", ba.luts, "GGLUT1 table")->required();
  bench->add_option("--fraction", ba.fraction, "Fraction of patches per stage");
  bench->add_option("--seed", ba.seed, "Patch subsampling seed");
  bench->add_option("--noise-seed", ba.noise_seed, "Noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "ggmm: error: %s\n", e.what());
    return 2;
  }
  try {
    ggmm::configure_threads();
    if (*build) return cmd_build_luts(lut_out);
    if (*train) return cmd_train(ta);
    if (*denoise) return cmd_denoise(da);
    if (*loglik) return cmd_loglik(ll_model, ll_images);
    if (*sample) return cmd_sample(sm_model, sm_n, sm_seed, sm_out);
    if (*metrics) return cmd_metrics(ma, mb);
    if (*bench) return cmd_bench(ba);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ggmm: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
