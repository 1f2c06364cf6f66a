#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>

#include "ggmm/io.hpp"
#include "test_support.hpp"

using namespace ggmm;

namespace {

std::string lut_text(const DiscrepancyLUT& lut) {
  std::ostringstream out;
  write_lut(out, lut);
  return out.str();
}

std::string model_text(const GGMMModel& m) {
  std::ostringstream out;
  write_model(out, m);
  return out.str();
}

ImageBuffer gradient(std::size_t w, std::size_t h) {
  ImageBuffer img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img.at(x, y) = static_cast<double>((x * 7 + y * 3) % 256);
  return img;
}

}  // namespace

TEST_SUITE("cli_io") {
  TEST_CASE("lookup table round trip") {
    const auto& lut = test::golden_lut();
    const std::string text = lut_text(lut);
    CHECK(text.rfind("GGLUT1\nnu 100 0.3 2.0 linear\nlambda 100 1e-3 1e3 log\n", 0) == 0);
    std::istringstream in(text);
    const auto back = read_lut(in);
    CHECK(back.gamma0 == lut.gamma0);
    CHECK(back.beta1 == lut.beta1);
    CHECK(back.beta2 == lut.beta2);
    CHECK(back.h == lut.h);
    CHECK(lut_text(back) == text);
  }

  TEST_CASE("model round trip") {
    for (auto mode : {MixtureMode::ggmm, MixtureMode::gmm, MixtureMode::lmm, MixtureMode::hlmm}) {
      const auto m = test::random_model(3, 16, mode, 1);
      const std::string text = model_text(m);
      CHECK(text.rfind("GGMM1\n3 16 " + to_string(mode) + "\n", 0) == 0);
      std::istringstream in(text);
      const auto back = read_model(in);
      CHECK(back.mode == m.mode);
      CHECK(back.weights == m.weights);
      CHECK(back.scales == m.scales);
      CHECK(back.shapes == m.shapes);
      for (std::size_t k = 0; k < 3; ++k) CHECK(back.bases[k] == m.bases[k]);
      CHECK(model_text(back) == text);
    }
  }

  TEST_CASE("patch file round trip") {
    std::mt19937_64 eng(2);
    PatchMatrix z(5, 7);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = test::uniform(eng, -1e3, 1e3);
    std::ostringstream out;
    write_patches(out, z);
    CHECK(out.str().rfind("PATCH1\n5 7\n", 0) == 0);
    std::istringstream in(out.str());
    CHECK(read_patches(in) == z);
  }

  TEST_CASE("pgm round trip is lossless") {
    const auto img = gradient(37, 19);
    std::ostringstream out;
    write_pgm(out, img);
    CHECK(out.str().rfind("P5\n37 19\n255\n", 0) == 0);
    std::istringstream in(out.str());
    const auto back = read_pgm(in);
    CHECK(back.width == 37);
    CHECK(back.height == 19);
    CHECK(back.pixels == img.pixels);

    const auto camera = load_pgm(test::test_data_path("test/camera.pgm"));
    const auto path = (std::filesystem::temp_directory_path() / "ggmm_io_roundtrip.pgm").string();
    save_pgm(path, camera);
    const auto again = load_pgm(path);
    CHECK(again.pixels == camera.pixels);
    std::remove(path.c_str());
  }

  TEST_CASE("quantization happens only when saving") {
    ImageBuffer img(3, 1);
    img.pixels = {-4.2, 127.5, 300.0};
    CHECK(quantize(img) == std::vector<std::uint8_t>{0, 128, 255});
    std::ostringstream out;
    write_pgm(out, img);
    std::istringstream in(out.str());
    CHECK(read_pgm(in).pixels == std::vector<double>{0.0, 128.0, 255.0});
  }

  TEST_CASE("malformed files are rejected") {
    auto fails_lut = [](const std::string& s) {
      std::istringstream in(s);
      CHECK_THROWS_AS(read_lut(in), FormatError);
    };
    fails_lut("");
    fails_lut("GGLUT2\n");
    fails_lut("GGLUT1\nnu 50 0.3 2.0 linear\n");
    std::string text = lut_text(test::golden_lut());
    fails_lut(text.substr(0, text.size() / 2));
    std::string corrupt = text;
    corrupt.replace(corrupt.find("beta1"), 5, "beta9");
    fails_lut(corrupt);

    auto fails_model = [](const std::string& s) {
      std::istringstream in(s);
      CHECK_THROWS_AS(read_model(in), FormatError);
    };
    fails_model("GGMM1\n");
    fails_model("GGMM1\n2 4 gauss\n");
    const std::string m = model_text(test::random_model(2, 4, MixtureMode::ggmm, 3));
    fails_model(m.substr(0, m.size() - 40));
    std::string bad_weight = m;
    bad_weight.replace(bad_weight.find('\n', 6) + 1, 1, "9");
    fails_model(bad_weight);

    auto fails_pgm = [](const std::string& s) {
      std::istringstream in(s);
      CHECK_THROWS_AS(read_pgm(in), FormatError);
    };
    fails_pgm("P2\n2 2\n255\n0 0 0 0");
    fails_pgm("P5\n2 2\n65535\n");
    fails_pgm("P5\n2 2\n255\n\x01\x02");
    fails_pgm("P5\n0 2\n255\n");

    std::istringstream patches("PATCH1\n4 2\n1 2 3\n");
    CHECK_THROWS_AS(read_patches(patches), FormatError);
    CHECK_THROWS_AS(load_model("/nonexistent/model.txt"), FormatError);
  }

  TEST_CASE("pgm comments are skipped") {
    std::istringstream in(std::string("P5\n# comment\n2 1\n255\n") + "\x05\x06");
    const auto img = read_pgm(in);
    CHECK(img.pixels == std::vector<double>{5.0, 6.0});
  }

  TEST_CASE("training patches") {
    const auto img = gradient(20, 12);
    const auto z = image_patches(img, 8, 4);
    CHECK(z.rows() == 64);
    CHECK(z.cols() == 4 * 2);
    CHECK(z.colwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
    const auto a = load_training_patches(test::test_data_path("train"), 8, 4, 5);
    const auto b = load_training_patches(test::test_data_path("train"), 8, 4, 5);
    CHECK(a.cols() >= 100000);
    CHECK(a == b);
    CHECK(load_training_patches(test::test_data_path("train"), 8, 4, 6) != a);

    const auto path = (std::filesystem::temp_directory_path() / "ggmm_io_patches.txt").string();
    save_patches(path, z);
    CHECK(load_training_patches(path, 8, 4, 0) == z);
    CHECK_THROWS_AS(load_training_patches(path, 4, 4, 0), FormatError);
    std::remove(path.c_str());
  }

  TEST_CASE("psnr") {
    const auto a = gradient(32, 32);
    auto b = a;
    for (auto& p : b.pixels) p += 16.0;
    CHECK(psnr(a, b) == doctest::Approx(24.0486).epsilon(1e-5));
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(psnr(a, a) == 99.0);
    CHECK_THROWS_AS(psnr(a, gradient(31, 32)), std::invalid_argument);
  }

  TEST_CASE("ssim") {
    const auto a = crop(load_pgm(test::test_data_path("test/camera.pgm")), 0, 0, 96, 96);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const auto n20 = add_gaussian_noise(a, 20.0, 7);
    CHECK(ssim(a, n20) == ssim(n20, a));
    double prev = 1.0;
    for (double s : {5.0, 20.0, 60.0}) {
      const double v = ssim(a, add_gaussian_noise(a, s, 7));
      CHECK(v > 0.0);
      CHECK(v < prev);
      prev = v;
    }
    CHECK_THROWS_AS(ssim(a, crop(a, 0, 0, 90, 96)), std::invalid_argument);
    CHECK_THROWS_AS(ssim(ImageBuffer(10, 10), ImageBuffer(10, 10)), std::invalid_argument);
  }

  TEST_CASE("noise synthesis is seeded and unclipped") {
    const ImageBuffer flat(64, 64, 0.0);
    const auto a = add_gaussian_noise(flat, 10.0, 1);
    CHECK(a.pixels == add_gaussian_noise(flat, 10.0, 1).pixels);
    CHECK(a.pixels != add_gaussian_noise(flat, 10.0, 2).pixels);
    CHECK(*std::min_element(a.pixels.begin(), a.pixels.end()) < 0.0);
    double sq = 0.0;
    for (double p : a.pixels) sq += p * p;
    CHECK(std::sqrt(sq / a.size()) == doctest::Approx(10.0).epsilon(0.05));
  }
}
