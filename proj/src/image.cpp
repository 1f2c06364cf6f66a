#include "ggmm/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ggmm {

std::vector<std::uint8_t> quantize(const ImageBuffer& img) {
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0, 255.0)));
  return out;
}

ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  ImageBuffer out = img;
  for (double& v : out.pixels) v += noise(eng);
  return out;
}

ImageBuffer crop(const ImageBuffer& img, std::size_t x0, std::size_t y0, std::size_t w,
                 std::size_t h) {
  if (x0 + w > img.width || y0 + h > img.height)
    throw std::invalid_argument("crop window exceeds the image");
  ImageBuffer out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("image dimensions differ");
}

constexpr int kWindow = 11;
constexpr double kWindowStd = 1.5;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kWindowStd * kWindowStd));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable 'valid' filtering of `src` (w x h) with the 1-D window.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t w, std::size_t h,
                                 const std::array<double, kWindow>& k) {
  const std::size_t ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(ow * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * src[y * w + x + i];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b);
  if (a.size() == 0) throw std::invalid_argument("empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    sse += d * d;
  }
  if (sse == 0.0) return 99.0;
  const double mse = sse / static_cast<double>(a.size());
  return std::min(99.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b);
  if (a.width < kWindow || a.height < kWindow)
    throw std::invalid_argument("ssim needs images of at least 11x11 pixels");
  const auto k = gaussian_window();
  const std::size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.pixels[i] * a.pixels[i];
    bb[i] = b.pixels[i] * b.pixels[i];
    ab[i] = a.pixels[i] * b.pixels[i];
  }
  const auto mu_a = filter_valid(a.pixels, a.width, a.height, k);
  const auto mu_b = filter_valid(b.pixels, a.width, a.height, k);
  const auto s_aa = filter_valid(aa, a.width, a.height, k);
  const auto s_bb = filter_valid(bb, a.width, a.height, k);
  const auto s_ab = filter_valid(ab, a.width, a.height, k);
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace ggmm
