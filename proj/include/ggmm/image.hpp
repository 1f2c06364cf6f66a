#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ggmm {

/// Row-major grayscale image with real intensities (nominally [0, 255]).
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }
};

/// Clamps to [0, 255] and rounds to the nearest integer.
std::vector<std::uint8_t> quantize(const ImageBuffer& img);

/// Adds N(0, sigma^2) noise in real arithmetic (no clipping).
ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed);

ImageBuffer crop(const ImageBuffer& img, std::size_t x0, std::size_t y0, std::size_t w,
                 std::size_t h);

/// 10 log10(255^2 / MSE), capped at 99 dB for identical images. Throws
/// std::invalid_argument on dimension mismatch.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Mean SSIM with an 11x11 Gaussian window (std 1.5), C1 = (0.01*255)^2,
/// C2 = (0.03*255)^2, over valid window positions.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace ggmm
