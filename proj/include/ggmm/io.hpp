#pragma once

#include <iosfwd>
#include <stdexcept>
#include <cstdint>
#include <string>
#include <vector>

#include "ggmm/discrepancy.hpp"
#include "ggmm/image.hpp"
#include "ggmm/mixture.hpp"

namespace ggmm {

/// Malformed or unreadable file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text formats write reals with 17 significant digits so that reading back
// reproduces every double exactly.

void write_lut(std::ostream& out, const DiscrepancyLUT& lut);
DiscrepancyLUT read_lut(std::istream& in);
void save_lut(const std::string& path, const DiscrepancyLUT& lut);
DiscrepancyLUT load_lut(const std::string& path);

void write_model(std::ostream& out, const GGMMModel& model);
GGMMModel read_model(std::istream& in);
void save_model(const std::string& path, const GGMMModel& model);
GGMMModel load_model(const std::string& path);

void write_patches(std::ostream& out, const PatchMatrix& patches);
PatchMatrix read_patches(std::istream& in);
void save_patches(const std::string& path, const PatchMatrix& patches);
PatchMatrix load_patches(const std::string& path);

/// Binary 8-bit PGM (P5). Saving clamps and rounds.
ImageBuffer read_pgm(std::istream& in);
void write_pgm(std::ostream& out, const ImageBuffer& img);
ImageBuffer load_pgm(const std::string& path);
void save_pgm(const std::string& path, const ImageBuffer& img);

/// Sorted paths of the *.pgm files in a directory.
std::vector<std::string> list_pgm_files(const std::string& dir);

/// Mean-removed edge x edge patches at the given stride, one per column.
PatchMatrix image_patches(const ImageBuffer& img, std::size_t edge, std::size_t stride);

/// Training patches from a directory of PGM images (stride `stride`,
/// shuffled by `seed`) or from a PATCH1 file.
PatchMatrix load_training_patches(const std::string& source, std::size_t edge,
                                  std::size_t stride, std::uint64_t seed);

}  // namespace ggmm
