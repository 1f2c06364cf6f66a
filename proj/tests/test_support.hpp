#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ggmm/discrepancy.hpp"
#include "ggmm/io.hpp"
#include "ggmm/mixture.hpp"

namespace ggmm::test {

inline std::string data_path(const std::string& name) { return std::string(GGMM_DATA_DIR) + "/" + name; }
inline std::string test_data_path(const std::string& name) {
  return std::string(GGMM_TEST_DATA_DIR) + "/" + name;
}

/// The committed lookup table, loaded once.
inline const DiscrepancyLUT& golden_lut() {
  static const DiscrepancyLUT lut = load_lut(data_path("ggmm_lut.txt"));
  return lut;
}

inline double log_uniform(std::mt19937_64& eng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(eng));
}

inline double uniform(std::mt19937_64& eng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(eng);
}

inline Eigen::MatrixXd random_orthonormal(Eigen::Index p, std::mt19937_64& eng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(p, p);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(eng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
}

/// Random model with decaying scales, for pipeline tests that do not need
/// a trained prior.
inline GGMMModel random_model(std::size_t K, Eigen::Index P, MixtureMode mode, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  GGMMModel m;
  m.mode = mode;
  m.weights.resize(K);
  m.scales.resize(static_cast<Eigen::Index>(K), P);
  m.shapes.resize(static_cast<Eigen::Index>(K), P);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    m.weights[k] = uniform(eng, 0.5, 1.5);
    total += m.weights[k];
    m.bases.push_back(random_orthonormal(P, eng));
    for (Eigen::Index j = 0; j < P; ++j) {
      const auto r = static_cast<Eigen::Index>(k);
      m.scales(r, j) = 60.0 * std::pow(0.9, static_cast<double>(j)) * uniform(eng, 0.5, 1.5);
      m.shapes(r, j) = mode == MixtureMode::ggmm ? uniform(eng, 0.3, 2.0) : pinned_shape(mode);
    }
  }
  for (double& w : m.weights) w /= total;
  return m;
}

}  // namespace ggmm::test
