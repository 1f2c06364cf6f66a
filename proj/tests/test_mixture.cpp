#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ggmm/ggd.hpp"
#include "ggmm/mixture.hpp"
#include "ggmm/parallel.hpp"
#include "ggmm/special.hpp"
#include "test_support.hpp"

using namespace ggmm;

namespace {

// Orthonormal basis whose last column is the constant direction, so that
// the other coordinates span zero-mean patches.
Eigen::MatrixXd centered_basis(Eigen::Index p, std::mt19937_64& eng) {
  Eigen::MatrixXd a = test::random_orthonormal(p, eng);
  a.col(0).setConstant(1.0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd out(p, p);
  out.leftCols(p - 1) = q.rightCols(p - 1);
  out.col(p - 1) = q.col(0);
  return out;
}

void center(PatchMatrix& z) { z.rowwise() -= z.colwise().mean(); }

// One component with a centered basis, shapes `nu` and scales 10 * 0.8^j.
GGMMModel single_component(Eigen::Index p, double nu, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  GGMMModel m;
  m.mode = nu == 2.0 ? MixtureMode::gmm : MixtureMode::ggmm;
  m.weights = {1.0};
  m.bases = {centered_basis(p, eng)};
  m.scales.resize(1, p);
  m.shapes = Eigen::MatrixXd::Constant(1, p, nu);
  for (Eigen::Index j = 0; j < p; ++j) m.scales(0, j) = 10.0 * std::pow(0.8, static_cast<double>(j));
  return m;
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_SUITE("mixture") {
  TEST_CASE("mode names") {
    for (auto m : {MixtureMode::ggmm, MixtureMode::gmm, MixtureMode::lmm, MixtureMode::hlmm})
      CHECK(parse_mixture_mode(to_string(m)) == m);
    CHECK(pinned_shape(MixtureMode::gmm) == 2.0);
    CHECK(pinned_shape(MixtureMode::lmm) == 1.0);
    CHECK(pinned_shape(MixtureMode::hlmm) == 0.5);
    CHECK_THROWS_AS(parse_mixture_mode("gauss"), std::invalid_argument);
  }

  TEST_CASE("component density at the origin") {
    GGMMModel m;
    m.mode = MixtureMode::gmm;
    m.weights = {1.0};
    m.bases = {Eigen::MatrixXd::Identity(64, 64)};
    m.scales = Eigen::MatrixXd::Ones(1, 64);
    m.shapes = Eigen::MatrixXd::Constant(1, 64, 2.0);
    CHECK(component_log_pdf(Eigen::VectorXd::Zero(64), m, 0) ==
          doctest::Approx(64 * std::log(1.0 / std::sqrt(2 * std::numbers::pi))).epsilon(1e-13));
    CHECK_THROWS_AS(component_log_pdf(Eigen::VectorXd::Zero(63), m, 0), std::invalid_argument);
    CHECK_THROWS_AS(component_log_pdf(Eigen::VectorXd::Zero(64), m, 1), std::invalid_argument);
  }

  TEST_CASE("basis sign flips leave the density unchanged") {
    auto m = test::random_model(3, 16, MixtureMode::ggmm, 4);
    std::mt19937_64 eng(5);
    Eigen::VectorXd z = Eigen::VectorXd::Random(16) * 30.0;
    const double before = component_log_pdf(z, m, 1);
    for (Eigen::Index j = 0; j < 16; j += 3) m.bases[1].col(j) *= -1.0;
    CHECK(component_log_pdf(z, m, 1) == doctest::Approx(before).epsilon(1e-13));
  }

  TEST_CASE("separable density equals the Gaussian matrix form") {
    const auto m = test::random_model(2, 12, MixtureMode::gmm, 8);
    const Eigen::MatrixXd& U = m.bases[0];
    const Eigen::VectorXd var = m.scales.row(0).transpose().array().square();
    const Eigen::MatrixXd cov = U * var.asDiagonal() * U.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    std::mt19937_64 eng(9);
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd z(12);
      for (auto& v : z) v = test::uniform(eng, -50, 50);
      const double quad = z.dot(llt.solve(z));
      const double direct = -0.5 * (12 * kLogTwoPi + logdet + quad);
      CHECK(component_log_pdf(z, m, 0) == doctest::Approx(direct).epsilon(1e-11));
    }
  }

  TEST_CASE("mixture likelihood identities") {
    const auto m = test::random_model(1, 10, MixtureMode::ggmm, 11);
    auto z = sample_model(m, 500, 12);
    double avg = 0.0;
    for (Eigen::Index i = 0; i < z.cols(); ++i) avg += component_log_pdf(z.col(i), m, 0);
    CHECK(model_log_likelihood(z, m) == doctest::Approx(avg / 500).epsilon(1e-12));

    auto split = test::random_model(3, 10, MixtureMode::ggmm, 13);
    const double base = model_log_likelihood(z, split);
    split.weights.push_back(split.weights[1] * 0.3);
    split.weights[1] *= 0.7;
    split.bases.push_back(split.bases[1]);
    split.scales.conservativeResize(4, Eigen::NoChange);
    split.shapes.conservativeResize(4, Eigen::NoChange);
    split.scales.row(3) = split.scales.row(1);
    split.shapes.row(3) = split.shapes.row(1);
    CHECK(std::abs(model_log_likelihood(z, split) - base) <= 1e-10);
  }

  TEST_CASE("model invariants are enforced") {
    auto m = test::random_model(2, 6, MixtureMode::ggmm, 14);
    CHECK_NOTHROW(m.validate());
    auto bad = m;
    bad.weights[0] += 1e-9;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = m;
    bad.bases[1](0, 0) += 1e-6;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = m;
    bad.scales(0, 2) = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = m;
    bad.shapes(1, 1) = 2.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }

  TEST_CASE("responsibilities are normalized") {
    const auto m = test::random_model(5, 16, MixtureMode::ggmm, 15);
    const auto z = sample_model(m, 3000, 16);
    const auto e = e_step(z, m);
    CHECK(e.resp.rows() == 5);
    CHECK(e.resp.cols() == 3000);
    CHECK((e.resp.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
    CHECK(e.resp.minCoeff() >= 0.0);
    CHECK(e.resp.maxCoeff() <= 1.0);
    // Far-out samples must not underflow to NaN.
    PatchMatrix far = z.leftCols(10) * 1e3;
    const auto f = e_step(far, m);
    CHECK(f.resp.allFinite());
    CHECK((f.resp.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
  }

  TEST_CASE("parallel kernels agree with the serial reference") {
    const auto m = test::random_model(4, 16, MixtureMode::ggmm, 17);
    const auto z = sample_model(m, 9000, 18);
    const auto fast = e_step(z, m);
    const auto slow = reference::e_step(z, m);
    CHECK(max_rel(fast.resp, slow.resp) <= 1e-10);
    CHECK(fast.mean_log_likelihood == doctest::Approx(slow.mean_log_likelihood).epsilon(1e-12));

    const auto s1 = accumulate_second_moments(z, fast.resp);
    const auto s2 = reference::accumulate_second_moments(z, fast.resp);
    std::vector<double> masses;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(s1[k].mass == doctest::Approx(s2[k].mass).epsilon(1e-11));
      CHECK(max_rel(s1[k].second_moment, s2[k].second_moment) <= 1e-11);
      masses.push_back(s1[k].mass);
    }
    const auto c1 = accumulate_abs_moments(z, fast.resp, m.bases, masses);
    const auto c2 = reference::accumulate_abs_moments(z, fast.resp, m.bases, masses);
    CHECK(max_rel(c1, c2) <= 1e-11);
  }

  TEST_CASE("kernels are bit-identical across thread counts") {
    const auto m = test::random_model(3, 16, MixtureMode::ggmm, 19);
    const auto z = sample_model(m, 10000, 20);
    set_threads(1);
    const auto a = e_step(z, m);
    const auto sa = accumulate_second_moments(z, a.resp);
    set_threads(4);
    const auto b = e_step(z, m);
    const auto sb = accumulate_second_moments(z, b.resp);
    set_threads(0);
    CHECK(a.mean_log_likelihood == b.mean_log_likelihood);
    CHECK(a.resp == b.resp);
    for (std::size_t k = 0; k < 3; ++k) CHECK(sa[k].second_moment == sb[k].second_moment);
  }

  TEST_CASE("covariance decomposition") {
    std::mt19937_64 eng(21);
    const Eigen::MatrixXd U = test::random_orthonormal(10, eng);
    Eigen::VectorXd s(10);
    for (Eigen::Index j = 0; j < 10; ++j) s[j] = 5.0 / (1.0 + static_cast<double>(j));
    const Eigen::MatrixXd cov = U * s.array().square().matrix().asDiagonal() * U.transpose();
    Eigen::MatrixXd basis;
    Eigen::VectorXd scales;
    decompose_covariance(cov, basis, scales);
    CHECK((basis.transpose() * basis - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(max_rel(scales, s) <= 1e-12);
    const Eigen::MatrixXd back = basis * scales.array().square().matrix().asDiagonal() * basis.transpose();
    CHECK((back - cov).norm() / cov.norm() <= 1e-12);

    Eigen::MatrixXd rank1 = Eigen::MatrixXd::Zero(4, 4);
    rank1(0, 0) = 4.0;
    decompose_covariance(rank1, basis, scales);
    CHECK(scales[0] == doctest::Approx(2.0));
    CHECK(scales[3] == doctest::Approx(2.0 * 1e-4).epsilon(1e-9));
  }

  TEST_CASE("gaussian fit recovers the scales") {
    const auto truth = single_component(8, 2.0, 22);
    auto z = sample_model(truth, 50000, 23);
    center(z);
    EMOptions opt;
    opt.K = 1;
    opt.mode = MixtureMode::gmm;
    opt.iters = 20;
    const auto fit = em_fit(z, opt);
    for (Eigen::Index j = 0; j < 7; ++j) CHECK(std::abs(fit.scales(0, j) / truth.scales(0, j) - 1.0) <= 0.03);
    CHECK((fit.shapes.array() == 2.0).all());
  }

  TEST_CASE("moment step recovers a heavy-tailed shape") {
    const auto truth = single_component(8, 0.6, 24);
    auto z = sample_model(truth, 40000, 25);
    center(z);
    EMOptions opt;
    opt.K = 1;
    opt.mode = MixtureMode::ggmm;
    opt.iters = 5;
    const auto fit = em_fit(z, opt);
    for (Eigen::Index j = 0; j < 7; ++j) {
      CAPTURE(j);
      CHECK(std::abs(fit.shapes(0, j) - 0.6) <= 0.1);
    }
  }

  TEST_CASE("gaussian fit is a fixed point of one iteration") {
    const auto truth = single_component(8, 2.0, 26);
    auto z = sample_model(truth, 20000, 27);
    center(z);
    GGMMModel start = truth;
    Eigen::VectorXd s;
    decompose_covariance(z * z.transpose() / static_cast<double>(z.cols()), start.bases[0], s);
    start.scales.row(0) = s.transpose();
    EMOptions opt;
    opt.K = 1;
    opt.mode = MixtureMode::gmm;
    opt.iters = 1;
    opt.init = start;
    const auto next = em_fit(z, opt);
    CHECK(max_rel(next.scales, start.scales) <= 1e-6);
    const Eigen::MatrixXd a = start.bases[0] * s.array().square().matrix().asDiagonal() * start.bases[0].transpose();
    const Eigen::VectorXd s2 = next.scales.row(0).transpose();
    const Eigen::MatrixXd b = next.bases[0] * s2.array().square().matrix().asDiagonal() * next.bases[0].transpose();
    CHECK((a - b).norm() / a.norm() <= 1e-6);
  }

  TEST_CASE("em iterations keep the model valid and reconstruct covariances") {
    const auto truth = test::random_model(3, 8, MixtureMode::ggmm, 28);
    auto z = sample_model(truth, 20000, 29);
    center(z);
    for (auto mode : {MixtureMode::ggmm, MixtureMode::gmm, MixtureMode::lmm, MixtureMode::hlmm}) {
      CAPTURE(to_string(mode));
      EMOptions opt;
      opt.K = 3;
      opt.mode = mode;
      opt.iters = 0;
      opt.seed = 3;
      GGMMModel cur = em_fit(z, opt);
      CHECK_NOTHROW(cur.validate());
      for (int it = 0; it < 4; ++it) {
        opt.iters = 1;
        opt.init = cur;
        const auto next = em_fit(z, opt);
        CHECK_NOTHROW(next.validate());
        CHECK(next.mode == mode);
        CHECK(next.shapes.minCoeff() >= kMinShape);
        CHECK(next.shapes.maxCoeff() <= kMaxShape);
        if (mode != MixtureMode::ggmm) CHECK((next.shapes.array() == pinned_shape(mode)).all());
        const auto e = e_step(z, cur);
        const auto stats = accumulate_second_moments(z, e.resp);
        for (std::size_t k = 0; k < 3; ++k) {
          const Eigen::VectorXd s = next.scales.row(static_cast<Eigen::Index>(k)).transpose();
          const Eigen::MatrixXd rec =
              next.bases[k] * s.array().square().matrix().asDiagonal() * next.bases[k].transpose();
          const Eigen::MatrixXd target = stats[k].second_moment / stats[k].mass;
          CHECK((rec - target).norm() / target.norm() <= 1e-6);
        }
        cur = next;
      }
    }
  }

  TEST_CASE("gaussian likelihood does not decrease") {
    const auto truth = test::random_model(4, 8, MixtureMode::ggmm, 30);
    auto z = sample_model(truth, 20000, 31);
    center(z);
    EMOptions opt;
    opt.K = 4;
    opt.mode = MixtureMode::gmm;
    opt.iters = 15;
    opt.seed = 5;
    EMTrace trace;
    em_fit(z, opt, &trace);
    REQUIRE(trace.log_likelihood.size() == 15);
    CHECK(trace.respawns == 0);
    for (std::size_t i = 1; i < trace.log_likelihood.size(); ++i)
      CHECK(trace.log_likelihood[i] >= trace.log_likelihood[i - 1] - 1e-9 * std::abs(trace.log_likelihood[i - 1]));
  }

  TEST_CASE("training is deterministic per seed") {
    const auto truth = test::random_model(3, 8, MixtureMode::ggmm, 32);
    auto z = sample_model(truth, 5000, 33);
    center(z);
    EMOptions opt;
    opt.K = 3;
    opt.iters = 3;
    opt.seed = 7;
    const auto a = em_fit(z, opt), b = em_fit(z, opt);
    CHECK(a.weights == b.weights);
    CHECK(a.scales == b.scales);
    CHECK(a.shapes == b.shapes);
    opt.seed = 8;
    CHECK(em_fit(z, opt).scales != a.scales);
  }

  TEST_CASE("training rejects uncentered or insufficient data") {
    PatchMatrix z = PatchMatrix::Random(8, 100);
    EMOptions opt;
    opt.K = 2;
    opt.iters = 1;
    CHECK_THROWS_AS(em_fit(z, opt), std::invalid_argument);
    center(z);
    CHECK_NOTHROW(em_fit(z, opt));
    opt.K = 101;
    CHECK_THROWS_AS(em_fit(z, opt), std::invalid_argument);
    CHECK_THROWS_AS(em_fit(PatchMatrix(8, 0), opt), std::invalid_argument);
  }

  TEST_CASE("empty components are respawned") {
    // Two identical clusters of samples: a third component cannot keep mass.
    PatchMatrix z(4, 200);
    for (Eigen::Index i = 0; i < 200; ++i) z.col(i) << 1, -1, (i % 2 ? 1 : -1), (i % 2 ? -1 : 1);
    EMOptions opt;
    opt.K = 3;
    opt.mode = MixtureMode::gmm;
    opt.iters = 3;
    EMTrace trace;
    const auto m = em_fit(z, opt, &trace);
    CHECK(trace.respawns > 0);
    CHECK_NOTHROW(m.validate());
  }

  TEST_CASE("sampling statistics") {
    GGMMModel m;
    m.mode = MixtureMode::ggmm;
    m.weights = {1.0};
    m.bases = {Eigen::MatrixXd::Identity(4, 4)};
    m.scales.resize(1, 4);
    m.scales << 1.0, 2.0, 5.0, 0.5;
    m.shapes.resize(1, 4);
    m.shapes << 2.0, 1.0, 0.6, 1.5;
    const auto z = sample_model(m, 100000, 34);
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double sd = std::sqrt(z.row(j).squaredNorm() / 100000.0);
      CHECK(std::abs(sd / m.scales(0, j) - 1.0) <= 0.02);
    }
    CHECK(sample_model(m, 100, 35) == sample_model(m, 100, 35));
    CHECK(sample_model(m, 100, 35) != sample_model(m, 100, 36));

    const auto mix = test::random_model(4, 6, MixtureMode::ggmm, 37);
    std::vector<std::size_t> labels;
    const std::size_t n = 40000;
    sample_model(mix, n, 38, &labels);
    for (std::size_t k = 0; k < 4; ++k) {
      const double count = static_cast<double>(std::count(labels.begin(), labels.end(), k));
      const double w = mix.weights[k];
      CHECK(std::abs(count - n * w) <= 3.0 * std::sqrt(n * w * (1 - w)));
    }
  }
}
