#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mudlab/decoder_design.hpp"
#include "mudlab/rng.hpp"

using namespace mudlab;

namespace {

CodeMatrix toy() {
  Eigen::MatrixXd m(2, 2);
  m << 1, 1, 1, -1;
  return CodeMatrix(m);
}

// Objective written out directly from the definitions of alpha, beta, gamma.
double objective_by_hand(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C, double eps, double mu,
                         double M0, double Ups) {
  double a = 0, b = 0, g = 0;
  for (Eigen::Index l = 0; l < D.cols(); ++l) {
    double s = 0;
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      const double c = D.col(l).dot(C.col(j));
      s += c;
      if (j != l) b = std::max(b, std::abs(c));
    }
    a = std::max(a, std::abs(s));
    g = std::max(g, D.col(l).norm());
  }
  return eps * mu * a + M0 * b + Ups * g;
}

// Independent minimizer for the 2x2 orthogonal toy: each column is
// C_l / 2 + s_l * C_{1-l} / 2, which spans the constraint set exactly. The
// objective is convex in (s_0, s_1); a shrinking-grid pattern search finds
// its minimum.
double toy_oracle(double eps, double mu, double M0, double Ups) {
  const Eigen::MatrixXd C = toy().entries();
  auto f = [&](double s0, double s1) {
    Eigen::MatrixXd D(2, 2);
    D.col(0) = C.col(0) / 2 + s0 * C.col(1) / 2;
    D.col(1) = C.col(1) / 2 + s1 * C.col(0) / 2;
    return objective_by_hand(D, C, eps, mu, M0, Ups);
  };
  double c0 = 0, c1 = 0, w = 4, best = f(0, 0);
  for (int round = 0; round < 30; ++round) {
    double b0 = c0, b1 = c1;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        const double s0 = c0 + w * i / 20, s1 = c1 + w * j / 20;
        const double v = f(s0, s1);
        if (v < best) best = v, b0 = s0, b1 = s1;
      }
    c0 = b0, c1 = b1, w /= 4;
  }
  return best;
}

}  // namespace

TEST_SUITE("decoder_design") {

TEST_CASE("scaled decoder on the orthogonal toy") {
  const auto C = toy();
  const auto D = scaled_code_decoder(C);
  CHECK(D.provenance == DecoderKind::scaled);
  CHECK(D.entries.isApprox(C.entries() / 2));
  CHECK(normalization_residual(D.entries, C) < 1e-15);
  const auto s = decoder_objective(D.entries, C, 0.5, 0.1, 1, 1);
  CHECK(s.alpha == doctest::Approx(1.0));
  CHECK(s.beta == doctest::Approx(0.0));
  CHECK(s.gamma == doctest::Approx(std::sqrt(2.0) / 2));
  CHECK(s.objective == doctest::Approx(0.05 + std::sqrt(2.0) / 2));
}

TEST_CASE("coherence statistics are homogeneous of degree one") {
  const auto C = generate_code_matrix(8, 16, 2);
  const Eigen::MatrixXd D = Eigen::MatrixXd::Random(8, 16);
  const auto a = decoder_objective(D, C, 0.3, 0.02, 3, 0.7);
  const auto b = decoder_objective(2.5 * D, C, 0.3, 0.02, 3, 0.7);
  CHECK(b.alpha == doctest::Approx(2.5 * a.alpha));
  CHECK(b.beta == doctest::Approx(2.5 * a.beta));
  CHECK(b.gamma == doctest::Approx(2.5 * a.gamma));
  CHECK(a.beta >= 0.0);
  CHECK(a.gamma > 0.0);
  CHECK(a.objective == doctest::Approx(objective_by_hand(D, C.entries(), 0.3, 0.02, 3, 0.7)));
}

TEST_CASE("MMSE: eigendecomposition and direct inverse agree") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto C = generate_code_matrix(8, 16, seed);
    const double delta = 0.3 * seed, sv2 = 0.02;
    const auto D = design_decoder_mmse(C, delta, sv2);
    // Oracle: explicit inverse of the regularized correlation matrix.
    Eigen::MatrixXd A = delta * C.entries() * C.entries().transpose() + 0.5 * sv2 * Eigen::MatrixXd::Identity(8, 8);
    Eigen::MatrixXd O = A.fullPivLu().inverse() * C.entries();
    for (Eigen::Index l = 0; l < 16; ++l) O.col(l) /= C.column(l).dot(O.col(l));
    CHECK((D.entries - O).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((design_decoder_mmse_direct(C, delta, sv2) - O).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("MMSE columns minimize the quadratic on their constraint hyperplane") {
  const auto C = generate_code_matrix(16, 32, 12);
  const double delta = 0.05, sv2 = 0.02;
  const auto D = design_decoder_mmse(C, delta, sv2).entries;
  const Eigen::MatrixXd R = C.entries() * C.entries().transpose();
  auto q = [&](const Eigen::VectorXd& d) { return delta * d.dot(R * d) + d.squaredNorm() * sv2 / 2; };
  Rng rng(13);
  for (Eigen::Index l : {0, 9, 31}) {
    const Eigen::VectorXd c = C.column(l);
    const double base = q(D.col(l));
    for (int k = 0; k < 50; ++k) {
      Eigen::VectorXd r(16);
      for (auto& v : r) v = rng.standard_normal();
      r -= (r.dot(c) / c.squaredNorm()) * c;  // stay on d'C_l = 1
      for (double t : {1e-3, -1e-3, 0.5}) CHECK(q(D.col(l) + t * r) >= base - 1e-12);
    }
  }
}

TEST_CASE("MMSE internals reconstruct R") {
  const auto C = generate_code_matrix(8, 16, 3);
  const auto m = mmse_internals(C, 0.4);
  CHECK((m.U * m.lambda.asDiagonal() * m.U.transpose() - m.R).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((m.U * m.V - C.entries()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(mmse_delta(0.5, 0.1, 0.3) == doctest::Approx(0.5 * (1 + 0.3 - 0.2)));
}

TEST_CASE("MMSE: vanishing delta tends to C / L") {
  const auto C = generate_code_matrix(8, 16, 4);
  const auto D = design_decoder_mmse(C, 1e-12, 0.1);
  CHECK((D.entries - C.entries() / 8).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(design_decoder_mmse(C, 0, 0), std::invalid_argument);
}

TEST_CASE("MMSE normalization at L=144, K=256") {
  const auto C = generate_code_matrix(144, 256, 5);
  const auto D = design_decoder_mmse(C, mmse_delta(10.0 / 256, 0.0039, 3.2e-4), 1e-4);
  CHECK(normalization_residual(D.entries, C) < 1e-10);
}

TEST_CASE("Decoder-I beats the scaled baseline and stays feasible") {
  const auto C = generate_code_matrix(16, 32, 6);
  const double eps = 10.0 / 32, mu = 0.0137, M0 = 10, Ups = 1;
  const auto opt = design_decoder_optimal(C, eps, mu, M0, Ups);
  const auto base = decoder_objective(C.entries() / 16, C, eps, mu, M0, Ups);
  CHECK(opt.stats.objective <= base.objective + 1e-12);
  CHECK(opt.equality_residual <= 1e-6);
  CHECK(normalization_residual(opt.decoder.entries, C) <= 1e-6);
  CHECK(opt.decoder.provenance == DecoderKind::decoder_i);
  CHECK(opt.stats.objective ==
        doctest::Approx(objective_by_hand(opt.decoder.entries, C.entries(), eps, mu, M0, Ups)));
}

TEST_CASE("Decoder-I on the 2x2 toy matches an independent minimizer") {
  const auto C = toy();
  for (auto [eps, mu, M0, Ups] : {std::tuple{0.5, 0.0137, 1.0, 1.0}, std::tuple{1.0, 0.8, 1.0, 0.1},
                                  std::tuple{1.0, 0.5, 2.0, 0.05}}) {
    const auto opt = design_decoder_optimal(C, eps, mu, M0, Ups);
    const double oracle = toy_oracle(eps, mu, M0, Ups);
    CHECK(opt.stats.objective == doctest::Approx(oracle).epsilon(1e-4));
    CHECK(normalization_residual(opt.decoder.entries, C) <= 1e-6);
  }
  const auto first = design_decoder_optimal(C, 0.5, 0.0137, 1.0, 1.0);
  CHECK(first.stats.beta < 1e-4);
}

TEST_CASE("Decoder-I input validation") {
  const auto C = toy();
  CHECK_THROWS_AS(design_decoder_optimal(C, -1, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(design_decoder_optimal(C, 0.5, 0, 0.5, 1), std::invalid_argument);
}

}  // TEST_SUITE
