#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mudlab/channel_model.hpp"
#include "mudlab/sparse_tls.hpp"

using namespace mudlab;

namespace {

struct Instance {
  Eigen::MatrixXd C, Q;
  Eigen::VectorXd y, w;
};

Instance random_instance(std::uint64_t seed, Eigen::Index L = 6, Eigen::Index K = 10) {
  Rng rng(seed);
  Instance in;
  in.C = generate_code_matrix(L, K, seed).entries();
  in.Q.resize(L, K);
  for (auto& v : in.Q.reshaped()) v = 0.1 * rng.standard_normal();
  in.y.resize(L);
  for (auto& v : in.y) v = rng.standard_normal();
  in.w.resize(K);
  for (auto& v : in.w) v = 0.5 + 2 * rng.uniform();
  return in;
}

// G(Q) = ||y - (C - Q) x||^2 + ||Q||_F^2 for fixed x.
double g_of_q(const Eigen::MatrixXd& C, const Eigen::MatrixXd& Q, const Eigen::VectorXd& x,
              const Eigen::VectorXd& y) {
  return (y - (C - Q) * x).squaredNorm() + Q.squaredNorm();
}

std::vector<Eigen::Index> sorted(std::vector<Eigen::Index> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Number of 0/1 vectors with at most max_size ones and C x = y.
int binary_solutions(const Eigen::MatrixXd& C, const Eigen::VectorXd& y, int max_size) {
  int count = 0;
  std::vector<int> idx;
  auto rec = [&](auto&& self, int start, const Eigen::VectorXd& r) -> void {
    if (r.norm() < 1e-9) ++count;
    if (static_cast<int>(idx.size()) == max_size) return;
    for (int j = start; j < C.cols(); ++j) {
      idx.push_back(j);
      self(self, j + 1, r - C.col(j));
      idx.pop_back();
    }
  };
  rec(rec, 0, y);
  return count;
}

}  // namespace

TEST_SUITE("sparse_tls") {

TEST_CASE("Q update: trivial cases") {
  const auto in = random_instance(1);
  CHECK(q_update(Eigen::VectorXd::Zero(10), in.C, in.y).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(10);
  x(2) = 1;
  x(7) = 1;
  const Eigen::VectorXd y = in.C * x;
  CHECK(q_update(x, in.C, y).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("Q update is a stationary point (finite differences)") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto in = random_instance(seed);
    Rng rng(seed + 100);
    Eigen::VectorXd x(10);
    for (auto& v : x) v = rng.standard_normal();
    const Eigen::MatrixXd Q = q_update(x, in.C, in.y);
    const double h = 1e-6;
    double worst = 0;
    for (Eigen::Index i = 0; i < Q.size(); ++i) {
      Eigen::MatrixXd Qp = Q, Qm = Q;
      Qp.reshaped()(i) += h;
      Qm.reshaped()(i) -= h;
      const double d = (g_of_q(in.C, Qp, x, in.y) - g_of_q(in.C, Qm, x, in.y)) / (2 * h);
      worst = std::max(worst, std::abs(d));
    }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("Q update beats random perturbations") {
  Rng rng(71);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto in = random_instance(seed);
    Eigen::VectorXd x(10);
    for (auto& v : x) v = rng.standard_normal();
    const Eigen::MatrixXd Q = q_update(x, in.C, in.y);
    const double base = g_of_q(in.C, Q, x, in.y);
    for (int k = 0; k < 50; ++k) {
      Eigen::MatrixXd dQ(6, 10);
      for (auto& v : dQ.reshaped()) v = rng.standard_normal();
      dQ *= (k % 2 ? 1e-3 : 1.0) / dQ.norm();
      CHECK(g_of_q(in.C, Q + dQ, x, in.y) >= base - 1e-9);
    }
  }
}

TEST_CASE("FOCUSS weights") {
  Eigen::VectorXd x(3);
  x << 0.0, 1.0, -2.0;
  CHECK(focuss_weights(x, 2.0, 1e-8).isApprox(Eigen::VectorXd::Ones(3)));
  const auto w = focuss_weights(x, 0.5, 1e-14);
  CHECK(w(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w(2) == doctest::Approx(std::pow(4.0, -0.75)).epsilon(1e-10));
  const auto w0 = focuss_weights(x, 0.5, 1e-8);
  CHECK(w0(0) == doctest::Approx(std::pow(1e-8, -0.75)));
  CHECK(std::isfinite(w0(0)));
}

TEST_CASE("dual gradient matches central finite differences") {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto in = random_instance(seed);
    Rng rng(seed + 7);
    Eigen::VectorXd mu(10);
    for (auto& v : mu) v = 0.2 * rng.standard_normal();
    const double xi = 2.0;
    const auto d = dual_function_and_gradient(mu, in.C, in.Q, in.y, in.w, xi);
    const double h = 1e-5;
    for (Eigen::Index t = 0; t < 10; ++t) {
      Eigen::VectorXd mp = mu, mm = mu;
      mp(t) += h;
      mm(t) -= h;
      const double fd = (dual_function_and_gradient(mp, in.C, in.Q, in.y, in.w, xi).g -
                         dual_function_and_gradient(mm, in.C, in.Q, in.y, in.w, xi).g) /
                        (2 * h);
      worst = std::max(worst, std::abs(fd - d.gradient(t)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("dual at the origin with zero data") {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(4, 6);
  const auto d = dual_function_and_gradient(Eigen::VectorXd::Zero(6), C, Eigen::MatrixXd::Zero(4, 6),
                                            Eigen::VectorXd::Zero(4), Eigen::VectorXd::Ones(6), 3.0);
  CHECK(d.g == 0.0);
  CHECK(d.gradient.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dual is concave along segments") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto in = random_instance(seed);
    Rng rng(seed * 3);
    Eigen::VectorXd a(10), b(10);
    // Keep W/2 + diag(mu) positive so both ends stay inside the domain.
    for (Eigen::Index t = 0; t < 10; ++t) {
      a(t) = std::max(0.3 * rng.standard_normal(), -0.45 * in.w(t));
      b(t) = std::max(0.3 * rng.standard_normal(), -0.45 * in.w(t));
    }
    const double xi = 1.5;
    const double ga = dual_function_and_gradient(a, in.C, in.Q, in.y, in.w, xi).g;
    const double gb = dual_function_and_gradient(b, in.C, in.Q, in.y, in.w, xi).g;
    const double gm = dual_function_and_gradient(0.5 * (a + b), in.C, in.Q, in.y, in.w, xi).g;
    CHECK(gm >= 0.5 * (ga + gb) - 1e-9);
  }
}

TEST_CASE("leaving the positive-definite domain is reported") {
  const auto in = random_instance(4);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(10, -1e6);
  CHECK_THROWS_AS(dual_function_and_gradient(mu, in.C, in.Q, in.y, in.w, 1.0), NotPositiveDefinite);
}

TEST_CASE("primal at mu = 0 minimizes the surrogate") {
  const auto in = random_instance(5);
  const double xi = 4.0;
  const auto x = primal_from_dual(Eigen::VectorXd::Zero(10), in.C, in.Q, in.y, in.w, xi);
  const Eigen::MatrixXd A = in.C - in.Q;
  // Gradient of xi/2 ||y - A x||^2 + 1/2 x' W x.
  const Eigen::VectorXd grad = xi * A.transpose() * (A * x - in.y) + in.w.cwiseProduct(x);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(primal_from_dual(Eigen::VectorXd::Zero(10), in.C, in.Q, Eigen::VectorXd::Zero(6), in.w, xi)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("primal from dual on a 2x2 toy, by hand") {
  Eigen::MatrixXd C(2, 2);
  C << 1, 1, 1, -1;
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXd y(2), w(2), mu(2);
  y << 2, 0.5;
  w << 1, 3;
  mu << 0.4, -0.2;
  const double xi = 2.0;
  // P = W/2 + xi/2 C'C + diag(mu); C'C = 2 I.
  const double p11 = 0.5 + 2 + 0.4, p22 = 1.5 + 2 - 0.2;
  // v = xi C' y + mu.
  const double v1 = 2 * (2 + 0.5) + 0.4, v2 = 2 * (2 - 0.5) - 0.2;
  const auto x = primal_from_dual(mu, C, Q, y, w, xi);
  CHECK(x(0) == doctest::Approx(0.5 * v1 / p11).epsilon(1e-12));
  CHECK(x(1) == doctest::Approx(0.5 * v2 / p22).epsilon(1e-12));
}

TEST_CASE("TLS on y = 0 returns zero") {
  const auto C = generate_code_matrix(16, 32, 2);
  TlsConfig cfg;
  const auto r = lp_tls_detect(C.entries(), Eigen::VectorXcd::Zero(16), cfg);
  CHECK(r.support.empty());
  CHECK(r.x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("TLS and Lasso recover noiseless two-user supports") {
  const auto C = generate_code_matrix(16, 32, 3);
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const auto act = sample_active_set(32, 2, rng);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(16);
    for (auto k : act.indices) y += C.column(k);
    REQUIRE(binary_solutions(C.entries(), y, 2) == 1);
    TlsConfig cfg;
    cfg.xi = 1e4;
    CHECK(lp_tls_detect(C.entries(), y.cast<Complex>(), cfg).support == sorted(act.indices));
    CHECK(lasso_detect(C.entries(), y.cast<Complex>(), 1e4).support == sorted(act.indices));
  }
}

TEST_CASE("TLS objective never increases and the certificate holds") {
  const auto C = generate_code_matrix(32, 64, 4);
  const auto p = ChannelParams::from_std(1, 0.15, 0.15, 5, 0.2);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto act = sample_active_set(64, 4, rng);
    const auto rec = synthesize_received(C, act, p, rng);
    TlsConfig cfg;
    cfg.xi = 10;
    const auto r = lp_tls_detect(C.entries(), rec.y, cfg);
    CHECK(r.certified);
    double prev = r.initial_objective;
    for (const auto& it : r.trace) {
      CHECK(it.objective <= prev * (1 + 1e-12) + 1e-12);
      prev = it.objective;
    }
  }
}

TEST_CASE("TlsConfig validation") {
  TlsConfig cfg;
  cfg.p = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.xi = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.stop_tol = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("Lasso: orthogonal design equals soft thresholding") {
  Eigen::MatrixXd H(4, 4);
  H << 1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, -1, 1;
  Eigen::VectorXd y(4);
  y << 3.0, -1.0, 0.5, 2.0;
  const double xi = 0.8, lam = 1 / xi;
  const auto r = lasso_solve(H, y, xi);
  const Eigen::VectorXd c = H.transpose() * y;
  for (Eigen::Index j = 0; j < 4; ++j) {
    const double expect = std::copysign(std::max(std::abs(c(j)) - lam, 0.0), c(j)) / 4.0;
    CHECK(r.x(j) == doctest::Approx(expect).epsilon(1e-9));
  }
  CHECK(r.converged);
}

TEST_CASE("Lasso: large penalty gives the null solution") {
  const auto C = generate_code_matrix(8, 16, 5);
  Rng rng(1);
  Eigen::VectorXd y(8);
  for (auto& v : y) v = rng.standard_normal();
  const double cmax = (C.entries().transpose() * y).cwiseAbs().maxCoeff();
  const auto r = lasso_solve(C.entries(), y, 1.0 / cmax);
  CHECK(r.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.support.empty());
}

TEST_CASE("Lasso: duality gap reaches the tolerance") {
  const auto C = generate_code_matrix(32, 64, 6);
  Rng rng(2);
  Eigen::VectorXd y(32);
  for (auto& v : y) v = rng.standard_normal();
  const auto r = lasso_solve(C.entries(), y, 0.5);
  CHECK(r.converged);
  CHECK(r.duality_gap <= 1e-8 * std::max(1.0, 0.5 * y.squaredNorm()));
}

TEST_CASE("default xi") {
  CHECK(default_xi(256, 10, 0.0, 0.0, 1e4) == 1e4);
  CHECK(default_xi(256, 10, 1e-3, 0.02, 1e4) ==
        doctest::Approx(std::sqrt(2 * std::log(256.0)) / std::sqrt(10e-3 + 0.01)));
}

}  // TEST_SUITE
