#include "mudlab/sparse_tls.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

namespace mudlab {

void TlsConfig::validate() const {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("tls.p must lie in (0, 1]");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("tls.xi must be positive");
  if (!(stop_tol >= 0.0 && stop_tol <= 1.0)) throw std::invalid_argument("tls.stop_tol must lie in [0, 1]");
  if (!(weight_eps > 0.0)) throw std::invalid_argument("tls.weight_eps must be positive");
  if (!(dual_step0 > 0.0)) throw std::invalid_argument("tls.dual_step0 must be positive");
  if (max_outer < 1 || max_inner < 1 || max_dual_steps < 0)
    throw std::invalid_argument("tls iteration budgets must be positive");
}

Eigen::MatrixXd q_update(const Eigen::VectorXd& x, const Eigen::MatrixXd& C,
                         const Eigen::VectorXd& y_r) {
  return (C * x - y_r) * x.transpose() / (1.0 + x.squaredNorm());
}

Eigen::VectorXd focuss_weights(const Eigen::VectorXd& x_prev, double p, double weight_eps) {
  const double e = 0.5 * (p - 2.0);
  return (x_prev.array().square() + weight_eps).pow(e).matrix();
}

double tls_surrogate(const Eigen::VectorXd& x, const Eigen::MatrixXd& C, const Eigen::MatrixXd& Q,
                     const Eigen::VectorXd& y_r, const Eigen::VectorXd& w, double xi) {
  const Eigen::VectorXd r = y_r - (C - Q) * x;
  return 0.5 * xi * r.squaredNorm() + 0.5 * x.cwiseProduct(w).dot(x);
}

double tls_objective(const Eigen::VectorXd& x, const Eigen::MatrixXd& C, const Eigen::MatrixXd& Q,
                     const Eigen::VectorXd& y_r, const Eigen::VectorXd& w, double xi) {
  const Eigen::VectorXd r = y_r - (C - Q) * x;
  return r.squaredNorm() + Q.squaredNorm() + x.cwiseProduct(w).dot(x) / xi;
}

namespace {

// Pieces of the dual that do not depend on mu.
struct DualSystem {
  Eigen::MatrixXd P0;  // W/2 + xi/2 A'A
  Eigen::VectorXd b;   // xi A' y_r

  DualSystem(const Eigen::MatrixXd& A, const Eigen::VectorXd& y_r, const Eigen::VectorXd& w,
             double xi) {
    P0.noalias() = (0.5 * xi) * (A.transpose() * A);
    P0.diagonal() += 0.5 * w;
    b.noalias() = xi * (A.transpose() * y_r);
  }

  DualValue evaluate(const Eigen::VectorXd& mu) const {
    Eigen::MatrixXd P = P0;
    P.diagonal() += mu;
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("P is not positive definite; shrink the dual step");
    const Eigen::VectorXd v = b + mu;
    const Eigen::VectorXd s = llt.solve(v);
    DualValue out;
    out.g = -0.25 * v.dot(s);
    out.x = 0.5 * s;
    out.gradient = out.x.cwiseProduct(out.x) - out.x;
    return out;
  }
};

void check_dims(const Eigen::MatrixXd& C, const Eigen::MatrixXd& Q, const Eigen::VectorXd& y_r,
                const Eigen::VectorXd& w, const Eigen::VectorXd& mu) {
  if (Q.rows() != C.rows() || Q.cols() != C.cols() || y_r.size() != C.rows() ||
      w.size() != C.cols() || mu.size() != C.cols())
    throw std::invalid_argument("dual evaluation: dimensions disagree");
}

}  // namespace

DualValue dual_function_and_gradient(const Eigen::VectorXd& mu, const Eigen::MatrixXd& C,
                                     const Eigen::MatrixXd& Q, const Eigen::VectorXd& y_r,
                                     const Eigen::VectorXd& w, double xi) {
  check_dims(C, Q, y_r, w, mu);
  return DualSystem(C - Q, y_r, w, xi).evaluate(mu);
}

Eigen::VectorXd primal_from_dual(const Eigen::VectorXd& mu, const Eigen::MatrixXd& C,
                                 const Eigen::MatrixXd& Q, const Eigen::VectorXd& y_r,
                                 const Eigen::VectorXd& w, double xi) {
  return dual_function_and_gradient(mu, C, Q, y_r, w, xi).x;
}

std::vector<Eigen::Index> binary_support(const Eigen::VectorXd& x) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index t = 0; t < x.size(); ++t)
    if (x(t) > 0.5) s.push_back(t);
  return s;
}

namespace {

struct Candidate {
  Eigen::VectorXd x;
  int dual_steps = 0;
};

// Gradient ascent on the dual from mu = 0. Visited points whose primal
// satisfies the descent certificate S(x) <= ref are candidates and the one
// with the largest dual value wins; the climb stops once it leaves the
// certified region. Returns false when no point certifies.
bool certified_ascent(const DualSystem& sys, const Eigen::MatrixXd& A, const Eigen::VectorXd& y_r,
                      const Eigen::VectorXd& w, double xi, double ref, const TlsConfig& cfg,
                      Candidate& out) {
  auto surrogate = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd r = y_r - A * x;
    return 0.5 * xi * r.squaredNorm() + 0.5 * x.cwiseProduct(w).dot(x);
  };
  const double slack = 1e-12 * std::max(1.0, std::abs(ref));
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(A.cols());
  DualValue cur;
  try {
    cur = sys.evaluate(mu);
  } catch (const NotPositiveDefinite&) {
    return false;
  }
  bool found = false;
  double best_g = 0.0;
  double step = cfg.dual_step0;
  for (int k = 0;; ++k) {
    if (surrogate(cur.x) <= ref + slack) {
      if (!found || cur.g > best_g) {
        found = true;
        best_g = cur.g;
        out.x = cur.x;
        out.dual_steps = k;
      }
    } else if (found) {
      break;  // left the certified region
    }
    // A binary primal point zeroes the gradient: nothing left to gain.
    if (k >= cfg.max_dual_steps || cur.gradient.cwiseAbs().maxCoeff() < 1e-9) break;
    bool moved = false;
    for (int h = 0; h < cfg.max_inner; ++h, step *= 0.5) {
      try {
        DualValue next = sys.evaluate(mu + step * cur.gradient);
        if (next.g > cur.g) {
          mu += step * cur.gradient;
          cur = std::move(next);
          moved = true;
          break;
        }
      } catch (const NotPositiveDefinite&) {
      }
    }
    if (!moved) break;
    step *= 2.0;
  }
  return found;
}

}  // namespace

TlsResult lp_tls_detect(const Eigen::MatrixXd& C, const Eigen::VectorXcd& y, const TlsConfig& cfg) {
  cfg.validate();
  if (y.size() != C.rows()) throw std::invalid_argument("received vector length differs from L");
  const Eigen::VectorXd y_r = y.real();
  const Eigen::Index K = C.cols();

  TlsResult res;
  // Minimum-norm least squares start.
  Eigen::LLT<Eigen::MatrixXd> gram(C * C.transpose());
  if (gram.info() != Eigen::Success) throw std::runtime_error("C C' is singular");
  Eigen::VectorXd x = C.transpose() * gram.solve(y_r);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(C.rows(), K);
  Eigen::VectorXd w_used = focuss_weights(x, cfg.p, cfg.weight_eps);
  res.initial_objective = tls_objective(x, C, Q, y_r, w_used, cfg.xi);

  for (int i = 0; i < cfg.max_outer; ++i) {
    const Eigen::MatrixXd A = C - Q;
    const double ref = tls_surrogate(x, C, Q, y_r, w_used, cfg.xi);
    const Eigen::VectorXd w_new = focuss_weights(x, cfg.p, cfg.weight_eps);

    TlsIteration it;
    Candidate cand;
    bool ok = certified_ascent(DualSystem(A, y_r, w_new, cfg.xi), A, y_r, w_new, cfg.xi, ref, cfg, cand);
    if (ok) {
      w_used = w_new;
    } else {
      // The previous weights always certify at mu = 0, where x minimizes
      // the very surrogate that defines ref.
      it.held_weights = true;
      ok = certified_ascent(DualSystem(A, y_r, w_used, cfg.xi), A, y_r, w_used, cfg.xi, ref, cfg, cand);
    }
    if (!ok) {
      res.certified = false;
      break;
    }
    it.dual_steps = cand.dual_steps;
    it.step = (cand.x - x).cwiseAbs().maxCoeff();
    x = std::move(cand.x);
    Q = q_update(x, C, y_r);
    it.objective = tls_objective(x, C, Q, y_r, w_used, cfg.xi);
    [[maybe_unused]] const double prev = res.trace.empty() ? res.initial_objective : res.trace.back().objective;
    assert(it.objective <= prev + 1e-9 * std::max(1.0, std::abs(prev)));
    res.trace.push_back(it);
    if (it.step < cfg.stop_tol) {
      res.converged = true;
      break;
    }
  }
  res.x = x;
  res.Q = Q;
  res.support = binary_support(x);
  return res;
}

LassoResult lasso_solve(const Eigen::MatrixXd& C, const Eigen::VectorXd& y_r, double xi,
                        const LassoOptions& opts) {
  if (!(xi > 0.0)) throw std::invalid_argument("lasso xi must be positive");
  if (y_r.size() != C.rows()) throw std::invalid_argument("received vector length differs from L");
  const double lam = 1.0 / xi;
  const Eigen::Index K = C.cols();
  const Eigen::VectorXd col_sq = C.colwise().squaredNorm().transpose();
  const double scale = std::max(1.0, 0.5 * y_r.squaredNorm());

  LassoResult res;
  res.x = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd r = y_r;

  auto gap = [&]() {
    const Eigen::VectorXd g = C.transpose() * r;
    const double gmax = g.cwiseAbs().maxCoeff();
    const double s = gmax > lam ? lam / gmax : 1.0;
    const double primal = 0.5 * r.squaredNorm() + lam * res.x.lpNorm<1>();
    const Eigen::VectorXd theta = s * r;
    const double dual = 0.5 * y_r.squaredNorm() - 0.5 * (y_r - theta).squaredNorm();
    return primal - dual;
  };

  auto update = [&](Eigen::Index j) {
    if (col_sq(j) == 0.0) return 0.0;
    const double old = res.x(j);
    const double rho = C.col(j).dot(r) + col_sq(j) * old;
    const double nx = std::copysign(std::max(std::abs(rho) - lam, 0.0), rho) / col_sq(j);
    if (nx != old) {
      r -= (nx - old) * C.col(j);
      res.x(j) = nx;
    }
    return std::abs(nx - old) * std::sqrt(col_sq(j));
  };
  auto primal = [&] { return 0.5 * r.squaredNorm() + lam * res.x.lpNorm<1>(); };

  // Full sweeps alternate with sweeps over the current support; between
  // them the support problem with fixed signs is solved exactly when its
  // solution keeps those signs.
  std::vector<Eigen::Index> active;
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < K; ++j) update(j);
    res.sweeps = sweep;
    res.duality_gap = gap();
    if (res.duality_gap <= opts.gap_tol * scale) {
      res.converged = true;
      break;
    }
    active.clear();
    for (Eigen::Index j = 0; j < K; ++j)
      if (res.x(j) != 0.0) active.push_back(j);
    if (active.empty()) continue;
    for (int inner = 0; inner < 1000; ++inner) {
      double moved = 0.0;
      for (auto j : active) moved = std::max(moved, update(j));
      if (moved < 1e-10) break;
    }
    const auto n = static_cast<Eigen::Index>(active.size());
    if (n > C.rows()) continue;
    Eigen::MatrixXd CA(C.rows(), n);
    Eigen::VectorXd sgn(n);
    for (Eigen::Index a = 0; a < n; ++a) {
      CA.col(a) = C.col(active[static_cast<std::size_t>(a)]);
      sgn(a) = res.x(active[static_cast<std::size_t>(a)]) > 0.0 ? 1.0 : -1.0;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(CA.transpose() * CA);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd xa = ldlt.solve(CA.transpose() * y_r - lam * sgn);
    if (!((xa.array() * sgn.array()) > 0.0).all()) continue;
    const Eigen::VectorXd keep_x = res.x;
    const Eigen::VectorXd keep_r = r;
    const double before = primal();
    for (Eigen::Index a = 0; a < n; ++a) res.x(active[static_cast<std::size_t>(a)]) = xa(a);
    r = y_r - CA * xa;
    if (primal() > before) {
      res.x = keep_x;
      r = keep_r;
    }
  }
  res.support = binary_support(res.x);
  return res;
}

LassoResult lasso_detect(const Eigen::MatrixXd& C, const Eigen::VectorXcd& y, double xi,
                         const LassoOptions& opts) {
  return lasso_solve(C, y.real(), xi, opts);
}

double default_xi(double K, double M, double sigma_r_sq, double sigma_v_sq, double xi_max) {
  const double var = M * sigma_r_sq + 0.5 * sigma_v_sq;
  if (!(var > 0.0)) return xi_max;
  return std::min(std::sqrt(2.0 * std::log(K)) / std::sqrt(var), xi_max);
}

}  // namespace mudlab
