#include "mudlab/decoder_design.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace mudlab {

std::string to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::scaled:
      return "identity-scaled";
    case DecoderKind::decoder_i:
      return "decoder-I";
    case DecoderKind::decoder_ii:
      return "decoder-II";
  }
  return "unknown";
}

namespace {

CoherenceStats stats_from_gram(const Eigen::MatrixXd& G, const Eigen::MatrixXd& D, double eps,
                               double mu_r, double M0, double Upsilon) {
  // G = C' D, column l holds D_l' C_j for every j.
  CoherenceStats s;
  s.alpha = G.colwise().sum().cwiseAbs().maxCoeff();
  const Eigen::Index K = G.cols();
  for (Eigen::Index l = 0; l < K; ++l)
    for (Eigen::Index j = 0; j < G.rows(); ++j)
      if (j != l) s.beta = std::max(s.beta, std::abs(G(j, l)));
  s.gamma = D.colwise().norm().maxCoeff();
  s.objective = eps * mu_r * s.alpha + M0 * s.beta + Upsilon * s.gamma;
  return s;
}

// Euclidean projection onto {x : ||x||_1 <= r}, in place.
void project_l1(double* v, std::size_t n, double r) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(v[i]);
  if (total <= r) return;
  if (r <= 0.0) {
    std::fill(v, v + n, 0.0);
    return;
  }
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(v[i]);
  std::sort(a.begin(), a.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += a[i];
    const double t = (cum - r) / static_cast<double>(i + 1);
    if (a[i] > t) theta = t;
    else break;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double m = std::max(std::abs(v[i]) - theta, 0.0);
    v[i] = std::copysign(m, v[i]);
  }
}

// Projection onto {Y : sum of column norms <= r}.
void project_l12(Eigen::MatrixXd& Y, double r) {
  Eigen::VectorXd n = Y.colwise().norm().transpose();
  if (n.sum() <= r) return;
  Eigen::VectorXd m = n;
  project_l1(m.data(), static_cast<std::size_t>(m.size()), r);
  for (Eigen::Index j = 0; j < Y.cols(); ++j)
    Y.col(j) *= n(j) > 0.0 ? m(j) / n(j) : 0.0;
}

}  // namespace

CoherenceStats decoder_objective(const Eigen::MatrixXd& D, const CodeMatrix& C, double eps,
                                 double mu_r, double M0, double Upsilon) {
  if (D.rows() != C.L() || D.cols() != C.K())
    throw std::invalid_argument("decoder and code matrix dimensions differ");
  const Eigen::MatrixXd G = C.entries().transpose() * D;
  return stats_from_gram(G, D, eps, mu_r, M0, Upsilon);
}

double normalization_residual(const Eigen::MatrixXd& D, const CodeMatrix& C) {
  return (C.entries().cwiseProduct(D).colwise().sum().array() - 1.0).abs().maxCoeff();
}

DecoderMatrix scaled_code_decoder(const CodeMatrix& C) {
  DecoderMatrix d;
  d.entries = C.entries() / static_cast<double>(C.L());
  d.provenance = DecoderKind::scaled;
  return d;
}

double mmse_delta(double eps, double mu_r, double m2_r) { return eps * (1.0 + m2_r - 2.0 * mu_r); }

MmseInternals mmse_internals(const CodeMatrix& C, double delta) {
  MmseInternals m;
  m.delta = delta;
  m.R = C.entries() * C.entries().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.R);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition of R failed");
  m.lambda = es.eigenvalues();
  m.U = es.eigenvectors();
  m.V = m.U.transpose() * C.entries();
  return m;
}

namespace {

void check_mmse_inputs(double delta, double sigma_v_sq) {
  if (!(delta >= 0.0) || !(sigma_v_sq >= 0.0))
    throw std::invalid_argument("delta and sigma_v_sq must be non-negative");
  if (delta == 0.0 && sigma_v_sq == 0.0)
    throw std::invalid_argument("delta = 0 with sigma_v = 0 gives a singular MMSE design");
}

}  // namespace

DecoderMatrix design_decoder_mmse(const CodeMatrix& C, double delta, double sigma_v_sq) {
  check_mmse_inputs(delta, sigma_v_sq);
  const auto m = mmse_internals(C, delta);
  const Eigen::ArrayXd d = delta * m.lambda.array() + 0.5 * sigma_v_sq;
  if ((d <= 1e-14 * std::max(1.0, d.maxCoeff())).any())
    throw std::runtime_error("regularized MMSE matrix is singular");
  const Eigen::MatrixXd W = d.inverse().matrix().asDiagonal() * m.V;
  DecoderMatrix out;
  out.entries = m.U * W;
  // C_l' A^{-1} C_l = v' diag(1/d) v
  const Eigen::RowVectorXd norm = m.V.cwiseProduct(W).colwise().sum();
  for (Eigen::Index l = 0; l < out.entries.cols(); ++l) out.entries.col(l) /= norm(l);
  out.provenance = DecoderKind::decoder_ii;
  out.inputs.delta = delta;
  out.inputs.sigma_v_sq = sigma_v_sq;
  return out;
}

Eigen::MatrixXd design_decoder_mmse_direct(const CodeMatrix& C, double delta, double sigma_v_sq) {
  check_mmse_inputs(delta, sigma_v_sq);
  Eigen::MatrixXd A = delta * (C.entries() * C.entries().transpose());
  A.diagonal().array() += 0.5 * sigma_v_sq;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw std::runtime_error("regularized MMSE matrix is singular");
  Eigen::MatrixXd D = llt.solve(C.entries());
  for (Eigen::Index l = 0; l < D.cols(); ++l) D.col(l) /= C.entries().col(l).dot(D.col(l));
  return D;
}

OptimalDesign design_decoder_optimal(const CodeMatrix& C, double eps, double mu_r, double M0,
                                     double Upsilon, const SolverOptions& opts) {
  if (!(eps >= 0.0) || !(mu_r >= 0.0) || !(Upsilon >= 0.0))
    throw std::invalid_argument("eps, mu_r and Upsilon must be non-negative");
  if (!(M0 >= 1.0)) throw std::invalid_argument("M0 must be at least 1");
  if (opts.max_iter < 1 || opts.window < 1 || !(opts.step_ratio > 0.0))
    throw std::invalid_argument("bad solver options");

  const Eigen::MatrixXd& Cm = C.entries();
  const Eigen::Index L = C.L();
  const Eigen::Index K = C.K();
  const double Ld = static_cast<double>(L);
  const double wa = eps * mu_r;
  const double wb = M0;
  const double wg = Upsilon;

  auto project_affine = [&](Eigen::MatrixXd& D) {
    const Eigen::RowVectorXd dev = Cm.cwiseProduct(D).colwise().sum().array() - 1.0;
    D -= Cm * (dev / Ld).asDiagonal();
  };
  auto zero_diagonal = [&](Eigen::MatrixXd& G) { G.diagonal().setZero(); };

  // Operator D -> (mask(C'D) / nb, s'D / na, D). The blocks are scaled so
  // their norms are comparable.
  const Eigen::VectorXd s = C.column_sum();
  const double nb = std::sqrt(static_cast<double>(L + K));
  const double na = s.norm() > 0.0 ? s.norm() : 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Cm * Cm.transpose(), Eigen::EigenvaluesOnly);
  const double normC = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  const double normOp = std::sqrt(std::pow(normC / nb, 2) + std::pow(s.norm() / na, 2) + 1.0);
  const double tau = 0.99 / normOp / opts.step_ratio;
  const double sigma = 0.99 / normOp * opts.step_ratio;

  Eigen::MatrixXd D = Cm / Ld;
  Eigen::MatrixXd X = D;
  Eigen::MatrixXd G = Cm.transpose() * D;
  Eigen::MatrixXd GX = G;
  Eigen::MatrixXd Yb = Eigen::MatrixXd::Zero(K, K);
  Eigen::RowVectorXd Ya = Eigen::RowVectorXd::Zero(K);
  Eigen::MatrixXd Yg = Eigen::MatrixXd::Zero(L, K);

  OptimalDesign best;
  best.decoder.entries = D;
  best.stats = stats_from_gram(G, D, eps, mu_r, M0, Upsilon);
  double window_start = best.stats.objective;

  int k = 1;
  for (; k <= opts.max_iter; ++k) {
    Eigen::MatrixXd Gbar = 2.0 * G - GX;
    const Eigen::RowVectorXd abar = Gbar.colwise().sum();
    zero_diagonal(Gbar);
    Yb += (sigma / nb) * Gbar;
    project_l1(Yb.data(), static_cast<std::size_t>(Yb.size()), wb * nb);
    Ya += (sigma / na) * abar;
    project_l1(Ya.data(), static_cast<std::size_t>(Ya.size()), wa * na);
    Yg += sigma * (2.0 * D - X);
    project_l12(Yg, wg);

    X = D;
    GX = G;
    Eigen::MatrixXd Ybm = Yb;
    zero_diagonal(Ybm);
    D -= tau * (Cm * Ybm / nb + s * Ya / na + Yg);
    project_affine(D);
    G.noalias() = Cm.transpose() * D;

    const auto st = stats_from_gram(G, D, eps, mu_r, M0, Upsilon);
    if (st.objective < best.stats.objective) {
      best.stats = st;
      best.decoder.entries = D;
    }
    if (k % opts.window == 0) {
      const double gain = window_start - best.stats.objective;
      if (gain <= opts.tol * std::max(1.0, std::abs(best.stats.objective))) {
        best.converged = true;
        break;
      }
      window_start = best.stats.objective;
    }
  }
  best.iterations = std::min(k, opts.max_iter);
  best.decoder.provenance = DecoderKind::decoder_i;
  best.decoder.inputs.eps = eps;
  best.decoder.inputs.mu_r = mu_r;
  best.decoder.inputs.M0 = M0;
  best.decoder.inputs.Upsilon = Upsilon;
  best.equality_residual = normalization_residual(best.decoder.entries, C);
  if (!best.converged && opts.throw_on_budget)
    throw SolverError("decoder-I design did not converge in " + std::to_string(opts.max_iter) +
                          " iterations",
                      best);
  return best;
}

}  // namespace mudlab
