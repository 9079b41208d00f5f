#include "mudlab/cmud.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mudlab {

double upsilon(double nu, double K, double M0, double sigma_r_sq, double sigma_v_sq) {
  return std::sqrt(2.0 * (1.0 + nu) * std::log(K)) * std::sqrt(M0 * sigma_r_sq + 0.5 * sigma_v_sq);
}

CoherenceThresholds compute_thresholds(const Eigen::MatrixXd& D, const CodeMatrix& C,
                                       const LambdaMoments& moments, double sigma_v_sq, double M0,
                                       double nu) {
  if (!(M0 >= 1.0)) throw std::invalid_argument("M0 must be at least 1");
  if (!(nu > 0.0)) throw std::invalid_argument("nu must be positive");
  CoherenceThresholds th;
  const double K = static_cast<double>(C.K());
  th.nu = nu;
  th.M0 = M0;
  th.eps = M0 / K;
  th.Upsilon = upsilon(nu, K, M0, moments.sigma_r_sq, sigma_v_sq);
  const auto cs = decoder_objective(D, C, th.eps, moments.mu_r, M0, th.Upsilon);
  th.coh_alpha = cs.alpha;
  th.coh_beta = cs.beta;
  th.coh_gamma = cs.gamma;
  th.tau = th.eps * moments.mu_r * cs.alpha + cs.gamma * th.Upsilon;
  th.window_lo = th.tau + M0 * cs.beta;
  th.window_hi = 1.0 - M0 * cs.beta - th.tau;
  th.feasible = th.tau + M0 * cs.beta < 0.5;
  return th;
}

KappaPolicy parse_kappa_policy(const std::string& name) {
  if (name == "edge") return KappaPolicy::edge;
  if (name == "midpoint") return KappaPolicy::midpoint;
  throw std::invalid_argument("unknown kappa policy \"" + name + "\" (expected edge|midpoint)");
}

std::string to_string(KappaPolicy policy) {
  return policy == KappaPolicy::edge ? "edge" : "midpoint";
}

std::string to_string(DetectionResult::Stop stop) {
  return stop == DetectionResult::Stop::empty_set ? "empty-I" : "budget";
}

double kappa_for(const CoherenceThresholds& th, double detected, KappaPolicy policy) {
  const double remaining = std::max(th.M0 - detected, 0.0);
  const double lo = remaining * th.coh_beta + th.tau;
  const double hi = 1.0 - std::max(remaining - 1.0, 0.0) * th.coh_beta - th.tau;
  const double mid = 0.5 * (lo + hi);
  if (lo < hi) return std::clamp(mid, th.tau, 1.0);

  // Midpoint of (tau, 1 - tau) is 1/2 whenever that interval exists.
  if (policy == KappaPolicy::midpoint || th.tau >= 0.5) return 0.5;
  return std::min(std::max(mid, lo), 1.0 - th.tau);
}

DetectionResult cmud_detect(const CodeMatrix& C, const Eigen::MatrixXd& D, const Eigen::VectorXcd& y,
                            const CoherenceThresholds& th, KappaPolicy policy) {
  const Eigen::Index L = C.L();
  const Eigen::Index K = C.K();
  if (y.size() != L) throw std::invalid_argument("received vector length differs from L");
  if (D.rows() != L || D.cols() != K) throw std::invalid_argument("decoder dimensions differ from C");

  DetectionResult res;
  res.guaranteed = th.feasible;
  Eigen::VectorXd z = y.real();
  std::vector<char> taken(static_cast<std::size_t>(K), 0);
  const int budget = std::max(1, static_cast<int>(std::ceil(th.M0)));

  for (int j = 0; j < budget; ++j) {
    DetectionStep step;
    step.kappa = kappa_for(th, static_cast<double>(res.detected.size()), policy);
    const Eigen::VectorXd corr = D.transpose() * z;
    for (Eigen::Index l = 0; l < K; ++l)
      if (!taken[static_cast<std::size_t>(l)] && std::abs(corr(l)) > step.kappa) step.added.push_back(l);
    ++res.iterations;
    if (step.added.empty()) {
      step.residual_norm = z.norm();
      res.trace.push_back(std::move(step));
      res.terminated_by = DetectionResult::Stop::empty_set;
      break;
    }
    for (auto l : step.added) {
      taken[static_cast<std::size_t>(l)] = 1;
      res.detected.push_back(l);
      z -= C.entries().col(l);
    }
    step.residual_norm = z.norm();
    res.trace.push_back(std::move(step));
    if (j + 1 == budget) res.terminated_by = DetectionResult::Stop::budget;
  }
  std::sort(res.detected.begin(), res.detected.end());
  return res;
}

double estimate_user_count_raw(const Eigen::VectorXcd& y, const LambdaMoments& moments,
                               double sigma_v_sq, Eigen::Index L) {
  if (L <= 0) throw std::invalid_argument("L must be positive");
  const double denom = 1.0 - 2.0 * moments.mu_r + moments.m2_r;
  if (!(denom > 0.0)) throw std::domain_error("1 - 2 mu_r + E[lambda_r^2] must be positive");
  const double G = y.real().squaredNorm();
  const double Ld = static_cast<double>(L);
  return (G - 0.5 * Ld * sigma_v_sq) / (Ld * denom);
}

Eigen::Index estimate_user_count(const Eigen::VectorXcd& y, const LambdaMoments& moments,
                                 double sigma_v_sq, Eigen::Index L, Eigen::Index K) {
  const double m = std::round(estimate_user_count_raw(y, moments, sigma_v_sq, L));
  return static_cast<Eigen::Index>(std::clamp(m, 0.0, static_cast<double>(K)));
}

}  // namespace mudlab
