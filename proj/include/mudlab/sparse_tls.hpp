#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace mudlab {

struct TlsConfig {
  double p = 0.5;
  double xi = 100.0;
  int max_outer = 60;
  int max_inner = 40;       // step halvings per dual ascent step
  int max_dual_steps = 40;  // ascent steps per outer iteration
  double stop_tol = 1e-4;   // max-norm change of x between outer iterations
  double weight_eps = 1e-8;
  double dual_step0 = 1.0;

  void validate() const;
};

class NotPositiveDefinite : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// (1 + ||x||^2)^{-1} (C x - y_r) x'.
Eigen::MatrixXd q_update(const Eigen::VectorXd& x, const Eigen::MatrixXd& C,
                         const Eigen::VectorXd& y_r);

// Diagonal of W: (x_t^2 + weight_eps)^{(p-2)/2}.
Eigen::VectorXd focuss_weights(const Eigen::VectorXd& x_prev, double p, double weight_eps);

// S(x) = xi/2 ||y_r - (C - Q) x||^2 + 1/2 x' W x.
double tls_surrogate(const Eigen::VectorXd& x, const Eigen::MatrixXd& C, const Eigen::MatrixXd& Q,
                     const Eigen::VectorXd& y_r, const Eigen::VectorXd& w, double xi);

// ||y_r - (C - Q) x||^2 + ||Q||_F^2 + x' W x / xi.
double tls_objective(const Eigen::VectorXd& x, const Eigen::MatrixXd& C, const Eigen::MatrixXd& Q,
                     const Eigen::VectorXd& y_r, const Eigen::VectorXd& w, double xi);

// Dual of min_x S(x) subject to x_t^2 = x_t, up to an additive constant:
// with P = W/2 + xi/2 (C-Q)'(C-Q) + diag(mu) and v = xi (C-Q)' y_r + mu,
// g(mu) = -v' P^{-1} v / 4 and dg/dmu_t = x_t^2 - x_t at x = P^{-1} v / 2.
// Throws NotPositiveDefinite when mu leaves the domain.
struct DualValue {
  double g = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd x;
};

DualValue dual_function_and_gradient(const Eigen::VectorXd& mu, const Eigen::MatrixXd& C,
                                     const Eigen::MatrixXd& Q, const Eigen::VectorXd& y_r,
                                     const Eigen::VectorXd& w, double xi);

Eigen::VectorXd primal_from_dual(const Eigen::VectorXd& mu, const Eigen::MatrixXd& C,
                                 const Eigen::MatrixXd& Q, const Eigen::VectorXd& y_r,
                                 const Eigen::VectorXd& w, double xi);

struct TlsIteration {
  double objective = 0.0;  // tls_objective after the Q update
  int dual_steps = 0;
  bool held_weights = false;  // new weights failed the certificate; previous weights used
  double step = 0.0;          // max-norm change of x
};

struct TlsResult {
  std::vector<Eigen::Index> support;  // ascending, 0-based
  Eigen::VectorXd x;                  // last iterate before the {0,1} projection
  Eigen::MatrixXd Q;
  double initial_objective = 0.0;
  std::vector<TlsIteration> trace;
  bool converged = false;
  bool certified = true;  // every accepted iterate passed the descent certificate
};

// Alternating l_p-constrained TLS on Re(y). Each outer iteration climbs the
// binary-constraint dual with the refreshed weights and keeps the certified
// point of largest dual value; if no point certifies, the previous weights
// are kept for that iteration. Then the closed-form Q update.
TlsResult lp_tls_detect(const Eigen::MatrixXd& C, const Eigen::VectorXcd& y, const TlsConfig& cfg);

struct LassoResult {
  std::vector<Eigen::Index> support;
  Eigen::VectorXd x;
  double duality_gap = 0.0;
  int sweeps = 0;
  bool converged = false;
};

struct LassoOptions {
  double gap_tol = 1e-8;  // relative to max(1, ||y_r||^2 / 2)
  int max_sweeps = 20000;
};

// min_x 1/2 ||y_r - C x||^2 + ||x||_1 / xi by cyclic coordinate descent.
LassoResult lasso_detect(const Eigen::MatrixXd& C, const Eigen::VectorXcd& y, double xi,
                         const LassoOptions& opts = {});

// Lasso on a real right-hand side; lasso_detect forwards here.
LassoResult lasso_solve(const Eigen::MatrixXd& C, const Eigen::VectorXd& y_r, double xi,
                        const LassoOptions& opts = {});

// Indices with x_t > 1/2.
std::vector<Eigen::Index> binary_support(const Eigen::VectorXd& x);

// xi = sqrt(2 log K) / sigma_w with sigma_w^2 = M sigma_r^2 + sigma_v^2 / 2,
// capped at xi_max.
double default_xi(double K, double M, double sigma_r_sq, double sigma_v_sq, double xi_max);

}  // namespace mudlab
