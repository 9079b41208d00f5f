#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

#include "mudlab/codebook.hpp"

namespace mudlab {

enum class DecoderKind { scaled, decoder_i, decoder_ii };

std::string to_string(DecoderKind kind);

// What a decoder was designed for; used to decide when to redesign.
struct DesignInputs {
  double eps = 0.0;
  double mu_r = 0.0;
  double m2_r = 0.0;
  double sigma_r_sq = 0.0;
  double sigma_v_sq = 0.0;
  double M0 = 0.0;
  double nu = 0.0;
  double Upsilon = 0.0;
  double delta = 0.0;
};

// Column l of `entries` is the correlator for code l; every column satisfies
// D_l' C_l = 1.
struct DecoderMatrix {
  Eigen::MatrixXd entries;
  DecoderKind provenance = DecoderKind::scaled;
  DesignInputs inputs;
};

// alpha = max_l |sum_j D_l' C_j|, beta = max_l max_{j != l} |D_l' C_j|,
// gamma = max_l ||D_l||, objective = eps mu_r alpha + M0 beta + Upsilon gamma.
struct CoherenceStats {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double objective = 0.0;
};

CoherenceStats decoder_objective(const Eigen::MatrixXd& D, const CodeMatrix& C, double eps,
                                 double mu_r, double M0, double Upsilon);

// max_l |D_l' C_l - 1|.
double normalization_residual(const Eigen::MatrixXd& D, const CodeMatrix& C);

// D = C / L.
DecoderMatrix scaled_code_decoder(const CodeMatrix& C);

// delta = eps (1 + E[lambda_r^2] - 2 mu_r).
double mmse_delta(double eps, double mu_r, double m2_r);

struct MmseInternals {
  double delta = 0.0;
  Eigen::MatrixXd R;       // sum_j C_j C_j' = C C'
  Eigen::VectorXd lambda;  // eigenvalues of R, ascending
  Eigen::MatrixXd U;       // orthonormal eigenvectors, R = U diag(lambda) U'
  Eigen::MatrixXd V;       // U' C, column l is v for code l
};

MmseInternals mmse_internals(const CodeMatrix& C, double delta);

// D_l proportional to (delta R + I sigma_v^2 / 2)^{-1} C_l, scaled to D_l' C_l = 1.
// Evaluated through the eigendecomposition of R.
DecoderMatrix design_decoder_mmse(const CodeMatrix& C, double delta, double sigma_v_sq);

// Same decoder from a Cholesky solve of the regularized matrix.
Eigen::MatrixXd design_decoder_mmse_direct(const CodeMatrix& C, double delta, double sigma_v_sq);

struct SolverOptions {
  int max_iter = 4000;
  int window = 200;         // convergence window, iterations
  double tol = 1e-7;        // relative improvement of the best objective over the window
  double step_ratio = 30.0; // primal/dual step balance, sigma = ratio^2 tau
  bool throw_on_budget = true;
};

struct OptimalDesign {
  DecoderMatrix decoder;
  CoherenceStats stats;
  int iterations = 0;
  bool converged = false;
  double equality_residual = 0.0;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, OptimalDesign last)
      : std::runtime_error(what), last_(std::move(last)) {}
  const OptimalDesign& last() const { return last_; }

 private:
  OptimalDesign last_;
};

// Minimizes eps mu_r alpha + M0 beta + Upsilon gamma over decoders with
// D_l' C_l = 1. Primal-dual hybrid gradient on the three max-terms, with the
// equality constraint handled by exact projection; warm-started from C / L
// and returning the best iterate seen.
OptimalDesign design_decoder_optimal(const CodeMatrix& C, double eps, double mu_r, double M0,
                                     double Upsilon, const SolverOptions& opts = {});

}  // namespace mudlab
