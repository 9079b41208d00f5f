#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mudlab/codebook.hpp"
#include "mudlab/decoder_design.hpp"
#include "mudlab/lambda_stats.hpp"

namespace mudlab {

// Threshold bundle for the correlation detector.
struct CoherenceThresholds {
  double coh_alpha = 0.0;
  double coh_beta = 0.0;
  double coh_gamma = 0.0;
  double nu = 1.0;
  double M0 = 1.0;
  double eps = 0.0;
  double Upsilon = 0.0;
  double tau = 0.0;
  double window_lo = 0.0;  // tau + M0 beta
  double window_hi = 1.0;  // 1 - M0 beta - tau
  bool feasible = false;   // tau + M0 beta < 1/2
};

CoherenceThresholds compute_thresholds(const Eigen::MatrixXd& D, const CodeMatrix& C,
                                       const LambdaMoments& moments, double sigma_v_sq, double M0,
                                       double nu);

// Upsilon = sqrt(2 (1 + nu) log K) sqrt(M0 sigma_r^2 + sigma_v^2 / 2).
double upsilon(double nu, double K, double M0, double sigma_r_sq, double sigma_v_sq);

// How kappa follows the shrinking window after m detections.
//  midpoint: centre of ((M0-m) beta + tau, 1 - (M0-m-1) beta - tau), clamped to (tau, 1).
//  edge:     midpoint when that window is non-empty; otherwise the lower edge
//            (M0-m) beta + tau capped at 1 - tau, so an empty window still
//            keeps the false-alarm side of the test.
enum class KappaPolicy { edge, midpoint };

KappaPolicy parse_kappa_policy(const std::string& name);
std::string to_string(KappaPolicy policy);

double kappa_for(const CoherenceThresholds& th, double detected, KappaPolicy policy);

struct DetectionStep {
  double kappa = 0.0;
  std::vector<Eigen::Index> added;
  double residual_norm = 0.0;
};

struct DetectionResult {
  std::vector<Eigen::Index> detected;  // ascending, 0-based
  std::vector<DetectionStep> trace;
  int iterations = 0;
  enum class Stop { empty_set, budget } terminated_by = Stop::empty_set;
  bool guaranteed = false;  // thresholds were feasible
};

std::string to_string(DetectionResult::Stop stop);

// Greedy correlation detector on Re(y). Each pass adds every code whose
// decoder correlation with the residual exceeds kappa, then subtracts those
// codes. Codes already detected are not tested again.
DetectionResult cmud_detect(const CodeMatrix& C, const Eigen::MatrixXd& D, const Eigen::VectorXcd& y,
                            const CoherenceThresholds& th, KappaPolicy policy = KappaPolicy::edge);

// Energy-based estimate of the number of active codes, rounded and clamped
// to [0, K].
Eigen::Index estimate_user_count(const Eigen::VectorXcd& y, const LambdaMoments& moments,
                                 double sigma_v_sq, Eigen::Index L, Eigen::Index K);

// Unrounded version of the same estimate.
double estimate_user_count_raw(const Eigen::VectorXcd& y, const LambdaMoments& moments,
                               double sigma_v_sq, Eigen::Index L);

}  // namespace mudlab
