#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "mudlab/codebook.hpp"
#include "mudlab/rng.hpp"

namespace mudlab {

using Complex = std::complex<double>;

// Second-order statistics of the channel mismatch, shared by every user
// (ranging equalizes the per-user powers).
struct ChannelParams {
  double sigma_h_sq = 1.0;    // CFR variance
  double sigma_e_sq = 0.0;    // pilot estimation error variance
  double sigma_eta_sq = 0.0;  // channel aging variance
  double theta_deg = 0.0;     // alpha = exp(i theta)
  double sigma_v_sq = 0.0;    // receiver noise variance

  Complex alpha() const;
  // Throws std::invalid_argument when a variance is negative or sigma_h_sq <= 0.
  void validate() const;

  static ChannelParams from_std(double sigma_h, double sigma_e, double sigma_eta,
                                double theta_deg, double sigma_v);
};

// Indices of the codes in use, 0-based, at most one user per code.
struct ActiveSet {
  std::vector<Eigen::Index> indices;
  Eigen::Index M() const { return static_cast<Eigen::Index>(indices.size()); }
};

// Uniform sample of M distinct codes out of K.
ActiveSet sample_active_set(Eigen::Index K, Eigen::Index M, Rng& rng);

// M independent uniform picks; two users may land on the same code.
ActiveSet sample_with_replacement(Eigen::Index K, Eigen::Index M, Rng& rng);

// One draw of the mismatch ratio ((1-alpha)h + e - eta) / (h + e).
Complex sample_lambda(const ChannelParams& params, Rng& rng);

// Per (subcarrier, active user) quantities of one realization. Column m
// belongs to the user of ActiveSet::indices[m].
struct ChannelDraw {
  Eigen::MatrixXcd h, e, eta;
  Eigen::MatrixXcd lambda;
  Eigen::MatrixXcd x;  // pre-equalized transmitted symbols C / (h + e)
  Eigen::VectorXcd noise;
};

// y = C x_ring - u + noise with u = Q x_ring.
struct SparseModel {
  Eigen::VectorXd x_ring;
  Eigen::MatrixXcd Q;  // C_{l,j} lambda_{l,j}; zero outside the active set
  Eigen::VectorXcd u;
  double epsilon = 0.0;
};

struct Reception {
  Eigen::VectorXcd y;
  ChannelDraw draw;
  SparseModel model;
};

Reception synthesize_received(const CodeMatrix& codes, const ActiveSet& active,
                              const ChannelParams& params, Rng& rng);

}  // namespace mudlab
