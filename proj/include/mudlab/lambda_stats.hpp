#pragma once

#include <complex>

#include "mudlab/channel_model.hpp"
#include "mudlab/rng.hpp"

namespace mudlab {

// Moments of Re(lambda) and the parameters of the ratio density.
//
// lambda = N / D with N = (1-alpha)h + e - eta and D = h + e. The density of
// a ratio of correlated circular Gaussians is isotropic around the point
// rho * sigma_u / sigma_v, with radial profile 1 / (t^2 + gamma^2)^2, where
// rho = E[N conj(D)] / (sigma_u sigma_v) is the normalized correlation.
struct LambdaMoments {
  double sigma_u_sq = 0.0;
  double sigma_v_sq = 0.0;
  std::complex<double> rho;
  double Gamma = 0.0;        // density normalization (1-|rho|^2) sigma_u^2 / (pi sigma_v^2)
  double alpha_hat = 0.0;    // rho_r sigma_u / sigma_v, the real coordinate of the centre
  double beta_hat = 0.0;     // -rho_i sigma_u / sigma_v
  double gamma_polar = 0.0;  // sqrt((1-|rho|^2) sigma_u^2 / sigma_v^2)
  double varrho = 0.0;       // percentile level of the truncation box
  double T_varrho = 0.0;     // half-width of the truncation box
  double t_max = 0.0;        // polar radius equivalent used by second_moment_lambda_r
  double mu_r = 0.0;
  double m2_r = 0.0;
  double sigma_r_sq = 0.0;
  bool degenerate = false;  // sigma_u = 0, lambda == 0

  // Centre of the density in the complex plane.
  std::complex<double> centre() const;
};

// Fills sigma_u^2, sigma_v^2, rho, Gamma, alpha_hat, beta_hat, gamma_polar.
LambdaMoments pdf_params(const ChannelParams& params);

// Joint density of (Re lambda, Im lambda).
double lambda_pdf(const LambdaMoments& lm, double re, double im);

// E[Re lambda] = alpha_hat; exact.
double mean_lambda_r(const ChannelParams& params);

// Smallest T with Pr(|Re lambda| <= T and |Im lambda| <= T) >= varrho,
// estimated as an empirical quantile over `draws` samples.
double percentile_threshold(const ChannelParams& params, double varrho, Rng& rng,
                            std::size_t draws = 1'000'000);

// Disk-truncated second moment: the radial integral is cut at t_max around the
// density centre and evaluated with its closed-form antiderivative; the
// alpha_hat^2 shift term is untruncated.
double second_moment_lambda_r(const ChannelParams& params, double t_max);

// Conservative radius covering the box of half-width T around the origin.
double box_radius(const LambdaMoments& lm, double T);

struct BoxIntegrals {
  double mass = 0.0;         // Pr(lambda in box)
  double first = 0.0;        // E[Re lambda ; box]
  double second = 0.0;       // E[(Re lambda)^2 ; box]
};

// Exact integrals over the box [-T, T]^2: polar coordinates around the
// density centre with the closed-form radial antiderivatives, and
// Gauss-Legendre quadrature over the angle between box corners.
BoxIntegrals box_integrals(const LambdaMoments& lm, double T);

// Complete record: mu_r from the closed form, m2_r as the second moment of
// Re lambda conditioned on the varrho box, sigma_r^2 = m2_r - mu_r^2
// clamped at zero.
LambdaMoments moments(const ChannelParams& params, double varrho, Rng& rng,
                      std::size_t draws = 1'000'000);

}  // namespace mudlab
