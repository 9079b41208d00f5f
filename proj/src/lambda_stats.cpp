#include "mudlab/lambda_stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mudlab {

namespace {

constexpr double kPi = std::numbers::pi;

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
struct GaussLegendre {
  std::vector<double> x, w;
  explicit GaussLegendre(int n) : x(n), w(n) {
    for (int i = 0; i < n; ++i) {
      double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-15) break;
      }
      x[i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
};

const GaussLegendre& quadrature() {
  static const GaussLegendre gl(96);
  return gl;
}

}  // namespace

std::complex<double> LambdaMoments::centre() const {
  if (degenerate) return {};
  return rho * std::sqrt(sigma_u_sq / sigma_v_sq);
}

LambdaMoments pdf_params(const ChannelParams& params) {
  params.validate();
  const auto a = params.alpha();
  LambdaMoments lm;
  lm.sigma_u_sq = std::norm(1.0 - a) * params.sigma_h_sq + params.sigma_e_sq + params.sigma_eta_sq;
  lm.sigma_v_sq = params.sigma_h_sq + params.sigma_e_sq;
  if (!(lm.sigma_u_sq > 0.0)) {
    lm.degenerate = true;
    return lm;
  }
  const double su = std::sqrt(lm.sigma_u_sq);
  const double sv = std::sqrt(lm.sigma_v_sq);
  lm.rho = ((1.0 - a) * params.sigma_h_sq + params.sigma_e_sq) / (su * sv);
  // Cauchy-Schwarz bounds |rho| by one; rounding can push it a hair over.
  const double r2 = std::min(std::norm(lm.rho), 1.0);
  lm.Gamma = (1.0 - r2) * lm.sigma_u_sq / (kPi * lm.sigma_v_sq);
  lm.alpha_hat = lm.rho.real() * su / sv;
  lm.beta_hat = -lm.rho.imag() * su / sv;
  lm.gamma_polar = std::sqrt((1.0 - r2) * lm.sigma_u_sq / lm.sigma_v_sq);
  lm.mu_r = lm.alpha_hat;
  return lm;
}

double lambda_pdf(const LambdaMoments& lm, double re, double im) {
  if (lm.degenerate || lm.gamma_polar <= 0.0) return 0.0;
  const auto c = lm.centre();
  const double dr = re - c.real();
  const double di = im - c.imag();
  const double g2 = lm.gamma_polar * lm.gamma_polar;
  const double q = dr * dr + di * di + g2;
  return lm.Gamma / (q * q);
}

double mean_lambda_r(const ChannelParams& params) { return pdf_params(params).alpha_hat; }

double percentile_threshold(const ChannelParams& params, double varrho, Rng& rng,
                            std::size_t draws) {
  if (!(varrho > 0.0 && varrho < 1.0)) throw std::invalid_argument("varrho must lie in (0, 1)");
  if (draws == 0) throw std::invalid_argument("percentile_threshold needs draws > 0");
  if (pdf_params(params).degenerate) return 0.0;
  std::vector<double> level(draws);
  for (auto& v : level) {
    const auto lam = sample_lambda(params, rng);
    v = std::max(std::abs(lam.real()), std::abs(lam.imag()));
  }
  const auto rank = static_cast<std::size_t>(
      std::ceil(varrho * static_cast<double>(draws) - 1e-9));
  const auto k = std::clamp<std::size_t>(rank, 1, draws) - 1;
  std::nth_element(level.begin(), level.begin() + static_cast<std::ptrdiff_t>(k), level.end());
  return level[k];
}

double second_moment_lambda_r(const ChannelParams& params, double t_max) {
  if (!(t_max > 0.0) || !std::isfinite(t_max))
    throw std::invalid_argument("t_max must be positive and finite");
  const auto lm = pdf_params(params);
  if (lm.degenerate) return 0.0;
  const double g2 = lm.gamma_polar * lm.gamma_polar;
  const double shift = lm.alpha_hat * lm.alpha_hat;
  if (g2 <= 0.0) return shift;
  // Gamma * pi == gamma^2 under the normalized correlation, and the angular
  // integral of cos^2 is pi.
  const double t2 = t_max * t_max;
  const double radial = 0.5 * std::log1p(t2 / g2) - t2 / (2.0 * (t2 + g2));
  return lm.Gamma * kPi * radial + shift;
}

double box_radius(const LambdaMoments& lm, double T) {
  return T + std::max(std::abs(lm.alpha_hat), std::abs(lm.beta_hat));
}

BoxIntegrals box_integrals(const LambdaMoments& lm, double T) {
  if (!(T >= 0.0)) throw std::invalid_argument("box half-width must be non-negative");
  BoxIntegrals out;
  if (lm.degenerate) {
    out.mass = 1.0;
    return out;
  }
  const auto c = lm.centre();
  const double cr = c.real();
  const double ci = c.imag();
  const double g2 = lm.gamma_polar * lm.gamma_polar;

  if (g2 <= 0.0) {
    // Point mass at the centre.
    if (std::abs(cr) <= T && std::abs(ci) <= T) out = {1.0, cr, cr * cr};
    return out;
  }
  const double g = lm.gamma_polar;
  auto A1 = [&](double t) { return -1.0 / (2.0 * (t * t + g2)); };
  auto A2 = [&](double t) {
    if (std::isinf(t)) return kPi / (4.0 * g);
    return std::atan(t / g) / (2.0 * g) - t / (2.0 * (t * t + g2));
  };
  auto A3 = [&](double t) { return 0.5 * std::log(t * t + g2) + g2 / (2.0 * (t * t + g2)); };

  // Parameter interval of the ray centre + t (cos phi, sin phi) inside the box.
  auto slab = [&](double origin, double dir, double& lo, double& hi) {
    if (dir == 0.0) {
      if (std::abs(origin) > T) hi = -1.0;
      return;
    }
    double a = (-T - origin) / dir;
    double b = (T - origin) / dir;
    if (a > b) std::swap(a, b);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
  };

  std::array<double, 5> cuts;
  const std::array<std::pair<double, double>, 4> corners{{{T, T}, {-T, T}, {-T, -T}, {T, -T}}};
  for (int i = 0; i < 4; ++i) {
    double ang = std::atan2(corners[i].second - ci, corners[i].first - cr);
    if (ang < 0) ang += 2.0 * kPi;
    cuts[i] = ang;
  }
  std::sort(cuts.begin(), cuts.begin() + 4);
  cuts[4] = cuts[0] + 2.0 * kPi;

  const auto& gl = quadrature();
  for (int s = 0; s < 4; ++s) {
    const double a = cuts[s];
    const double b = cuts[s + 1];
    if (b - a <= 0.0) continue;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (std::size_t q = 0; q < gl.x.size(); ++q) {
      const double phi = mid + half * gl.x[q];
      const double w = half * gl.w[q];
      const double cp = std::cos(phi);
      const double sp = std::sin(phi);
      double lo = 0.0, hi = std::numeric_limits<double>::infinity();
      slab(cr, cp, lo, hi);
      slab(ci, sp, lo, hi);
      if (!(hi > lo)) continue;
      const double d1 = A1(hi) - A1(lo);
      const double d2 = A2(hi) - A2(lo);
      const double d3 = A3(hi) - A3(lo);
      out.mass += w * d1;
      out.first += w * (cp * d2 + cr * d1);
      out.second += w * (cp * cp * d3 + 2.0 * cr * cp * d2 + cr * cr * d1);
    }
  }
  out.mass *= lm.Gamma;
  out.first *= lm.Gamma;
  out.second *= lm.Gamma;
  return out;
}

LambdaMoments moments(const ChannelParams& params, double varrho, Rng& rng, std::size_t draws) {
  auto lm = pdf_params(params);
  lm.varrho = varrho;
  if (lm.degenerate) {
    if (!(varrho > 0.0 && varrho < 1.0)) throw std::invalid_argument("varrho must lie in (0, 1)");
    return lm;
  }
  lm.T_varrho = percentile_threshold(params, varrho, rng, draws);
  lm.t_max = box_radius(lm, lm.T_varrho);
  lm.mu_r = lm.alpha_hat;
  const auto box = box_integrals(lm, lm.T_varrho);
  lm.m2_r = box.mass > 0.0 ? box.second / box.mass : lm.alpha_hat * lm.alpha_hat;
  lm.sigma_r_sq = std::max(0.0, lm.m2_r - lm.mu_r * lm.mu_r);
  return lm;
}

}  // namespace mudlab
