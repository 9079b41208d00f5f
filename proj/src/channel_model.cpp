#include "mudlab/channel_model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mudlab {

Complex ChannelParams::alpha() const {
  const double th = theta_deg * std::numbers::pi / 180.0;
  return {std::cos(th), std::sin(th)};
}

void ChannelParams::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string(name) + " must be a finite non-negative variance");
  };
  check(sigma_h_sq, "sigma_h_sq");
  check(sigma_e_sq, "sigma_e_sq");
  check(sigma_eta_sq, "sigma_eta_sq");
  check(sigma_v_sq, "sigma_v_sq");
  if (!(sigma_h_sq > 0.0)) throw std::invalid_argument("sigma_h_sq must be positive");
  if (!std::isfinite(theta_deg)) throw std::invalid_argument("theta_deg must be finite");
}

ChannelParams ChannelParams::from_std(double sigma_h, double sigma_e, double sigma_eta,
                                      double theta_deg, double sigma_v) {
  return {sigma_h * sigma_h, sigma_e * sigma_e, sigma_eta * sigma_eta, theta_deg,
          sigma_v * sigma_v};
}

ActiveSet sample_active_set(Eigen::Index K, Eigen::Index M, Rng& rng) {
  if (K <= 0) throw std::invalid_argument("K must be positive");
  if (M < 0 || M > K)
    throw std::invalid_argument("M=" + std::to_string(M) + " outside [0, K=" + std::to_string(K) +
                                "]");
  // Partial Fisher-Yates: the first M slots are a uniform M-subset.
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(K));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(K - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(M));
  return ActiveSet{std::move(pool)};
}

ActiveSet sample_with_replacement(Eigen::Index K, Eigen::Index M, Rng& rng) {
  if (K <= 0) throw std::invalid_argument("K must be positive");
  if (M < 0) throw std::invalid_argument("M must be non-negative");
  ActiveSet s;
  s.indices.reserve(static_cast<std::size_t>(M));
  for (Eigen::Index i = 0; i < M; ++i)
    s.indices.push_back(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(K))));
  return s;
}

namespace {

struct LinkDraw {
  Complex h, e, eta;
};

LinkDraw draw_link(const ChannelParams& p, Rng& rng) {
  const double floor = 1e-12 * std::sqrt(p.sigma_h_sq + p.sigma_e_sq);
  for (;;) {
    LinkDraw d{rng.complex_normal(p.sigma_h_sq), rng.complex_normal(p.sigma_e_sq),
               rng.complex_normal(p.sigma_eta_sq)};
    if (std::abs(d.h + d.e) >= floor && std::abs(d.h + d.e) > 0.0) return d;
  }
}

Complex lambda_of(const LinkDraw& d, Complex alpha) {
  return ((1.0 - alpha) * d.h + d.e - d.eta) / (d.h + d.e);
}

}  // namespace

Complex sample_lambda(const ChannelParams& params, Rng& rng) {
  if (!(params.sigma_h_sq + params.sigma_e_sq > 0.0))
    throw std::invalid_argument("sample_lambda needs sigma_h_sq + sigma_e_sq > 0");
  return lambda_of(draw_link(params, rng), params.alpha());
}

Reception synthesize_received(const CodeMatrix& codes, const ActiveSet& active,
                              const ChannelParams& params, Rng& rng) {
  params.validate();
  const Eigen::Index L = codes.L();
  const Eigen::Index K = codes.K();
  const Eigen::Index M = active.M();
  for (auto k : active.indices)
    if (k < 0 || k >= K) throw std::invalid_argument("active index out of range");

  const Complex alpha = params.alpha();
  Reception r;
  auto& d = r.draw;
  d.h.resize(L, M);
  d.e.resize(L, M);
  d.eta.resize(L, M);
  d.lambda.resize(L, M);
  d.x.resize(L, M);

  r.y = Eigen::VectorXcd::Zero(L);
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto k = active.indices[static_cast<std::size_t>(m)];
    for (Eigen::Index l = 0; l < L; ++l) {
      const LinkDraw link = draw_link(params, rng);
      const Complex h_hat = link.h + link.e;
      const Complex h_bar = alpha * link.h + link.eta;
      d.h(l, m) = link.h;
      d.e(l, m) = link.e;
      d.eta(l, m) = link.eta;
      d.lambda(l, m) = lambda_of(link, alpha);
      d.x(l, m) = codes.entries()(l, k) / h_hat;
      r.y(l) += d.x(l, m) * h_bar;
    }
  }
  d.noise.resize(L);
  for (Eigen::Index l = 0; l < L; ++l) d.noise(l) = rng.complex_normal(params.sigma_v_sq);
  r.y += d.noise;

  // Sparse re-expression. A code chosen by several users carries the mean of
  // their ratios so that Q x_ring still reproduces the summed mismatch.
  auto& sm = r.model;
  sm.x_ring = Eigen::VectorXd::Zero(K);
  sm.Q = Eigen::MatrixXcd::Zero(L, K);
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto k = active.indices[static_cast<std::size_t>(m)];
    sm.x_ring(k) += 1.0;
    sm.Q.col(k) += codes.entries().col(k).cast<Complex>().cwiseProduct(d.lambda.col(m));
  }
  for (Eigen::Index k = 0; k < K; ++k)
    if (sm.x_ring(k) > 1.0) sm.Q.col(k) /= sm.x_ring(k);
  sm.u = sm.Q * sm.x_ring.cast<Complex>();
  sm.epsilon = static_cast<double>(M) / static_cast<double>(K);
  return r;
}

}  // namespace mudlab
