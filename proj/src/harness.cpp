#include "mudlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "mudlab/codebook.hpp"
#include "mudlab/rng.hpp"
#include "mudlab/signal_io.hpp"

#ifndef MUDLAB_VERSION
#define MUDLAB_VERSION "0.0.0"
#endif

namespace mudlab {

using nlohmann::json;

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::cmud_scaled:
      return "cmud-scaled";
    case Algorithm::cmud_d1:
      return "cmud-d1";
    case Algorithm::cmud_d2:
      return "cmud-d2";
    case Algorithm::lasso:
      return "lasso";
    case Algorithm::tls:
      return "tls";
  }
  return "unknown";
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> all{Algorithm::cmud_scaled, Algorithm::cmud_d1,
                                          Algorithm::cmud_d2, Algorithm::lasso, Algorithm::tls};
  return all;
}

Algorithm parse_algorithm(const std::string& name) {
  for (auto a : all_algorithms())
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown algorithm \"" + name +
                              "\" (expected cmud-scaled|cmud-d1|cmud-d2|lasso|tls)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got \"" + v + "\"");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 9e15) throw ConfigError(key, "expected an integer, got \"" + v + "\"");
  return static_cast<long long>(d);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto x = std::stoull(v, &pos, 0);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a non-negative integer, got \"" + v + "\"");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected true/false, got \"" + v + "\"");
}

// "2,4,6" or "2:2:10" (start:step:stop, inclusive), mixed freely.
std::vector<Eigen::Index> to_index_list(const std::string& key, const std::string& v) {
  std::vector<Eigen::Index> out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() == 1) {
      out.push_back(static_cast<Eigen::Index>(to_int(key, parts[0])));
    } else if (parts.size() == 3) {
      const auto a = to_int(key, parts[0]);
      const auto step = to_int(key, parts[1]);
      const auto b = to_int(key, parts[2]);
      if (step <= 0) throw ConfigError(key, "range step must be positive");
      for (auto m = a; m <= b; m += step) out.push_back(static_cast<Eigen::Index>(m));
    } else {
      throw ConfigError(key, "bad list item \"" + item + "\"");
    }
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

ChannelParams ExperimentConfig::channel() const {
  return ChannelParams::from_std(sigma_h, sigma_e, sigma_eta, theta_deg, sigma_v);
}

std::uint64_t ExperimentConfig::effective_code_seed() const {
  return code_seed != 0 ? code_seed : mix64(master_seed ^ 0xC0DEB00C5EEDULL);
}

void ExperimentConfig::validate() const {
  if (L <= 0) throw ConfigError("L", "must be positive");
  if (K <= L) throw ConfigError("K", "must exceed L");
  if (trials < 1) throw ConfigError("trials", "must be at least 1");
  for (auto m : M_list) {
    if (m < 0) throw ConfigError("M_list", "entries must be non-negative");
    if (m > K) throw ConfigError("M_list", "entry " + std::to_string(m) + " exceeds K");
  }
  if (algorithms.empty()) throw ConfigError("algorithms", "must name at least one algorithm");
  if (!(sigma_h > 0.0)) throw ConfigError("sigma_h", "must be positive");
  if (!(sigma_e >= 0.0)) throw ConfigError("sigma_e", "must be non-negative");
  if (!(sigma_eta >= 0.0)) throw ConfigError("sigma_eta", "must be non-negative");
  if (!(sigma_v >= 0.0)) throw ConfigError("sigma_v", "must be non-negative");
  if (!(nu > 0.0)) throw ConfigError("cmud.nu", "must be positive");
  if (M0 != 0.0 && !(M0 >= 1.0)) throw ConfigError("cmud.M0", "must be 0 (use M) or at least 1");
  if (!(varrho > 0.0 && varrho < 1.0)) throw ConfigError("varrho", "must lie in (0, 1)");
  if (lambda_draws < 1000) throw ConfigError("lambda_draws", "must be at least 1000");
  if (!(xi_max > 0.0)) throw ConfigError("xi_max", "must be positive");
  if (!(lasso_xi >= 0.0)) throw ConfigError("lasso.xi", "must be positive, or 0 for automatic");
  if (threads < 1) throw ConfigError("threads", "must be at least 1");
  if (audit_decoder == Algorithm::lasso || audit_decoder == Algorithm::tls)
    throw ConfigError("audit.decoder", "must be a CMUD decoder");
  try {
    tls.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("tls", e.what());
  }
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "L") L = static_cast<Eigen::Index>(to_int(key, v));
  else if (key == "K") K = static_cast<Eigen::Index>(to_int(key, v));
  else if (key == "M_list") M_list = to_index_list(key, v);
  else if (key == "sigma_h") sigma_h = to_double(key, v);
  else if (key == "sigma_e") sigma_e = to_double(key, v);
  else if (key == "sigma_eta") sigma_eta = to_double(key, v);
  else if (key == "sigma_v") sigma_v = to_double(key, v);
  else if (key == "theta_deg") theta_deg = to_double(key, v);
  else if (key == "trials") {
    const auto t = to_int(key, v);
    if (t < 1) throw ConfigError(key, "must be at least 1");
    trials = static_cast<std::size_t>(t);
  } else if (key == "master_seed") master_seed = to_u64(key, v);
  else if (key == "code_seed") code_seed = to_u64(key, v);
  else if (key == "algorithms") {
    algorithms.clear();
    if (v == "all") {
      algorithms = all_algorithms();
      return;
    }
    for (const auto& name : split(v, ',')) {
      try {
        algorithms.push_back(parse_algorithm(name));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(key, e.what());
      }
    }
  } else if (key == "cmud.nu") nu = to_double(key, v);
  else if (key == "cmud.M0_policy") {
    if (v == "fixed") M0_policy = M0Policy::fixed;
    else if (v == "estimated") M0_policy = M0Policy::estimated;
    else throw ConfigError(key, "expected fixed|estimated");
  } else if (key == "cmud.M0") M0 = to_double(key, v);
  else if (key == "cmud.kappa_policy") {
    try {
      kappa_policy = parse_kappa_policy(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  } else if (key == "tls.p") tls.p = to_double(key, v);
  else if (key == "tls.xi") {
    if (v == "auto") tls_xi_auto = true;
    else {
      tls_xi_auto = false;
      tls.xi = to_double(key, v);
    }
  } else if (key == "tls.max_outer") tls.max_outer = static_cast<int>(to_int(key, v));
  else if (key == "tls.max_inner") tls.max_inner = static_cast<int>(to_int(key, v));
  else if (key == "tls.max_dual_steps") tls.max_dual_steps = static_cast<int>(to_int(key, v));
  else if (key == "tls.stop_tol") tls.stop_tol = to_double(key, v);
  else if (key == "tls.weight_eps") tls.weight_eps = to_double(key, v);
  else if (key == "tls.dual_step0") tls.dual_step0 = to_double(key, v);
  else if (key == "lasso.xi") lasso_xi = v == "auto" ? 0.0 : to_double(key, v);
  else if (key == "xi_max") xi_max = to_double(key, v);
  else if (key == "varrho") varrho = to_double(key, v);
  else if (key == "lambda_draws") lambda_draws = static_cast<std::size_t>(to_int(key, v));
  else if (key == "d1.max_iter") d1.max_iter = static_cast<int>(to_int(key, v));
  else if (key == "d1.window") d1.window = static_cast<int>(to_int(key, v));
  else if (key == "d1.tol") d1.tol = to_double(key, v);
  else if (key == "d1.step_ratio") d1.step_ratio = to_double(key, v);
  else if (key == "audit.decoder") {
    try {
      audit_decoder = parse_algorithm(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  } else if (key == "threads") {
    const auto t = to_int(key, v);
    if (t < 1) throw ConfigError(key, "must be at least 1");
    threads = static_cast<unsigned>(t);
  } else if (key == "allow_collisions") allow_collisions = to_bool(key, v);
  else if (key == "record_runtime") record_runtime = to_bool(key, v);
  else throw ConfigError(key, "unknown key");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(n), "expected key = value");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  o << "L = " << L << "\nK = " << K << "\nM_list = ";
  for (std::size_t i = 0; i < M_list.size(); ++i) o << (i ? "," : "") << M_list[i];
  o << "\nsigma_h = " << num(sigma_h) << "\nsigma_e = " << num(sigma_e)
    << "\nsigma_eta = " << num(sigma_eta) << "\nsigma_v = " << num(sigma_v)
    << "\ntheta_deg = " << num(theta_deg) << "\ntrials = " << trials
    << "\nmaster_seed = " << master_seed << "\ncode_seed = " << code_seed << "\nalgorithms = ";
  for (std::size_t i = 0; i < algorithms.size(); ++i) o << (i ? "," : "") << to_string(algorithms[i]);
  o << "\ncmud.nu = " << num(nu)
    << "\ncmud.M0_policy = " << (M0_policy == M0Policy::fixed ? "fixed" : "estimated")
    << "\ncmud.M0 = " << num(M0) << "\ncmud.kappa_policy = " << to_string(kappa_policy)
    << "\ntls.p = " << num(tls.p) << "\ntls.xi = " << (tls_xi_auto ? "auto" : num(tls.xi))
    << "\ntls.max_outer = " << tls.max_outer << "\ntls.max_inner = " << tls.max_inner
    << "\ntls.max_dual_steps = " << tls.max_dual_steps << "\ntls.stop_tol = " << num(tls.stop_tol)
    << "\ntls.weight_eps = " << num(tls.weight_eps) << "\ntls.dual_step0 = " << num(tls.dual_step0)
    << "\nlasso.xi = " << (lasso_xi == 0.0 ? "auto" : num(lasso_xi)) << "\nxi_max = " << num(xi_max)
    << "\nvarrho = " << num(varrho) << "\nlambda_draws = " << lambda_draws
    << "\nd1.max_iter = " << d1.max_iter << "\nd1.window = " << d1.window
    << "\nd1.tol = " << num(d1.tol) << "\nd1.step_ratio = " << num(d1.step_ratio)
    << "\naudit.decoder = " << to_string(audit_decoder)
    << "\nallow_collisions = " << (allow_collisions ? "true" : "false") << "\n";
  return o.str();
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::pair<double, double> wilson_interval(std::size_t errors, std::size_t n) {
  if (n == 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(errors) / nn;
  const double denom = 1.0 + z * z / nn;
  const double centre = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  // The endpoints are exactly 0 and 1 at the extremes; keep rounding out.
  const double lo = errors == 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = errors == n ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

double detection_bound(double nu, double K) {
  return 1.0 / std::sqrt(std::numbers::pi * (1.0 + nu) * std::log(K)) * std::pow(K, -nu);
}

namespace {

constexpr std::uint64_t kLambdaStream = 0x4c414d4244414d4fULL;

double fixed_M0(const ExperimentConfig& cfg, Eigen::Index M) {
  return cfg.M0 > 0.0 ? cfg.M0 : std::max<double>(1.0, static_cast<double>(M));
}

// Representative of the 20% bucket containing m, so a decoder designed for
// it is within 20% of any M0 that maps to it.
double design_bucket(double m) {
  if (m <= 1.0) return 1.0;
  const double b = std::ceil(std::log(m) / std::log(1.2) - 1e-9);
  return std::max(1.0, std::round(std::pow(1.2, b)));
}

struct CmudSetup {
  std::shared_ptr<const DecoderMatrix> decoder;
  CoherenceThresholds thresholds;
};

// Decoders and thresholds, built on first use. Every entry is a pure
// function of its key, so the build order across threads does not matter.
class DecoderCache {
 public:
  DecoderCache(const CodeMatrix& C, const LambdaMoments& lm, const ExperimentConfig& cfg)
      : C_(C), lm_(lm), cfg_(cfg) {}

  CmudSetup get(Algorithm a, double M0, bool bucketed) {
    const double design_M0 = bucketed ? design_bucket(M0) : M0;
    std::shared_ptr<const DecoderMatrix> dec;
    {
      std::lock_guard lock(mu_);
      auto t = thresholds_.find({a, M0, design_M0});
      if (t != thresholds_.end()) return t->second;
    }
    dec = decoder(a, design_M0);
    CmudSetup s{dec, compute_thresholds(dec->entries, C_, lm_, sv2(), M0, cfg_.nu)};
    std::lock_guard lock(mu_);
    thresholds_.emplace(std::make_tuple(a, M0, design_M0), s);
    return s;
  }

 private:
  double sv2() const { return cfg_.sigma_v * cfg_.sigma_v; }

  std::shared_ptr<const DecoderMatrix> decoder(Algorithm a, double M0) {
    const auto key = std::make_pair(a, a == Algorithm::cmud_scaled ? 0.0 : M0);
    std::shared_ptr<std::once_flag> flag;
    {
      std::lock_guard lock(mu_);
      auto& f = flags_[key];
      if (!f) f = std::make_shared<std::once_flag>();
      flag = f;
    }
    std::call_once(*flag, [&] {
      auto d = std::make_shared<DecoderMatrix>(build(a, M0));
      std::lock_guard lock(mu_);
      decoders_[key] = std::move(d);
    });
    std::lock_guard lock(mu_);
    return decoders_.at(key);
  }

  DecoderMatrix build(Algorithm a, double M0) const {
    const double K = static_cast<double>(C_.K());
    const double eps = M0 / K;
    DesignInputs in;
    in.eps = eps;
    in.mu_r = lm_.mu_r;
    in.m2_r = lm_.m2_r;
    in.sigma_r_sq = lm_.sigma_r_sq;
    in.sigma_v_sq = sv2();
    in.M0 = M0;
    in.nu = cfg_.nu;
    in.Upsilon = upsilon(cfg_.nu, K, M0, lm_.sigma_r_sq, sv2());
    DecoderMatrix d;
    switch (a) {
      case Algorithm::cmud_scaled:
        d = scaled_code_decoder(C_);
        break;
      case Algorithm::cmud_d2: {
        in.delta = mmse_delta(eps, lm_.mu_r, lm_.m2_r);
        const double delta = in.delta > 0.0 || sv2() > 0.0 ? in.delta : 1e-12;
        d = design_decoder_mmse(C_, delta, sv2());
        break;
      }
      case Algorithm::cmud_d1:
        d = design_decoder_optimal(C_, eps, std::max(0.0, lm_.mu_r), M0, in.Upsilon, cfg_.d1).decoder;
        break;
      default:
        throw std::logic_error("not a CMUD decoder");
    }
    d.inputs = in;
    return d;
  }

  const CodeMatrix& C_;
  const LambdaMoments& lm_;
  const ExperimentConfig& cfg_;
  std::mutex mu_;
  std::map<std::pair<Algorithm, double>, std::shared_ptr<std::once_flag>> flags_;
  std::map<std::pair<Algorithm, double>, std::shared_ptr<const DecoderMatrix>> decoders_;
  std::map<std::tuple<Algorithm, double, double>, CmudSetup> thresholds_;
};

struct TrialDraw {
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> truth;  // distinct, ascending
  Reception rx;
};

TrialDraw draw_trial(const ExperimentConfig& cfg, const CodeMatrix& C, const ChannelParams& params,
                     Eigen::Index M, std::size_t trial) {
  TrialDraw d;
  d.seed = child_seed(cfg.master_seed, static_cast<std::uint64_t>(M), trial);
  Rng rng(d.seed);
  const ActiveSet S = cfg.allow_collisions ? sample_with_replacement(C.K(), M, rng)
                                           : sample_active_set(C.K(), M, rng);
  d.rx = synthesize_received(C, S, params, rng);
  d.truth = S.indices;
  std::sort(d.truth.begin(), d.truth.end());
  d.truth.erase(std::unique(d.truth.begin(), d.truth.end()), d.truth.end());
  return d;
}

void score(TrialRecord& r, const std::vector<Eigen::Index>& truth,
           const std::vector<Eigen::Index>& found) {
  std::vector<Eigen::Index> miss, fa;
  std::set_difference(truth.begin(), truth.end(), found.begin(), found.end(), std::back_inserter(miss));
  std::set_difference(found.begin(), found.end(), truth.begin(), truth.end(), std::back_inserter(fa));
  r.missed = miss.size();
  r.false_alarms = fa.size();
  r.exact_success = miss.empty() && fa.empty();
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
          next = n;
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

LambdaMoments sweep_moments(const ExperimentConfig& cfg) {
  Rng rng(child_seed(cfg.master_seed, kLambdaStream, 0));
  return moments(cfg.channel(), cfg.varrho, rng, cfg.lambda_draws);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const CodeMatrix C = generate_code_matrix(cfg.L, cfg.K, cfg.effective_code_seed());
  const ChannelParams params = cfg.channel();
  const double sv2 = params.sigma_v_sq;

  SweepResult res;
  res.moments = sweep_moments(cfg);
  const LambdaMoments& lm = res.moments;
  DecoderCache cache(C, lm, cfg);

  const std::size_t nA = cfg.algorithms.size();
  const std::size_t per_M = cfg.trials;
  std::vector<TrialRecord> recs(cfg.M_list.size() * per_M * nA);

  parallel_for(cfg.M_list.size() * per_M, cfg.threads, [&](std::size_t flat) {
    const std::size_t mi = flat / per_M;
    const std::size_t t = flat % per_M;
    const Eigen::Index M = cfg.M_list[mi];
    const TrialDraw d = draw_trial(cfg, C, params, M, t);

    double M0 = fixed_M0(cfg, M);
    const bool bucketed = cfg.M0_policy == M0Policy::estimated;
    if (bucketed) {
      const auto est = estimate_user_count(d.rx.y, lm, sv2, C.L(), C.K());
      M0 = std::max<double>(1.0, static_cast<double>(est));
    }
    const double xi_auto = default_xi(static_cast<double>(C.K()), M0, lm.sigma_r_sq, sv2, cfg.xi_max);

    for (std::size_t ai = 0; ai < nA; ++ai) {
      const Algorithm a = cfg.algorithms[ai];
      TrialRecord& r = recs[flat * nA + ai];
      r.trial = t;
      r.M = M;
      r.algorithm = a;
      r.child_seed = d.seed;
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<Eigen::Index> found;
      switch (a) {
        case Algorithm::cmud_scaled:
        case Algorithm::cmud_d1:
        case Algorithm::cmud_d2: {
          const auto s = cache.get(a, M0, bucketed);
          found = cmud_detect(C, s.decoder->entries, d.rx.y, s.thresholds, cfg.kappa_policy).detected;
          break;
        }
        case Algorithm::lasso:
          found = lasso_detect(C.entries(), d.rx.y, cfg.lasso_xi > 0.0 ? cfg.lasso_xi : xi_auto).support;
          break;
        case Algorithm::tls: {
          TlsConfig tc = cfg.tls;
          if (cfg.tls_xi_auto) tc.xi = xi_auto;
          found = lp_tls_detect(C.entries(), d.rx.y, tc).support;
          break;
        }
      }
      const auto t1 = std::chrono::steady_clock::now();
      r.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      score(r, d.truth, found);
    }
  });

  std::stable_sort(recs.begin(), recs.end(), [](const TrialRecord& a, const TrialRecord& b) {
    if (a.M != b.M) return a.M < b.M;
    const auto na = to_string(a.algorithm), nb = to_string(b.algorithm);
    if (na != nb) return na < nb;
    return a.trial < b.trial;
  });
  res.records = std::move(recs);

  for (std::size_t i = 0; i < res.records.size();) {
    PeStat s;
    s.algorithm = res.records[i].algorithm;
    s.M = res.records[i].M;
    while (i < res.records.size() && res.records[i].algorithm == s.algorithm && res.records[i].M == s.M) {
      ++s.trials;
      if (!res.records[i].exact_success) ++s.errors;
      ++i;
    }
    s.pe = static_cast<double>(s.errors) / static_cast<double>(s.trials);
    std::tie(s.ci_lo, s.ci_hi) = wilson_interval(s.errors, s.trials);
    res.stats.push_back(s);
  }
  return res;
}

std::string sweep_csv(const ExperimentConfig& cfg, const SweepResult& res) {
  std::string out =
      "trial,M,K,L,sigma_e,sigma_eta,sigma_theta,algorithm,exact_success,missed,false_alarms,"
      "runtime_ms,child_seed\n";
  const std::string fixed = "," + std::to_string(cfg.K) + "," + std::to_string(cfg.L) + "," +
                            short_num(cfg.sigma_e) + "," + short_num(cfg.sigma_eta) + "," +
                            short_num(cfg.sigma_v) + ",";
  for (const auto& r : res.records) {
    out += std::to_string(r.trial) + "," + std::to_string(r.M) + fixed + to_string(r.algorithm) +
           "," + (r.exact_success ? "1" : "0") + "," + std::to_string(r.missed) + "," +
           std::to_string(r.false_alarms) + ",";
    if (cfg.record_runtime) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.runtime_ms);
      out += buf;
    }
    out += "," + std::to_string(r.child_seed) + "\n";
  }
  return out;
}

namespace {

json moments_json(const LambdaMoments& lm) {
  return json{{"sigma_u_sq", lm.sigma_u_sq},
              {"sigma_v_sq", lm.sigma_v_sq},
              {"rho", {lm.rho.real(), lm.rho.imag()}},
              {"Gamma", lm.Gamma},
              {"alpha_hat", lm.alpha_hat},
              {"beta_hat", lm.beta_hat},
              {"gamma_polar", lm.gamma_polar},
              {"varrho", lm.varrho},
              {"T_varrho", lm.T_varrho},
              {"t_max", lm.t_max},
              {"mu_r", lm.mu_r},
              {"m2_r", lm.m2_r},
              {"sigma_r_sq", lm.sigma_r_sq},
              {"degenerate", lm.degenerate}};
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json thresholds_json(const CoherenceThresholds& t) {
  return json{{"alpha", t.coh_alpha}, {"beta", t.coh_beta},     {"gamma", t.coh_gamma},
              {"nu", t.nu},           {"M0", t.M0},             {"eps", t.eps},
              {"Upsilon", t.Upsilon}, {"tau", t.tau},           {"kappa_window", {t.window_lo, t.window_hi}},
              {"feasible", t.feasible}};
}

}  // namespace

std::string sweep_summary_json(const ExperimentConfig& cfg, const SweepResult& res) {
  json pts = json::array();
  for (const auto& s : res.stats)
    pts.push_back({{"algorithm", to_string(s.algorithm)},
                   {"M", s.M},
                   {"trials", s.trials},
                   {"errors", s.errors},
                   {"P_e", s.pe},
                   {"ci95", {s.ci_lo, s.ci_hi}}});
  json j{{"config_hash", hex(cfg.hash())}, {"moments", moments_json(res.moments)}, {"points", pts}};
  return j.dump(2) + "\n";
}

std::string manifest_json(const ExperimentConfig& cfg, const std::vector<std::string>& outputs) {
  json j{{"tool", "mudlab"},
         {"version", MUDLAB_VERSION},
         {"rng", std::string(Rng::kName)},
         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                       "." + std::to_string(EIGEN_MINOR_VERSION)},
         {"config_hash", hex(cfg.hash())},
         {"config", cfg.canonical()},
         {"code_seed", cfg.effective_code_seed()},
         {"threads", cfg.threads},
         {"outputs", outputs}};
  return j.dump(2) + "\n";
}

void write_sweep(const ExperimentConfig& cfg, const SweepResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "trials.csv", sweep_csv(cfg, res));
  write_text_file(dir / "summary.json", sweep_summary_json(cfg, res));
  write_text_file(dir / "manifest.json", manifest_json(cfg, {"trials.csv", "summary.json"}));
}

AuditReport audit_lemma1(const ExperimentConfig& cfg) {
  cfg.validate();
  const CodeMatrix C = generate_code_matrix(cfg.L, cfg.K, cfg.effective_code_seed());
  const ChannelParams params = cfg.channel();
  AuditReport rep;
  rep.moments = sweep_moments(cfg);
  DecoderCache cache(C, rep.moments, cfg);
  const double K = static_cast<double>(cfg.K);
  const double bound = detection_bound(cfg.nu, K);

  for (const auto M : cfg.M_list) {
    AuditPoint pt;
    pt.M = M;
    pt.M0 = fixed_M0(cfg, M);
    pt.bound = bound;
    const auto setup = cache.get(cfg.audit_decoder, pt.M0, false);
    pt.thresholds = setup.thresholds;
    if (!pt.thresholds.feasible || static_cast<double>(M) > pt.M0) {
      rep.feasible = false;
      rep.message += "M=" + std::to_string(M) + ": condition (tau + M0 beta < 1/2 with M <= M0) fails; bound is vacuous. ";
      rep.points.push_back(pt);
      continue;
    }
    const Eigen::MatrixXd& D = setup.decoder->entries;
    const double beta = pt.thresholds.coh_beta;
    const double tau = pt.thresholds.tau;
    const double Md = static_cast<double>(M);
    const double slack = 1e-12;

    struct Outcome {
      bool sigma = false, checked = false, violated = false, error = false;
    };
    std::vector<Outcome> out(cfg.trials);
    parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
      const TrialDraw d = draw_trial(cfg, C, params, M, t);
      const Eigen::VectorXd n_r = (d.rx.draw.noise - d.rx.model.u).real();
      const double sig = (D.transpose() * n_r).cwiseAbs().maxCoeff();
      Outcome& o = out[t];
      o.sigma = sig <= tau;  // equality only matters when both vanish
      if (o.sigma) {
        o.checked = true;
        const Eigen::VectorXd corr = (D.transpose() * d.rx.y.real()).cwiseAbs();
        std::vector<char> in(static_cast<std::size_t>(cfg.K), 0);
        for (auto j : d.truth) in[static_cast<std::size_t>(j)] = 1;
        double outside = 0.0, inside_min = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < cfg.K; ++j) {
          if (in[static_cast<std::size_t>(j)]) inside_min = std::min(inside_min, corr(j));
          else outside = std::max(outside, corr(j));
        }
        if (outside > Md * beta + tau + slack) o.violated = true;
        if (!d.truth.empty() && inside_min < 1.0 - (Md - 1.0) * beta - tau - slack) o.violated = true;
      }
      const auto res = cmud_detect(C, D, d.rx.y, setup.thresholds, cfg.kappa_policy);
      o.error = res.detected != d.truth;
    });
    pt.trials = cfg.trials;
    for (const auto& o : out) {
      pt.sigma_events += o.sigma;
      pt.bound_checks += o.checked;
      pt.bound_violations += o.violated;
      pt.errors += o.error;
    }
    const double n = static_cast<double>(pt.trials);
    pt.pe = static_cast<double>(pt.errors) / n;
    const double p = std::max(pt.pe, bound);
    pt.se = std::sqrt(p * (1.0 - p) / n);
    pt.bound_holds = pt.pe <= bound + 3.0 * pt.se;
    rep.points.push_back(pt);
  }
  return rep;
}

std::string AuditReport::json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back({{"M", p.M},
                   {"M0", p.M0},
                   {"thresholds", thresholds_json(p.thresholds)},
                   {"trials", p.trials},
                   {"sigma_events", p.sigma_events},
                   {"sigma_frequency", p.trials ? static_cast<double>(p.sigma_events) / static_cast<double>(p.trials) : 0.0},
                   {"bound_checks", p.bound_checks},
                   {"bound_violations", p.bound_violations},
                   {"errors", p.errors},
                   {"P_e", p.pe},
                   {"se", p.se},
                   {"bound", p.bound},
                   {"bound_holds", p.bound_holds}});
  nlohmann::json j{{"feasible", feasible}, {"message", message}, {"moments", moments_json(moments)}, {"points", pts}};
  return j.dump(2) + "\n";
}

std::vector<FigurePanel> figure_panels(const std::string& figure) {
  using A = Algorithm;
  auto range = [](Eigen::Index a, Eigen::Index step, Eigen::Index b) {
    std::vector<Eigen::Index> v;
    for (auto m = a; m <= b; m += step) v.push_back(m);
    return v;
  };
  if (figure == "1")
    return {{"1", {256}, {0.01}, {0.01}, all_algorithms(), range(2, 2, 60)}};
  if (figure == "2a")
    return {{"2a", {256}, {0.15}, {0.2, 0.5}, {A::cmud_d1, A::cmud_d2}, range(1, 1, 10)}};
  if (figure == "2b")
    return {{"2b", {256}, {0.15}, {0.2, 0.5}, {A::lasso, A::tls}, range(2, 2, 24)}};
  if (figure == "3a")
    return {{"3a", {256}, {0.1, 0.15, 0.2}, {0.2}, {A::cmud_d1, A::cmud_d2}, range(1, 1, 12)}};
  if (figure == "3b")
    return {{"3b", {256}, {0.1, 0.15, 0.2}, {0.2}, {A::lasso, A::tls}, range(2, 2, 24)}};
  if (figure == "4a")
    return {{"4a", {200, 250, 300, 400}, {0.1}, {0.2}, {A::cmud_d1}, range(1, 1, 10)}};
  if (figure == "4b")
    return {{"4b", {200, 250, 300, 400}, {0.1}, {0.2}, {A::tls}, range(4, 2, 24)}};
  if (figure == "2" || figure == "3" || figure == "4") {
    auto a = figure_panels(figure + "a");
    auto b = figure_panels(figure + "b");
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  throw std::invalid_argument("unknown figure id \"" + figure + "\" (expected 1, 2, 2a, 2b, 3, 3a, 3b, 4, 4a, 4b)");
}

std::vector<FigureRow> emit_figure_data(const ExperimentConfig& base, const std::string& figure) {
  std::vector<FigureRow> rows;
  for (const auto& panel : figure_panels(figure)) {
    for (auto K : panel.K_values)
      for (double mm : panel.mismatch_values)
        for (double sv : panel.sigma_v_values) {
          ExperimentConfig cfg = base;
          cfg.K = K;
          cfg.sigma_e = mm;
          cfg.sigma_eta = mm;
          cfg.sigma_v = sv;
          cfg.algorithms = panel.algorithms;
          cfg.M_list.clear();
          for (auto m : panel.M_list)
            if (m <= K) cfg.M_list.push_back(m);
          const auto res = run_sweep(cfg);
          for (const auto& s : res.stats)
            rows.push_back({panel.id, K, mm, mm, sv, s});
        }
  }
  return rows;
}

std::string figure_csv(const std::vector<FigureRow>& rows) {
  std::string out = "panel,K,sigma_e,sigma_eta,sigma_theta,M,algorithm,trials,errors,P_e,ci_lo,ci_hi\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%lld,%g,%g,%g,%lld,%s,%zu,%zu,%.6f,%.6f,%.6f\n", r.panel.c_str(),
                  static_cast<long long>(r.K), r.sigma_e, r.sigma_eta, r.sigma_v,
                  static_cast<long long>(r.stat.M), to_string(r.stat.algorithm).c_str(), r.stat.trials,
                  r.stat.errors, r.stat.pe, r.stat.ci_lo, r.stat.ci_hi);
    out += buf;
  }
  return out;
}

}  // namespace mudlab
