// mudlab: command-line front end for the detection lab.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "mudlab/channel_model.hpp"
#include "mudlab/cmud.hpp"
#include "mudlab/codebook.hpp"
#include "mudlab/decoder_design.hpp"
#include "mudlab/harness.hpp"
#include "mudlab/lambda_stats.hpp"
#include "mudlab/rng.hpp"
#include "mudlab/signal_io.hpp"
#include "mudlab/sparse_tls.hpp"

using namespace mudlab;
using nlohmann::json;

namespace {

struct ChannelOpts {
  double sigma_h = 1.0, sigma_e = 0.01, sigma_eta = 0.01, sigma_v = 0.01, theta = 5.0;
  double varrho = 0.95;
  std::size_t draws = 1'000'000;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--sigma-h", sigma_h, "CFR standard deviation")->capture_default_str();
    app->add_option("--sigma-e", sigma_e, "pilot estimation error std")->capture_default_str();
    app->add_option("--sigma-eta", sigma_eta, "channel aging std")->capture_default_str();
    app->add_option("--sigma-v", sigma_v, "receiver noise std")->capture_default_str();
    app->add_option("--theta", theta, "alpha = exp(i theta), degrees")->capture_default_str();
    app->add_option("--varrho", varrho, "percentile level of the truncation box")->capture_default_str();
    app->add_option("--draws", draws, "Monte Carlo draws for the percentile")->capture_default_str();
    app->add_option("--seed", seed, "seed")->capture_default_str();
  }
  ChannelParams params() const { return ChannelParams::from_std(sigma_h, sigma_e, sigma_eta, theta, sigma_v); }
  LambdaMoments moments_() const {
    Rng rng(seed);
    return moments(params(), varrho, rng, draws);
  }
};

json moments_json(const LambdaMoments& lm) {
  return json{{"sigma_u_sq", lm.sigma_u_sq}, {"sigma_v_sq", lm.sigma_v_sq},
              {"rho", {lm.rho.real(), lm.rho.imag()}}, {"Gamma", lm.Gamma},
              {"alpha_hat", lm.alpha_hat}, {"beta_hat", lm.beta_hat},
              {"gamma_polar", lm.gamma_polar}, {"varrho", lm.varrho},
              {"T_varrho", lm.T_varrho}, {"t_max", lm.t_max},
              {"mu_r", lm.mu_r}, {"m2_r", lm.m2_r},
              {"sigma_r_sq", lm.sigma_r_sq}, {"degenerate", lm.degenerate}};
}

std::vector<Eigen::Index> one_based(const std::vector<Eigen::Index>& v) {
  std::vector<Eigen::Index> out;
  for (auto i : v) out.push_back(i + 1);
  return out;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") std::cout << text;
  else write_text_file(path, text);
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(kv, "--set expects key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mudlab: multiuser detection lab for random-access bandwidth-request channels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MUDLAB_VERSION_STRING);

  // codes
  auto* codes = app.add_subcommand("codes", "generate a +-1 code matrix");
  Eigen::Index cL = 144, cK = 256;
  std::uint64_t cseed = 1;
  std::string cout_path;
  codes->add_option("-L", cL, "subcarriers")->capture_default_str();
  codes->add_option("-K", cK, "codes")->capture_default_str();
  codes->add_option("--seed", cseed, "generator seed")->capture_default_str();
  codes->add_option("-o,--out", cout_path, "output file (stdout if omitted)");

  // lambda-stats
  auto* lam = app.add_subcommand("lambda-stats", "moments of Re(lambda) as JSON");
  ChannelOpts lopts;
  lopts.add(lam);

  // design-decoder
  auto* dd = app.add_subcommand("design-decoder", "build a decoder matrix");
  std::string dd_codes, dd_out, dd_method = "optimal";
  double dd_M0 = 10, dd_nu = 1.0;
  ChannelOpts dopts;
  SolverOptions sopts;
  sopts.throw_on_budget = false;
  dd->add_option("--codes", dd_codes, "code matrix file")->required();
  dd->add_option("--method", dd_method, "scaled|mmse|optimal")
      ->check(CLI::IsMember({"scaled", "mmse", "optimal"}))
      ->capture_default_str();
  dd->add_option("--M0", dd_M0, "overestimate of the number of users")->capture_default_str();
  dd->add_option("--nu", dd_nu, "bound parameter")->capture_default_str();
  dd->add_option("--max-iter", sopts.max_iter, "decoder-I iteration budget")->capture_default_str();
  dd->add_option("-o,--out", dd_out, "decoder file; a .json sidecar is written next to it")->required();
  dopts.add(dd);

  // detect
  auto* det = app.add_subcommand("detect", "detect active codes in a received signal");
  std::string det_codes, det_dec, det_sig, det_algo = "cmud", det_kappa = "edge";
  double det_M0 = 0, det_nu = 1.0, det_xi = 0;
  TlsConfig tcfg;
  ChannelOpts topts;
  det->add_option("--codes", det_codes, "code matrix file")->required();
  det->add_option("--signal", det_sig, "received signal file, \"re im\" per line")->required();
  det->add_option("--algo", det_algo, "cmud|tls|lasso")
      ->check(CLI::IsMember({"cmud", "tls", "lasso"}))
      ->capture_default_str();
  det->add_option("--decoder", det_dec, "decoder file (cmud; default C/L)");
  det->add_option("--M0", det_M0, "user-count overestimate; 0 estimates it from the signal energy");
  det->add_option("--nu", det_nu, "bound parameter")->capture_default_str();
  det->add_option("--kappa-policy", det_kappa, "edge|midpoint")->capture_default_str();
  det->add_option("--xi", det_xi, "data-fidelity weight (tls/lasso); 0 picks it from the noise level");
  det->add_option("--p", tcfg.p, "l_p exponent (tls)")->capture_default_str();
  det->add_option("--max-outer", tcfg.max_outer, "outer iterations (tls)")->capture_default_str();
  det->add_option("--max-dual-steps", tcfg.max_dual_steps, "dual ascent steps (tls)")->capture_default_str();
  det->add_option("--stop-tol", tcfg.stop_tol, "outer stopping tolerance (tls)")->capture_default_str();
  topts.add(det);

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw one received signal");
  std::string sim_codes, sim_out;
  Eigen::Index sim_M = 10;
  ChannelOpts sopts2;
  sim->add_option("--codes", sim_codes, "code matrix file")->required();
  sim->add_option("-M", sim_M, "active users")->capture_default_str();
  sim->add_option("-o,--out", sim_out, "signal file")->required();
  sopts2.add(sim);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Monte Carlo sweep over M");
  std::string sw_cfg, sw_out = "sweep_out";
  std::vector<std::string> sw_set;
  std::uint64_t sw_seed = 0;
  unsigned sw_threads = 0;
  sw->add_option("-c,--config", sw_cfg, "key = value config file");
  sw->add_option("--set", sw_set, "override, key=value (repeatable)");
  sw->add_option("--seed", sw_seed, "master seed override");
  sw->add_option("--threads", sw_threads, "worker threads");
  sw->add_option("-o,--out", sw_out, "output directory")->capture_default_str();

  // figure
  auto* fig = app.add_subcommand("figure", "data for one of the published figures");
  std::string fig_id, fig_cfg, fig_out;
  std::vector<std::string> fig_set;
  fig->add_option("--id", fig_id, "1, 2, 2a, 2b, 3, 3a, 3b, 4, 4a, 4b")->required();
  fig->add_option("-c,--config", fig_cfg, "base config (trials, seed, solver settings)");
  fig->add_option("--set", fig_set, "override, key=value (repeatable)");
  fig->add_option("-o,--out", fig_out, "CSV file (stdout if omitted)");

  // audit
  auto* aud = app.add_subcommand("audit", "check the detection bound empirically");
  std::string aud_cfg, aud_out;
  std::vector<std::string> aud_set;
  aud->add_option("-c,--config", aud_cfg, "key = value config file");
  aud->add_option("--set", aud_set, "override, key=value (repeatable)");
  aud->add_option("-o,--out", aud_out, "JSON report (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*codes) {
      emit(format_code_matrix(generate_code_matrix(cL, cK, cseed)), cout_path);
    } else if (*lam) {
      const auto lm = lopts.moments_();
      json j = moments_json(lm);
      if (!lm.degenerate && lm.t_max > 0) j["m2_r_disk"] = second_moment_lambda_r(lopts.params(), lm.t_max);
      std::cout << j.dump(2) << "\n";
    } else if (*dd) {
      const auto C = load_code_matrix(dd_codes);
      const auto lm = dopts.moments_();
      const double sv2 = dopts.sigma_v * dopts.sigma_v;
      const double K = static_cast<double>(C.K());
      const double eps = dd_M0 / K;
      const double ups = upsilon(dd_nu, K, dd_M0, lm.sigma_r_sq, sv2);
      DecoderMatrix d;
      json extra;
      if (dd_method == "scaled") {
        d = scaled_code_decoder(C);
      } else if (dd_method == "mmse") {
        d = design_decoder_mmse(C, mmse_delta(eps, lm.mu_r, lm.m2_r), sv2);
      } else {
        const auto r = design_decoder_optimal(C, eps, std::max(0.0, lm.mu_r), dd_M0, ups, sopts);
        d = r.decoder;
        extra = {{"iterations", r.iterations}, {"converged", r.converged},
                 {"equality_residual", r.equality_residual}};
      }
      const auto st = decoder_objective(d.entries, C, eps, lm.mu_r, dd_M0, ups);
      save_real_matrix(d.entries, dd_out);
      json side{{"provenance", to_string(d.provenance)},
                {"alpha", st.alpha}, {"beta", st.beta}, {"gamma", st.gamma},
                {"objective", st.objective},
                {"inputs", {{"eps", eps}, {"mu_r", lm.mu_r}, {"m2_r", lm.m2_r},
                            {"sigma_r_sq", lm.sigma_r_sq}, {"sigma_v_sq", sv2},
                            {"M0", dd_M0}, {"nu", dd_nu}, {"Upsilon", ups},
                            {"delta", mmse_delta(eps, lm.mu_r, lm.m2_r)}}},
                {"solver", extra}};
      write_text_file(dd_out + ".json", side.dump(2) + "\n");
      std::cout << side.dump(2) << "\n";
    } else if (*sim) {
      const auto C = load_code_matrix(sim_codes);
      Rng rng(sopts2.seed);
      const auto S = sample_active_set(C.K(), sim_M, rng);
      const auto rx = synthesize_received(C, S, sopts2.params(), rng);
      save_received(rx.y, sim_out);
      auto active = S.indices;
      std::sort(active.begin(), active.end());
      std::cout << json{{"active", one_based(active)}}.dump() << "\n";
    } else if (*det) {
      const auto C = load_code_matrix(det_codes);
      const auto y = load_received(det_sig);
      if (y.size() != C.L()) throw std::invalid_argument("signal has " + std::to_string(y.size()) +
                                                         " lines, code matrix has L=" + std::to_string(C.L()));
      const auto lm = topts.moments_();
      const double sv2 = topts.sigma_v * topts.sigma_v;
      const double K = static_cast<double>(C.K());
      double M0 = det_M0;
      if (M0 <= 0) M0 = std::max<double>(1.0, static_cast<double>(estimate_user_count(y, lm, sv2, C.L(), C.K())));
      json out{{"algo", det_algo}, {"M0", M0}};
      if (det_algo == "cmud") {
        const Eigen::MatrixXd D = det_dec.empty() ? scaled_code_decoder(C).entries : load_real_matrix(det_dec);
        const auto th = compute_thresholds(D, C, lm, sv2, M0, det_nu);
        const auto r = cmud_detect(C, D, y, th, parse_kappa_policy(det_kappa));
        json trace = json::array();
        for (const auto& s : r.trace)
          trace.push_back({{"kappa", s.kappa}, {"added", one_based(s.added)}, {"residual_norm", s.residual_norm}});
        out["detected"] = one_based(r.detected);
        out["trace"] = trace;
        out["iterations"] = r.iterations;
        out["terminated_by"] = to_string(r.terminated_by);
        out["guaranteed"] = r.guaranteed;
        out["tau"] = th.tau;
      } else {
        const double xi = det_xi > 0 ? det_xi : default_xi(K, M0, lm.sigma_r_sq, sv2, 1e4);
        out["xi"] = xi;
        if (det_algo == "tls") {
          tcfg.xi = xi;
          const auto r = lp_tls_detect(C.entries(), y, tcfg);
          std::vector<double> obj;
          for (const auto& it : r.trace) obj.push_back(it.objective);
          out["detected"] = one_based(r.support);
          out["x"] = std::vector<double>(r.x.data(), r.x.data() + r.x.size());
          out["objective_trace"] = obj;
          out["converged"] = r.converged;
          out["certified"] = r.certified;
        } else {
          const auto r = lasso_detect(C.entries(), y, xi);
          out["detected"] = one_based(r.support);
          out["x"] = std::vector<double>(r.x.data(), r.x.data() + r.x.size());
          out["duality_gap"] = r.duality_gap;
          out["converged"] = r.converged;
        }
      }
      std::cout << out.dump(2) << "\n";
    } else if (*sw) {
      auto cfg = load_config(sw_cfg, sw_set);
      if (sw_seed) cfg.master_seed = sw_seed;
      if (sw_threads) cfg.threads = sw_threads;
      const auto res = run_sweep(cfg);
      write_sweep(cfg, res, sw_out);
      std::cout << sweep_summary_json(cfg, res);
    } else if (*fig) {
      const auto cfg = load_config(fig_cfg, fig_set);
      emit(figure_csv(emit_figure_data(cfg, fig_id)), fig_out);
    } else if (*aud) {
      const auto cfg = load_config(aud_cfg, aud_set);
      const auto rep = audit_lemma1(cfg);
      emit(rep.json(), aud_out);
      if (!rep.feasible) {
        std::cerr << "audit: " << rep.message << "\n";
        return 3;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
