#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mudlab/channel_model.hpp"
#include "mudlab/cmud.hpp"
#include "mudlab/decoder_design.hpp"
#include "mudlab/lambda_stats.hpp"
#include "mudlab/sparse_tls.hpp"

namespace mudlab {

enum class Algorithm { cmud_scaled, cmud_d1, cmud_d2, lasso, tls };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);
const std::vector<Algorithm>& all_algorithms();

enum class M0Policy { fixed, estimated };

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Flat key = value configuration. Noise levels are standard deviations.
struct ExperimentConfig {
  Eigen::Index L = 144;
  Eigen::Index K = 256;
  std::vector<Eigen::Index> M_list{10};
  double sigma_h = 1.0;
  double sigma_e = 0.01;
  double sigma_eta = 0.01;
  double sigma_v = 0.01;
  double theta_deg = 5.0;
  std::size_t trials = 400;
  std::uint64_t master_seed = 1;
  std::uint64_t code_seed = 0;  // 0: derived from master_seed
  std::vector<Algorithm> algorithms = all_algorithms();

  double nu = 1.0;
  M0Policy M0_policy = M0Policy::estimated;
  double M0 = 0.0;  // fixed policy; 0 uses the sweep point's M
  KappaPolicy kappa_policy = KappaPolicy::edge;

  TlsConfig tls;
  bool tls_xi_auto = true;
  double lasso_xi = 0.0;  // 0: automatic
  double xi_max = 1e4;

  double varrho = 0.95;
  std::size_t lambda_draws = 1'000'000;
  SolverOptions d1;
  Algorithm audit_decoder = Algorithm::cmud_d1;

  unsigned threads = 1;
  bool allow_collisions = false;
  bool record_runtime = false;

  ExperimentConfig() { d1.throw_on_budget = false; }

  ChannelParams channel() const;
  std::uint64_t effective_code_seed() const;
  void validate() const;

  // Applies one key = value assignment. Throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);

  // Every result-affecting key in a fixed order; the config hash is taken
  // over this text.
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct TrialRecord {
  std::size_t trial = 0;
  Eigen::Index M = 0;
  Algorithm algorithm = Algorithm::cmud_scaled;
  bool exact_success = false;
  std::size_t missed = 0;
  std::size_t false_alarms = 0;
  double runtime_ms = 0.0;
  std::uint64_t child_seed = 0;
};

struct PeStat {
  Algorithm algorithm = Algorithm::cmud_scaled;
  Eigen::Index M = 0;
  std::size_t trials = 0;
  std::size_t errors = 0;
  double pe = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct SweepResult {
  std::vector<TrialRecord> records;  // sorted by (M, algorithm name, trial)
  std::vector<PeStat> stats;
  LambdaMoments moments;
};

// Wilson score interval at z = 1.96.
std::pair<double, double> wilson_interval(std::size_t errors, std::size_t n);

// (pi (1 + nu) log K)^{-1/2} K^{-nu}.
double detection_bound(double nu, double K);

SweepResult run_sweep(const ExperimentConfig& cfg);

std::string sweep_csv(const ExperimentConfig& cfg, const SweepResult& res);
std::string sweep_summary_json(const ExperimentConfig& cfg, const SweepResult& res);
std::string manifest_json(const ExperimentConfig& cfg, const std::vector<std::string>& outputs);

// Writes trials.csv, summary.json and manifest.json into dir.
void write_sweep(const ExperimentConfig& cfg, const SweepResult& res,
                 const std::filesystem::path& dir);

struct AuditPoint {
  Eigen::Index M = 0;
  double M0 = 0.0;
  CoherenceThresholds thresholds;
  std::size_t trials = 0;
  std::size_t sigma_events = 0;
  std::size_t bound_checks = 0;
  std::size_t bound_violations = 0;
  std::size_t errors = 0;
  double pe = 0.0;
  double se = 0.0;
  double bound = 0.0;
  bool bound_holds = false;
};

struct AuditReport {
  bool feasible = true;
  std::string message;
  LambdaMoments moments;
  std::vector<AuditPoint> points;
  std::string json() const;
};

// Measures event Sigma per trial, checks the per-code correlation bounds on
// Sigma trials and compares P_e to the detection bound. Points whose
// thresholds are infeasible are reported as such and not simulated.
AuditReport audit_lemma1(const ExperimentConfig& cfg);

struct FigurePanel {
  std::string id;
  std::vector<Eigen::Index> K_values;
  std::vector<double> mismatch_values;  // sigma_e = sigma_eta
  std::vector<double> sigma_v_values;
  std::vector<Algorithm> algorithms;
  std::vector<Eigen::Index> M_list;
};

// Panels for "1", "2a", "2b", "3a", "3b", "4a", "4b"; "2", "3", "4" give both panels.
std::vector<FigurePanel> figure_panels(const std::string& figure);

struct FigureRow {
  std::string panel;
  Eigen::Index K = 0;
  double sigma_e = 0.0;
  double sigma_eta = 0.0;
  double sigma_v = 0.0;
  PeStat stat;
};

// Runs every grid point of the figure with the base config's trials, seed
// and solver settings.
std::vector<FigureRow> emit_figure_data(const ExperimentConfig& base, const std::string& figure);
std::string figure_csv(const std::vector<FigureRow>& rows);

}  // namespace mudlab
