#pragma once

// Configuration-driven experiment runner shared by the command-line binary
// and the tests: JSON parsing (fail-closed on unknown keys), seeded initial
// states, run orchestration, artifact writing, and the sweep driver.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmflow/diagnostics.hpp"
#include "mmflow/jko.hpp"
#include "mmflow/model_params.hpp"
#include "mmflow/rescale.hpp"

namespace mmflow {

struct InitialSpec {
  std::string kind = "barenblatt";
  std::uint64_t seed = 1;
  // gaussian
  double mean = 0.0;
  double variance = 1.0;
  // uniform
  double a = -1.0;
  double b = 1.0;
  // double_bump
  std::vector<double> centers{-1.0, 1.0};
  std::vector<double> widths{0.3, 0.3};
  std::vector<double> weights{0.5, 0.5};
  // perturbed_barenblatt
  double amplitude = 0.1;
};

struct RunConfig {
  double alpha = 0.75;
  double lambda = 1.0;
  int dim = 1;
  int n_points = 200;
  int eulerian_grid = 512;
  std::string schedule = "uniform";
  double tau = 1e-3;
  double tau0 = 1e-3;
  double ratio = 1.0;
  int steps = 1;
  InitialSpec initial;
  FunctionalKind functional = FunctionalKind::fourth_order;
  double inner_grad_tol = 1e-8;
  int inner_max_iter = 500;
  std::string output_directory;
  int snapshot_every = 0;  // 0: only the initial and final states
};

// parses and validates; throws ConfigParse naming any unknown or ill-typed key
RunConfig parse_run_config(const std::string& json_text);
std::string resolved_config_json(const RunConfig& rc);

QuantileDensity make_initial(const InitialSpec& spec, int n_points,
                             const ModelParameters& p, FunctionalKind kind);

Partition make_partition(const RunConfig& rc);

struct RunResult {
  RunConfig config;
  ModelParameters params;
  Trajectory traj;
  EquilibriumRefs refs;
  LedgerResult ledger;
  std::optional<DecayFit> fit_h, fit_f, fit_l1;
  std::vector<double> l1_series;  // per state, empty when no equilibrium
  std::string summary_json;
  bool ledger_ok = false;
};

// computes the trajectory, the ledger, the decay fits, and the summary;
// performs no file io
RunResult execute_run(const RunConfig& rc);

// writes ledger.csv, state_*.csv snapshots, summary.json, resolved_config.json
// and, for zero-confinement fourth-order runs, asymptotics.csv
void write_run_artifacts(const RunResult& res);

std::string state_csv(const QuantileDensity& st);
std::string asymptotics_csv(const std::vector<AsymptoticsRow>& rows,
                            bool with_w12);
std::string correspondence_csv(const CorrespondenceReport& rep);

struct SweepCell {
  RunConfig config;
  std::string label;
};

struct SweepOutcome {
  SweepCell cell;
  std::string status;  // ok | ledger_fail | error:<message>
  double fitted_h_rate = 0.0, fitted_f_rate = 0.0, fitted_l1_rate = 0.0;
  double eq84_max_residual = 0.0;
  bool ledger_pass = false;
  bool has_rates = false;
};

std::vector<SweepCell> parse_sweep_config(const std::string& json_text);
std::vector<SweepOutcome> run_sweep(const std::vector<SweepCell>& cells,
                                    int threads);
std::string sweep_report_csv(const std::vector<SweepOutcome>& outcomes);

// full command-line entry point; returns the process exit code
int cli_main(int argc, char** argv);

}  // namespace mmflow
