#pragma once

// Experiment drivers behind the command-line tool. Each writes plot-ready CSV
// files plus a gnuplot script into the output directory and returns the
// numbers it wrote.

#include <filesystem>
#include <string>
#include <vector>

#include "pnmpc/ocp.hpp"
#include "pnmpc/problem.hpp"

namespace pnmpc {

struct ExperimentConfig {
  Problem problem = logistic_example();
  std::vector<CostMode> modes{CostMode::Classical, CostMode::Proposed};
  std::vector<int> n_int{40};
  SmootherOptions smoother;
  OptimizerOptions optimizer;
  std::filesystem::path out_dir = ".";
  /// run_convergence only.
  std::vector<int> orders{1, 2};
  std::vector<int> convergence_steps{40, 80, 160, 320, 640};

  /// Throws std::invalid_argument unless every n_int is a positive multiple
  /// of the problem's control intervals.
  void validate() const;
};

/// Reads {name, x0, T, N, N_int, Q_diag, R_diag, policy_kind, order, bounds,
/// modes, smoother, out} into a config.
ExperimentConfig config_from_json(const nlohmann::json& j);

std::vector<int> default_sweep_n_int();

struct OpenLoopRun {
  CostMode mode;
  OCPSolution solution;
  double predicted_cost = 0.0;
  double ground_truth_cost = 0.0;
  std::filesystem::path csv;
};

/// Solves the OCP per mode at config.n_int.front() and writes
/// openloop_<mode>.csv (one row per control node).
std::vector<OpenLoopRun> run_openloop(const ExperimentConfig& config);

struct SweepRow {
  int n_int = 0;
  CostMode mode = CostMode::Proposed;
  double predicted_cost = 0.0;
  double ground_truth_cost = 0.0;
  bool ok = true;
};

/// One OCP solve per (n_int, mode); writes sweep.csv. Failed points are NaN
/// rows. Throws if every point failed.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config);

struct ConvergenceRow {
  int order = 0;
  int n_steps = 0;
  double max_error = 0.0;
};

/// Zero-input solves of a problem with a closed-form solution on uniform
/// grids; writes convergence.csv.
std::vector<ConvergenceRow> run_convergence(const ExperimentConfig& config);

/// Least-squares slope of log(error) against log(step size) for one order.
double empirical_order(const std::vector<ConvergenceRow>& rows, int order);

/// Writes the file through a temporary sibling and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

/// %.17g formatting.
std::string format_double(double v);

}  // namespace pnmpc
