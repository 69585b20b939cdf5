#pragma once

// Limited-memory quasi-Newton minimization under box constraints with a
// projected backtracking (Armijo) line search.

#include <functional>
#include <string>
#include <vector>

#include "pnmpc/linalg.hpp"

namespace pnmpc {

struct OptimizerOptions {
  int memory = 10;
  double armijo = 1e-4;
  double gtol = 1e-6;  // on the infinity norm of the projected gradient
  double ftol = 1e-9;  // on the relative decrease per iteration
  int max_iter = 500;
  int max_backtracks = 40;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double projected_gradient_norm = 0.0;
  double step = 0.0;
  int evaluations = 0;
};

struct OptimizerResult {
  VecD x;
  double f = 0.0;
  VecD g;
  bool converged = false;
  std::string status;
  std::vector<IterationRecord> trace;
};

struct BoxObjective {
  /// Returns +inf (or throws) where the objective is undefined; the line
  /// search backtracks away from such points.
  std::function<double(const VecD&)> value;
  std::function<VecD(const VecD&)> gradient;
};

/// Throws std::invalid_argument for inconsistent bounds and
/// std::domain_error when the objective is not finite at the projected x0.
OptimizerResult minimize_box(const BoxObjective& objective, const VecD& x0, const VecD& lower,
                             const VecD& upper, const OptimizerOptions& options = {});

/// Infinity norm of P(x - g) - x.
double projected_gradient_norm(const VecD& x, const VecD& g, const VecD& lower, const VecD& upper);

}  // namespace pnmpc
