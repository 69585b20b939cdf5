#pragma once

// Tight-tolerance classical integration used as ground truth.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnmpc/ocp.hpp"
#include "pnmpc/problem.hpp"

namespace pnmpc {

class StiffnessError : public std::runtime_error {
 public:
  explicit StiffnessError(double t)
      : std::runtime_error("reference integrator step size underflow at t = " + std::to_string(t)), t_(t) {}
  double time() const { return t_; }

 private:
  double t_;
};

/// Samples (t, x, x') at every accepted step and every requested output time.
struct ReferenceSolution {
  std::vector<double> t;
  std::vector<VecD> x;
  std::vector<VecD> dxdt;        // left limit at control nodes
  std::vector<VecD> dxdt_right;  // right limit at control nodes, else equal to dxdt
  int interpolation_order = 4;
  double rtol = 0.0;
  double atol = 0.0;
  /// Max over steps of the scaled local error estimate (<= 1 when every step
  /// met the tolerance).
  double max_error_ratio = 0.0;
  long steps = 0;
  long rejected = 0;
  /// Set when the step size underflowed and the solve stopped early (finite
  /// escape); the samples then end there.
  std::optional<double> escape_time;

  /// Exact at stored samples, cubic Hermite between them.
  VecD state_at(double time) const;
};

struct ReferenceOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Extra times at which the pair's own dense-output interpolant is sampled.
  std::vector<double> output_times;
  long max_steps = 10'000'000;
  /// Return the samples computed so far instead of throwing StiffnessError.
  bool stop_at_escape = false;
};

/// Dormand-Prince 5(4) with a PI step-size controller. Every node of the
/// policy's control grid is a step point, so no step straddles a kink or jump
/// of the input.
ReferenceSolution solve_reference(const ControlledIVP& ivp, const InputPolicy& policy,
                                  const ReferenceOptions& options = {});

ReferenceSolution solve_reference(const ControlledIVP& ivp, const InputPolicy& policy, double rtol, double atol);

/// Riemann cost of the reference trajectory at the control nodes.
double ground_truth_cost(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta, double rtol = 1e-10,
                         double atol = 1e-12);

/// Cumulative ground-truth cost at control nodes 0..N (entry 0 is zero).
/// Entries past the end of a truncated reference are +inf.
std::vector<double> cumulative_ground_truth_cost(const OCPSpec& spec, const VecD& theta,
                                                 const ReferenceSolution& ref);

}  // namespace pnmpc
