#pragma once

// Single-shooting optimal control with the expected quadratic cost under the
// probabilistic ODE solution, plus the certainty-equivalent baseline that
// drops the covariance term.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnmpc/filter.hpp"
#include "pnmpc/optimizer.hpp"
#include "pnmpc/prior.hpp"
#include "pnmpc/problem.hpp"

namespace pnmpc {

enum class CostMode { Proposed, Classical };

CostMode parse_cost_mode(const std::string& s);
std::string to_string(CostMode mode);

/// Thrown when the solver diverges for a particular parameter vector.
class CostEvaluationError : public std::runtime_error {
 public:
  CostEvaluationError(const std::string& what, VecD theta);
  const VecD& theta() const { return theta_; }

 private:
  VecD theta_;
};

struct Bounds {
  VecD lower;
  VecD upper;
};

class OCPSpec {
 public:
  /// Rejects cost weights that are not symmetric positive definite.
  OCPSpec(MatD q_cost, MatD r_cost, Grids grids, IWPModel model, CostMode mode = CostMode::Proposed,
          PolicyKind policy_kind = PolicyKind::CubicHermite, SmootherOptions smoother = {},
          std::optional<Bounds> bounds = std::nullopt);

  const MatD& q_cost() const { return q_; }
  const MatD& r_cost() const { return r_; }
  const Grids& grids() const { return grids_; }
  const IWPModel& model() const { return model_; }
  CostMode mode() const { return mode_; }
  PolicyKind policy_kind() const { return policy_kind_; }
  const SmootherOptions& smoother() const { return smoother_; }
  const std::optional<Bounds>& bounds() const { return bounds_; }

  PolicyBasis basis() const { return PolicyBasis(grids_.control, policy_kind_, static_cast<int>(r_.rows())); }
  int parameter_count() const { return basis().parameter_count(); }

  OCPSpec with_mode(CostMode mode) const;
  OCPSpec with_weights(MatD q_cost, MatD r_cost) const;

 private:
  MatD q_;
  MatD r_;
  Grids grids_;
  IWPModel model_;
  CostMode mode_;
  PolicyKind policy_kind_;
  SmootherOptions smoother_;
  std::optional<Bounds> bounds_;
};

/// Builds the OCPSpec for a problem bundle: grid of `n_int` integration steps,
/// prior order, policy kind and bounds from the problem settings.
OCPSpec make_spec(const Problem& problem, CostMode mode, int n_int, SmootherOptions smoother = {});

/// Terms already weighted by dt_k / 2 (and the diffusion, for the trace).
struct NodeCost {
  double mean_state = 0.0;
  double input = 0.0;
  double trace = 0.0;
};

struct CostReport {
  double total = 0.0;
  std::vector<NodeCost> per_node;
  double kappa = 0.0;
};

CostReport expected_cost(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta);

/// Cost of an already computed posterior (used for expected_cost and to
/// inject alternative state trajectories).
CostReport cost_from_posterior(const OCPSpec& spec, const VecD& theta, const PosteriorTrajectory<double>& post);

/// Riemann sum over control nodes 0..N-1 of dt_k/2 (x^T Q x + u^T R u) for
/// given node states.
double riemann_cost(const OCPSpec& spec, const VecD& theta, const std::vector<VecD>& node_states);

template <class S>
S expected_cost_value(const OCPSpec& spec, const ControlledIVP& ivp, const Vec<S>& theta);

extern template double expected_cost_value<double>(const OCPSpec&, const ControlledIVP&, const Vec<double>&);
extern template Dual expected_cost_value<Dual>(const OCPSpec&, const ControlledIVP&, const Vec<Dual>&);

/// Exact gradient by forward sensitivities: one tangent pass of the
/// filter/smoother/cost per parameter, distributed over OpenMP threads.
VecD gradient(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta);

/// Same directional passes run sequentially; bitwise identical to gradient().
VecD gradient_serial(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta);

/// Central differences with step 1e-6 (1 + |theta_i|).
VecD finite_difference_gradient(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta);

struct OCPSolution {
  VecD theta;
  CostReport report;
  std::vector<IterationRecord> trace;
  bool converged = false;
  std::string status;
};

OCPSolution solve_ocp(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta0,
                      const OptimizerOptions& options = {});

}  // namespace pnmpc
