#pragma once

// Controlled initial value problems, input-policy parameterizations and the
// time grids they live on.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "pnmpc/dual.hpp"
#include "pnmpc/linalg.hpp"
#include "pnmpc/taylor.hpp"

namespace pnmpc {

template <class S>
using VectorField = std::function<Vec<S>(const S& t, const Vec<S>& x, const Vec<S>& u)>;
template <class S>
using StateJacobian = std::function<Mat<S>(const S& t, const Vec<S>& x, const Vec<S>& u)>;

/// x' = f(t, x, u), x(0) = x0 on [0, horizon].
///
/// The field is stored once per scalar type the solvers need: plain values,
/// forward tangents, and Taylor series (for exact initial derivatives). Build
/// instances through make_ivp, which instantiates one generic callable for
/// every scalar.
struct ControlledIVP {
  std::string name;
  VecD x0;
  double horizon = 1.0;
  int input_dim = 1;

  VectorField<double> f;
  VectorField<Dual> f_dual;
  VectorField<Taylor<double>> f_taylor;
  VectorField<Taylor<Dual>> f_taylor_dual;
  StateJacobian<double> jac_x;
  StateJacobian<Dual> jac_x_dual;

  /// Closed-form solution for zero input, when one is known.
  std::function<VecD(double)> exact_solution;

  int dim() const { return static_cast<int>(x0.size()); }

  template <class S>
  Vec<S> field(const S& t, const Vec<S>& x, const Vec<S>& u) const {
    if constexpr (std::is_same_v<S, double>) return f(t, x, u);
    else if constexpr (std::is_same_v<S, Dual>) return f_dual(t, x, u);
    else if constexpr (std::is_same_v<S, Taylor<double>>) return f_taylor(t, x, u);
    else return f_taylor_dual(t, x, u);
  }

  template <class S>
  Mat<S> jacobian(const S& t, const Vec<S>& x, const Vec<S>& u) const {
    if constexpr (std::is_same_v<S, double>) return jac_x(t, x, u);
    else return jac_x_dual(t, x, u);
  }
};

/// Field and Jacobian are generic callables `(auto t, auto x, auto u)`.
template <class Field, class Jacobian>
ControlledIVP make_ivp(std::string name, VecD x0, double horizon, int input_dim, Field field,
                       Jacobian jacobian) {
  ControlledIVP ivp;
  ivp.name = std::move(name);
  ivp.x0 = std::move(x0);
  ivp.horizon = horizon;
  ivp.input_dim = input_dim;
  ivp.f = [field](const double& t, const VecD& x, const VecD& u) -> VecD { return field(t, x, u); };
  ivp.f_dual = [field](const Dual& t, const Vec<Dual>& x, const Vec<Dual>& u) -> Vec<Dual> {
    return field(t, x, u);
  };
  ivp.f_taylor = [field](const Taylor<double>& t, const Vec<Taylor<double>>& x,
                         const Vec<Taylor<double>>& u) -> Vec<Taylor<double>> { return field(t, x, u); };
  ivp.f_taylor_dual = [field](const Taylor<Dual>& t, const Vec<Taylor<Dual>>& x,
                              const Vec<Taylor<Dual>>& u) -> Vec<Taylor<Dual>> { return field(t, x, u); };
  ivp.jac_x = [jacobian](const double& t, const VecD& x, const VecD& u) -> MatD { return jacobian(t, x, u); };
  ivp.jac_x_dual = [jacobian](const Dual& t, const Vec<Dual>& x, const Vec<Dual>& u) -> Mat<Dual> {
    return jacobian(t, x, u);
  };
  return ivp;
}

/// Largest relative deviation between jac_x and central differences of f at
/// the given probe point.
double jacobian_mismatch(const ControlledIVP& ivp, double t, const VecD& x, const VecD& u);

enum class PolicyKind { PiecewiseConstant, CubicHermite };

PolicyKind parse_policy_kind(const std::string& s);
std::string to_string(PolicyKind kind);

/// Control grid plus interpolation rule; maps a parameter vector to u(t).
///
/// Parameters hold one input_dim block per control node (N + 1 blocks), node
/// k at offset k * input_dim. Every evaluation is a fixed linear combination
/// of the blocks, so u is linear in theta for both kinds.
class PolicyBasis {
 public:
  PolicyBasis(std::vector<double> grid, PolicyKind kind, int input_dim = 1);

  const std::vector<double>& grid() const { return grid_; }
  PolicyKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int intervals() const { return static_cast<int>(grid_.size()) - 1; }
  int parameter_count() const { return input_dim_ * static_cast<int>(grid_.size()); }
  double horizon() const { return grid_.back(); }

  /// Weights of the N + 1 node blocks in the `derivative`-th time derivative
  /// of u at t. Throws std::out_of_range outside [0, T].
  VecD node_weights(double t, int derivative = 0) const;
  /// Same, using the rule of control interval k (its limit at the endpoints).
  VecD node_weights_in(int k, double t, int derivative = 0) const;

  template <class S>
  Vec<S> evaluate(double t, const Vec<S>& theta, int derivative = 0) const {
    return combine<S>(node_weights(t, derivative), theta);
  }
  template <class S>
  Vec<S> evaluate_in(int k, double t, const Vec<S>& theta) const {
    return combine<S>(node_weights_in(k, t), theta);
  }

  int interval_of(double t) const;

 private:
  template <class S>
  Vec<S> combine(const VecD& w, const Vec<S>& theta) const {
    Vec<S> u = Vec<S>::Constant(input_dim_, S(0.0));
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      if (w(k) == 0.0) continue;
      for (int j = 0; j < input_dim_; ++j) u(j) += S(w(k)) * theta(k * input_dim_ + j);
    }
    return u;
  }

  std::vector<double> grid_;
  PolicyKind kind_;
  int input_dim_;
};

struct InputPolicy {
  PolicyBasis basis;
  VecD theta;
};

VecD eval_policy(const InputPolicy& policy, double t);

/// Control grid and its uniform refinement used for integration.
struct Grids {
  std::vector<double> control;
  std::vector<double> integration;
  int steps_per_interval = 1;

  int intervals() const { return static_cast<int>(control.size()) - 1; }
  int integration_steps() const { return static_cast<int>(integration.size()) - 1; }
  /// Index of control node k in the integration grid.
  int integration_index(int k) const { return k * steps_per_interval; }

  /// Uniform control grid with N intervals on [0, T], each split into
  /// n_int / N equal integration steps. n_int must be a positive multiple of N.
  static Grids uniform(double horizon, int intervals, int n_int);
  /// Refines an arbitrary strictly increasing control grid.
  static Grids refine(std::vector<double> control, int steps_per_interval);
};

/// Cost weights, grid sizes and bounds that come bundled with a problem.
struct ProblemSettings {
  MatD q_cost;
  MatD r_cost;
  int intervals = 20;
  int n_int = 40;
  PolicyKind policy_kind = PolicyKind::CubicHermite;
  int order = 2;  // IWP prior order p
  double lower_bound = -10.0;
  double upper_bound = 10.0;
};

struct Problem {
  ControlledIVP ivp;
  ProblemSettings settings;
};

/// x1' = (1 - x2)^2 x1 - x2 + u, x2' = x1, x(0) = (3, 1), T = 5, N = 20,
/// Q = 50 I, R = 1, p = 1. Note the uncontrolled system escapes to infinity
/// near t = 0.97.
Problem logistic_example();

/// Same data with x1' = (1 - x2^2) x1 - x2 + u (controlled Van der Pol).
Problem vanderpol_example();

/// Built-in problems by name: "logistic_input", "vanderpol_input",
/// "scalar_logistic" (x' = x(1-x)
/// + u, x0 = 0.1), "linear_decay" (x' = -x + u), "integrator" (x' = u),
/// "zero" (x' = 0), "constant" (x' = 1).
Problem make_problem(const std::string& name);
std::vector<std::string> problem_names();

/// Applies the JSON fields {name, x0, T, N, N_int, Q_diag, R_diag,
/// policy_kind, order, bounds} on top of the named built-in problem.
Problem problem_from_json(const nlohmann::json& config);

}  // namespace pnmpc
