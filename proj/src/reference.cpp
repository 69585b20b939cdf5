#include "pnmpc/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/numeric/odeint/stepper/runge_kutta_dopri5.hpp>

namespace pnmpc {

namespace {

using State = std::vector<double>;
using Stepper = boost::numeric::odeint::runge_kutta_dopri5<State>;

// PI controller constants for an order-5 pair.
constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kAlpha = 0.2 - 0.75 * kBeta;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

VecD to_vec(const State& s) { return Eigen::Map<const VecD>(s.data(), static_cast<Eigen::Index>(s.size())); }

double scaled_error(const State& err, const State& x_old, const State& x_new, double rtol, double atol) {
  double e = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(x_old[i]), std::abs(x_new[i]));
    e = std::max(e, std::abs(err[i]) / sc);
  }
  return e;
}

}  // namespace

VecD ReferenceSolution::state_at(double time) const {
  if (t.empty()) throw std::logic_error("empty reference solution");
  if (time < t.front() || time > t.back()) throw std::out_of_range("reference solution queried outside its span");
  auto it = std::lower_bound(t.begin(), t.end(), time);
  std::size_t i = static_cast<std::size_t>(it - t.begin());
  if (i < t.size() && t[i] == time) return x[i];
  const std::size_t a = i - 1;
  const double h = t[i] - t[a];
  const double s = (time - t[a]) / h;
  const double h00 = (2 * s - 3) * s * s + 1, h10 = ((s - 2) * s + 1) * s;
  const double h01 = (3 - 2 * s) * s * s, h11 = (s - 1) * s * s;
  return h00 * x[a] + h * h10 * dxdt_right[a] + h01 * x[i] + h * h11 * dxdt[i];
}

ReferenceSolution solve_reference(const ControlledIVP& ivp, const InputPolicy& policy,
                                  const ReferenceOptions& options) {
  if (!(options.rtol > 0.0) || !(options.atol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  const PolicyBasis& basis = policy.basis;
  if (std::abs(basis.horizon() - ivp.horizon) > 1e-12 * ivp.horizon)
    throw std::invalid_argument("policy grid does not span the IVP horizon");
  const std::vector<double>& nodes = basis.grid();

  std::vector<double> outputs = options.output_times;
  std::sort(outputs.begin(), outputs.end());
  std::size_t next_output = 0;

  ReferenceSolution sol;
  sol.rtol = options.rtol;
  sol.atol = options.atol;

  Stepper stepper;
  State x(ivp.x0.data(), ivp.x0.data() + ivp.x0.size());
  State dxdt(x.size()), x_new(x.size()), dxdt_new(x.size()), err(x.size()), tmp(x.size());
  int interval = 0;
  auto system = [&](const State& s, State& ds, double t) {
    const VecD u = basis.evaluate_in<double>(interval, std::clamp(t, nodes[interval], nodes[interval + 1]),
                                             policy.theta);
    const VecD f = ivp.f(t, to_vec(s), u);
    std::copy(f.data(), f.data() + f.size(), ds.begin());
  };
  auto push = [&](double t, const State& s, const State& ds) {
    sol.t.push_back(t);
    sol.x.push_back(to_vec(s));
    sol.dxdt.push_back(to_vec(ds));
    sol.dxdt_right.push_back(sol.dxdt.back());
  };

  double t = 0.0;
  system(x, dxdt, t);
  push(t, x, dxdt);

  // Initial step from the scaled size of x and x'.
  double d0 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sc = options.atol + options.rtol * std::abs(x[i]);
    d0 = std::max(d0, std::abs(x[i]) / sc);
    d1 = std::max(d1, std::abs(dxdt[i]) / sc);
  }
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  double prev_err = 1e-4;

  for (interval = 0; interval < basis.intervals(); ++interval) {
    const double end = nodes[interval + 1];
    system(x, dxdt, t);
    sol.dxdt_right.back() = to_vec(dxdt);
    bool rejected_last = false;
    while (t < end) {
      const bool last = t + h >= end;
      const double dt = last ? end - t : h;
      if (sol.steps + sol.rejected > options.max_steps || dt < 1e-14 * std::max(1.0, std::abs(t))) {
        if (!options.stop_at_escape) throw StiffnessError(t);
        sol.escape_time = t;
        return sol;
      }
      stepper.do_step(system, x, dxdt, t, x_new, dxdt_new, dt, err);
      const double e = scaled_error(err, x, x_new, options.rtol, options.atol);
      if (!std::isfinite(e)) {
        h = dt * kMinFactor;
        ++sol.rejected;
        rejected_last = true;
        continue;
      }
      if (e > 1.0) {
        h = dt * std::max(kMinFactor, kSafety * std::pow(e, -0.2));
        ++sol.rejected;
        rejected_last = true;
        continue;
      }
      const double t_new = last ? end : t + dt;
      while (next_output < outputs.size() && outputs[next_output] <= t_new) {
        const double to = outputs[next_output++];
        if (to <= t) continue;
        if (to == t_new) break;
        stepper.calc_state(to, tmp, x, dxdt, t, x_new, dxdt_new, t_new);
        State dtmp(x.size());
        system(tmp, dtmp, to);
        push(to, tmp, dtmp);
      }
      sol.max_error_ratio = std::max(sol.max_error_ratio, e);
      ++sol.steps;
      double factor = kSafety * std::pow(std::max(e, 1e-10), -kAlpha) * std::pow(prev_err, kBeta);
      factor = std::clamp(factor, kMinFactor, kMaxFactor);
      if (rejected_last) factor = std::min(factor, 1.0);
      rejected_last = false;
      prev_err = std::max(e, 1e-4);
      if (!last) h = dt * factor;
      else h = std::max(h, dt * factor);
      t = t_new;
      x.swap(x_new);
      dxdt.swap(dxdt_new);
      push(t, x, dxdt);
    }
    while (next_output < outputs.size() && outputs[next_output] <= t) ++next_output;
  }
  return sol;
}

ReferenceSolution solve_reference(const ControlledIVP& ivp, const InputPolicy& policy, double rtol, double atol) {
  ReferenceOptions options;
  options.rtol = rtol;
  options.atol = atol;
  return solve_reference(ivp, policy, options);
}

std::vector<double> cumulative_ground_truth_cost(const OCPSpec& spec, const VecD& theta,
                                                 const ReferenceSolution& ref) {
  const Grids& g = spec.grids();
  const PolicyBasis basis = spec.basis();
  std::vector<double> cumulative(g.intervals() + 1, 0.0);
  for (int k = 0; k < g.intervals(); ++k) {
    const double t = g.control[k];
    if (t > ref.t.back()) {
      std::fill(cumulative.begin() + k + 1, cumulative.end(), std::numeric_limits<double>::infinity());
      break;
    }
    const VecD x = ref.state_at(t);
    const VecD u = basis.evaluate<double>(t, theta);
    cumulative[k + 1] = cumulative[k] + (g.control[k + 1] - t) / 2.0 *
                                            (x.dot(spec.q_cost() * x) + u.dot(spec.r_cost() * u));
  }
  return cumulative;
}

double ground_truth_cost(const OCPSpec& spec, const ControlledIVP& ivp, const VecD& theta, double rtol,
                         double atol) {
  const InputPolicy policy{spec.basis(), theta};
  const ReferenceSolution ref = solve_reference(ivp, policy, rtol, atol);
  std::vector<VecD> states;
  for (int k = 0; k < spec.grids().intervals(); ++k) states.push_back(ref.state_at(spec.grids().control[k]));
  return riemann_cost(spec, theta, states);
}

}  // namespace pnmpc
