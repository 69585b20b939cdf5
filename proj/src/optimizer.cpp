#include "pnmpc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace pnmpc {

namespace {

VecD project(const VecD& x, const VecD& lo, const VecD& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

double safe_value(const BoxObjective& obj, const VecD& x) {
  try {
    const double f = obj.value(x);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  } catch (const std::runtime_error&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct CurvaturePair {
  VecD s, y;
  double rho;
};

// Two-loop recursion restricted to the free coordinates.
VecD lbfgs_direction(const VecD& g, const std::deque<CurvaturePair>& pairs, const Eigen::ArrayXd& free) {
  VecD q = (g.array() * free).matrix();
  std::vector<double> alpha(pairs.size());
  for (std::size_t i = pairs.size(); i-- > 0;) {
    const auto& p = pairs[i];
    alpha[i] = p.rho * p.s.dot((q.array() * free).matrix());
    q -= alpha[i] * (p.y.array() * free).matrix();
  }
  if (!pairs.empty()) {
    const auto& last = pairs.back();
    const VecD yf = (last.y.array() * free).matrix();
    const double yy = yf.squaredNorm();
    if (yy > 0.0) q *= last.s.dot(yf) / yy;
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const double beta = p.rho * (p.y.array() * free).matrix().dot(q);
    q += (alpha[i] - beta) * (p.s.array() * free).matrix();
  }
  return -(q.array() * free).matrix();
}

}  // namespace

double projected_gradient_norm(const VecD& x, const VecD& g, const VecD& lower, const VecD& upper) {
  if (x.size() == 0) return 0.0;
  return (project(x - g, lower, upper) - x).cwiseAbs().maxCoeff();
}

OptimizerResult minimize_box(const BoxObjective& objective, const VecD& x0, const VecD& lower,
                             const VecD& upper, const OptimizerOptions& options) {
  if (lower.size() != x0.size() || upper.size() != x0.size())
    throw std::invalid_argument("bounds do not match the parameter vector");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("inconsistent bounds: lo > hi");
  if (!x0.allFinite()) throw std::invalid_argument("initial parameters are not finite");

  OptimizerResult res;
  res.x = project(x0, lower, upper);
  res.f = objective.value(res.x);
  if (!std::isfinite(res.f)) throw std::domain_error("objective is not finite at the initial parameters");
  res.g = objective.gradient(res.x);
  int evaluations = 1;
  res.trace.push_back({0, res.f, projected_gradient_norm(res.x, res.g, lower, upper), 0.0, evaluations});

  std::deque<CurvaturePair> pairs;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const double pg = projected_gradient_norm(res.x, res.g, lower, upper);
    if (pg <= options.gtol) {
      res.converged = true;
      res.status = "projected gradient below gtol";
      return res;
    }

    Eigen::ArrayXd free = Eigen::ArrayXd::Ones(res.x.size());
    for (Eigen::Index i = 0; i < res.x.size(); ++i) {
      const double slack = 1e-12 * (1.0 + std::abs(res.x(i)));
      if ((res.x(i) <= lower(i) + slack && res.g(i) > 0.0) || (res.x(i) >= upper(i) - slack && res.g(i) < 0.0))
        free(i) = 0.0;
    }

    bool accepted = false;
    VecD x_new;
    double f_new = 0.0, step = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      VecD dir = lbfgs_direction(res.g, pairs, free);
      if (dir.dot(res.g) >= 0.0 || !dir.allFinite()) {
        pairs.clear();
        dir = -(res.g.array() * free).matrix();
      }
      double alpha = 1.0;
      if (pairs.empty()) {
        const double dmax = dir.cwiseAbs().maxCoeff();
        if (dmax > 0.0) alpha = std::min(1.0, 1.0 / dmax);
      }
      for (int bt = 0; bt < options.max_backtracks; ++bt, alpha *= 0.5) {
        const VecD trial = project(res.x + alpha * dir, lower, upper);
        const double f_trial = safe_value(objective, trial);
        ++evaluations;
        if (f_trial <= res.f + options.armijo * res.g.dot(trial - res.x)) {
          x_new = trial;
          f_new = f_trial;
          step = alpha;
          accepted = true;
          break;
        }
      }
      if (accepted || pairs.empty()) break;
      pairs.clear();  // retry once along the projected steepest descent
    }
    if (!accepted) {
      res.status = "line search failed";
      return res;
    }

    const VecD g_new = objective.gradient(x_new);
    const VecD s = x_new - res.x;
    const VecD y = g_new - res.g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      pairs.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(pairs.size()) > options.memory) pairs.pop_front();
    }
    const double decrease = (res.f - f_new) / std::max({std::abs(res.f), std::abs(f_new), 1.0});
    res.x = x_new;
    res.f = f_new;
    res.g = g_new;
    res.trace.push_back({iter, res.f, projected_gradient_norm(res.x, res.g, lower, upper), step, evaluations});
    if (decrease < options.ftol) {
      res.converged = true;
      res.status = "relative decrease below ftol";
      return res;
    }
  }
  res.status = "iteration limit reached";
  return res;
}

}  // namespace pnmpc
