#include "pnmpc/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pnmpc {

SmootherMode parse_smoother_mode(const std::string& s) {
  if (s == "eks") return SmootherMode::EKS;
  if (s == "ieks") return SmootherMode::IEKS;
  throw std::invalid_argument("unknown smoother mode: " + s);
}

std::string to_string(SmootherMode mode) { return mode == SmootherMode::EKS ? "eks" : "ieks"; }

namespace {

// Innovation covariance factors whose squared diagonal ratio exceeds this get
// a relative jitter of kInnovationJitter * max(diag S).
constexpr double kInnovationCondition = 1e12;
constexpr double kInnovationJitter = 1e-12;

template <class S>
GaussianBelief<S> predict_impl(const GaussianBelief<S>& b, const Mat<S>& a, const Mat<S>& lq) {
  const Eigen::Index n = b.mean.size();
  Mat<S> pre(2 * n, n);
  pre.topRows(n) = b.cov_sqrt * a.transpose();
  pre.bottomRows(n) = lq;
  return {a * b.mean, triangularize<S>(std::move(pre))};
}

template <class S>
bool ill_conditioned(const Mat<S>& r) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double v = std::abs(value_of(r(i, i)));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == 0.0) return true;
  const double ratio = hi / lo;
  return ratio * ratio > kInnovationCondition;
}

template <class S>
bool has_zero_pivot(const Mat<S>& r) {
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    if (value_of(r(i, i)) == 0.0) return true;
  return false;
}

// max diag of R^T R, i.e. the largest squared column norm.
template <class S>
double max_gram_diagonal(const Mat<S>& r) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) c += value_of(r(i, j)) * value_of(r(i, j));
    m = std::max(m, c);
  }
  return m;
}

template <class S>
bool finite(const Vec<S>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!is_finite(v(i))) return false;
  return true;
}

template <class S>
bool finite(const Mat<S>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!is_finite(m(i, j))) return false;
  return true;
}

}  // namespace

template <class S>
GaussianBelief<S> predict(const GaussianBelief<S>& belief, const TransitionPair& tp) {
  if (belief.mean.size() != tp.a.rows() || belief.cov_sqrt.rows() != tp.a.rows())
    throw std::invalid_argument("predict: dimension mismatch between belief and transition");
  return predict_impl<S>(belief, tp.a.cast<S>(), tp.qn_sqrt.cast<S>());
}

template <class S>
Linearization<S> linearize(const ControlledIVP& ivp, const Selectors& sel, const S& t, const Vec<S>& x,
                           const Vec<S>& u) {
  const Mat<S> jac = ivp.jacobian<S>(t, x, u);
  const Vec<S> fx = ivp.field<S>(t, x, u);
  Linearization<S> lin;
  lin.c = sel.e1.cast<S>() - jac * sel.e0.cast<S>();
  lin.b = fx - jac * x;
  return lin;
}

template <class S>
UpdateResult<S> update(const GaussianBelief<S>& pred, const Linearization<S>& lin) {
  const Eigen::Index n = pred.mean.size();
  const Eigen::Index d = lin.c.rows();
  if (d == 0) return {pred, Vec<S>(0), Mat<S>(0, 0), false};
  if (lin.c.cols() != n || lin.b.size() != d) throw std::invalid_argument("update: dimension mismatch");

  // [S C^T | S] triangularizes to [[R11, R12], [0, R22]] with R11^T R11 = C Sigma C^T,
  // R11^T R12 = C Sigma and R22^T R22 the conditioned covariance.
  Mat<S> pre(n, d + n);
  pre.leftCols(d) = pred.cov_sqrt * lin.c.transpose();
  pre.rightCols(n) = pred.cov_sqrt;
  Mat<S> r = triangularize<S>(pre);

  bool regularized = false;
  if (ill_conditioned<S>(Mat<S>(r.topLeftCorner(d, d)))) {
    const double jitter = kInnovationJitter * max_gram_diagonal<S>(Mat<S>(r.topLeftCorner(d, d)));
    Mat<S> padded = Mat<S>::Zero(n + d, d + n);
    padded.topRows(n) = pre;
    padded.bottomLeftCorner(d, d) = Mat<S>::Identity(d, d) * S(std::sqrt(jitter));
    r = triangularize<S>(std::move(padded));
    regularized = true;
  }
  const Mat<S> r11 = r.topLeftCorner(d, d);
  if (has_zero_pivot<S>(r11)) throw SingularInnovationError("innovation covariance is singular");

  const Vec<S> innovation = lin.b - lin.c * pred.mean;
  const Vec<S> whitened = solve_upper_transposed<S>(r11, innovation);
  UpdateResult<S> out;
  out.belief.mean = pred.mean + r.block(0, d, d, n).transpose() * whitened;
  out.belief.cov_sqrt = r.bottomRightCorner(n, n);
  out.innovation = innovation;
  out.s_sqrt = r11;
  out.regularized = regularized;
  return out;
}

template <class S>
std::vector<GaussianBelief<S>> rts_pass(const std::vector<GaussianBelief<S>>& filtered,
                                        const std::vector<GaussianBelief<S>>& predicted,
                                        const std::vector<TransitionPair>& transitions) {
  const std::size_t nodes = filtered.size();
  if (nodes == 0) return {};
  if (predicted.size() != nodes || transitions.size() + 1 != nodes)
    throw std::invalid_argument("rts_pass: sequences are not aligned");
  std::vector<GaussianBelief<S>> smoothed(nodes);
  smoothed.back() = filtered.back();
  const Eigen::Index n = filtered.back().mean.size();

  for (std::size_t k = nodes - 1; k-- > 0;) {
    const Mat<S> a = transitions[k].a.cast<S>();
    const GaussianBelief<S>& f = filtered[k];
    // [[S A^T, S], [Lq, 0]] triangularizes to [[R1, R2], [0, R3]] with
    // R1^T R1 = Sigma^-_{k+1}, gain G = R2^T R1^-T and R3^T R3 = Sigma - G Sigma^- G^T.
    Mat<S> pre = Mat<S>::Zero(2 * n, 2 * n);
    pre.topLeftCorner(n, n) = f.cov_sqrt * a.transpose();
    pre.topRightCorner(n, n) = f.cov_sqrt;
    pre.bottomLeftCorner(n, n) = transitions[k].qn_sqrt.cast<S>();
    const Mat<S> r = triangularize<S>(std::move(pre));
    Mat<S> gain_t;
    try {
      gain_t = solve_upper<S>(Mat<S>(r.topLeftCorner(n, n)), Mat<S>(r.topRightCorner(n, n)));
    } catch (const std::domain_error&) {
      throw SingularInnovationError("rts_pass: predicted covariance is singular at node " + std::to_string(k + 1));
    }
    const GaussianBelief<S>& next = smoothed[k + 1];
    smoothed[k].mean = f.mean + gain_t.transpose() * (next.mean - predicted[k + 1].mean);
    Mat<S> stacked(2 * n, n);
    stacked.topRows(n) = next.cov_sqrt * gain_t;
    stacked.bottomRows(n) = r.bottomRightCorner(n, n);
    smoothed[k].cov_sqrt = triangularize<S>(std::move(stacked));
  }
  return smoothed;
}

template <class S>
S calibrate(const FilterStats<S>& stats, int steps, int dim) {
  if (steps < 1) throw std::invalid_argument("calibrate: need at least one step");
  if (dim < 1) throw std::invalid_argument("calibrate: dimension must be positive");
  S total(0.0);
  for (std::size_t i = 0; i < stats.innovations.size(); ++i) {
    Mat<S> factor = stats.s_sqrt[i];
    if (has_zero_pivot<S>(factor)) {
      const Eigen::Index d = factor.rows();
      const double jitter = kInnovationJitter * std::max(max_gram_diagonal<S>(factor), 1e-300);
      Mat<S> padded(2 * d, d);
      padded.topRows(d) = factor;
      padded.bottomRows(d) = Mat<S>::Identity(d, d) * S(std::sqrt(jitter));
      factor = triangularize<S>(std::move(padded));
    }
    const Vec<S> w = solve_upper_transposed<S>(factor, Mat<S>(stats.innovations[i])).col(0);
    total += w.squaredNorm();
  }
  return total / S(static_cast<double>(steps) * dim);
}

namespace {

template <class S>
struct Pass {
  std::vector<GaussianBelief<S>> filtered;
  std::vector<GaussianBelief<S>> predicted;
  std::vector<GaussianBelief<S>> smoothed;
  FilterStats<S> stats;
};

template <class S>
Pass<S> run_pass(const ControlledIVP& ivp, const PolicyBasis& basis, const Vec<S>& theta, const Grids& grids,
                 const IWPModel& model, const Selectors& sel, const std::vector<TransitionPair>& transitions,
                 const Vec<S>& init, const std::vector<Vec<S>>* lin_points) {
  const int steps = grids.integration_steps();
  const int n = model.state_size();
  const int d = model.dim();
  Pass<S> out;
  out.filtered.reserve(steps + 1);
  out.predicted.reserve(steps + 1);
  out.filtered.push_back({init, Mat<S>::Zero(n, n)});
  out.predicted.push_back(out.filtered.front());

  Mat<S> a, lq;
  double cached_dt = -1.0;
  for (int i = 1; i <= steps; ++i) {
    const TransitionPair& tp = transitions[i - 1];
    if (tp.dt != cached_dt) {
      a = tp.a.cast<S>();
      lq = tp.qn_sqrt.cast<S>();
      cached_dt = tp.dt;
    }
    GaussianBelief<S> pred = predict_impl<S>(out.filtered.back(), a, lq);
    const double t = grids.integration[i];
    const Vec<S> u = basis.evaluate<S>(t, theta);
    const Vec<S> x_lin = lin_points ? Vec<S>((*lin_points)[i]) : Vec<S>(pred.mean.head(d));
    const Linearization<S> lin = linearize<S>(ivp, sel, S(t), x_lin, u);
    UpdateResult<S> upd = update<S>(pred, lin);
    if (!finite<S>(upd.belief.mean) || !finite<S>(upd.belief.cov_sqrt))
      throw DivergenceError(i, "ODE filter produced a non-finite state");
    out.stats.innovations.push_back(std::move(upd.innovation));
    out.stats.s_sqrt.push_back(std::move(upd.s_sqrt));
    out.predicted.push_back(std::move(pred));
    out.filtered.push_back(std::move(upd.belief));
  }
  out.smoothed = rts_pass<S>(out.filtered, out.predicted, transitions);
  for (int i = 0; i <= steps; ++i)
    if (!finite<S>(out.smoothed[i].mean)) throw DivergenceError(i, "ODE smoother produced a non-finite state");
  return out;
}

}  // namespace

template <class S>
PosteriorTrajectory<S> ode_filter_smoother(const ControlledIVP& ivp, const PolicyBasis& basis,
                                           const Vec<S>& theta, const Grids& grids, const IWPModel& model,
                                           const SmootherOptions& options) {
  if (model.dim() != ivp.dim()) throw std::invalid_argument("model dimension does not match the IVP");
  if (theta.size() != basis.parameter_count())
    throw std::invalid_argument("parameter vector does not match the policy");
  if (grids.integration.size() < 2) throw std::invalid_argument("integration grid needs at least one step");
  if (options.mode == SmootherMode::IEKS && options.max_iter < 1)
    throw std::invalid_argument("IEKS needs max_iter >= 1");

  const int steps = grids.integration_steps();
  const int d = model.dim();
  const Selectors sel = selectors(model);
  std::vector<TransitionPair> transitions;
  transitions.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const double dt = grids.integration[i + 1] - grids.integration[i];
    if (!transitions.empty() && transitions.back().dt == dt) transitions.push_back(transitions.back());
    else transitions.push_back(transition_matrices(model, dt));
  }
  const Vec<S> init = taylor_init<S>(ivp, basis, theta, model);

  Pass<S> pass = run_pass<S>(ivp, basis, theta, grids, model, sel, transitions, init, nullptr);
  int iterations = 1;
  double change = 0.0;
  if (options.mode == SmootherMode::IEKS) {
    change = std::numeric_limits<double>::infinity();
    while (iterations < options.max_iter) {
      std::vector<Vec<S>> points(steps + 1);
      for (int i = 0; i <= steps; ++i) points[i] = pass.smoothed[i].mean.head(d);
      Pass<S> next = run_pass<S>(ivp, basis, theta, grids, model, sel, transitions, init, &points);
      ++iterations;
      change = 0.0;
      for (int i = 0; i <= steps; ++i)
        change = std::max(change, (values<S>(next.smoothed[i].mean) - values<S>(pass.smoothed[i].mean))
                                      .cwiseAbs()
                                      .maxCoeff());
      pass = std::move(next);
      if (change < options.tol) break;
    }
  }

  PosteriorTrajectory<S> post;
  post.nodes = grids.integration;
  post.means.reserve(steps + 1);
  post.cov_sqrt.reserve(steps + 1);
  for (auto& b : pass.smoothed) {
    post.means.push_back(std::move(b.mean));
    post.cov_sqrt.push_back(std::move(b.cov_sqrt));
  }
  post.filtered = std::move(pass.filtered);
  post.calibrated_kappa = calibrate<S>(pass.stats, steps, d);
  post.kappa = options.diffusion ? S(*options.diffusion) : post.calibrated_kappa;
  post.stats = std::move(pass.stats);
  post.iterations = iterations;
  post.final_change = change;
  return post;
}

PosteriorTrajectory<double> ode_filter_smoother(const ControlledIVP& ivp, const InputPolicy& policy,
                                                const Grids& grids, const IWPModel& model,
                                                const SmootherOptions& options) {
  return ode_filter_smoother<double>(ivp, policy.basis, policy.theta, grids, model, options);
}

#define PNMPC_FILTER_INSTANTIATE(S)                                                                         \
  template GaussianBelief<S> predict<S>(const GaussianBelief<S>&, const TransitionPair&);                   \
  template Linearization<S> linearize<S>(const ControlledIVP&, const Selectors&, const S&, const Vec<S>&,   \
                                         const Vec<S>&);                                                    \
  template UpdateResult<S> update<S>(const GaussianBelief<S>&, const Linearization<S>&);                    \
  template std::vector<GaussianBelief<S>> rts_pass<S>(const std::vector<GaussianBelief<S>>&,                \
                                                      const std::vector<GaussianBelief<S>>&,                \
                                                      const std::vector<TransitionPair>&);                  \
  template S calibrate<S>(const FilterStats<S>&, int, int);                                                 \
  template PosteriorTrajectory<S> ode_filter_smoother<S>(const ControlledIVP&, const PolicyBasis&,          \
                                                         const Vec<S>&, const Grids&, const IWPModel&,      \
                                                         const SmootherOptions&);
PNMPC_FILTER_INSTANTIATE(double)
PNMPC_FILTER_INSTANTIATE(Dual)

}  // namespace pnmpc
