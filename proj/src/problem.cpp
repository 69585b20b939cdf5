#include "pnmpc/problem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pnmpc {

double jacobian_mismatch(const ControlledIVP& ivp, double t, const VecD& x, const VecD& u) {
  const MatD jac = ivp.jac_x(t, x, u);
  double worst = 0.0;
  for (int j = 0; j < ivp.dim(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x(j)));
    VecD xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const VecD col = (ivp.f(t, xp, u) - ivp.f(t, xm, u)) / (2.0 * h);
    for (int i = 0; i < ivp.dim(); ++i)
      worst = std::max(worst, std::abs(jac(i, j) - col(i)) / std::max(1.0, std::abs(col(i))));
  }
  return worst;
}

PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "pwc" || s == "piecewise-constant") return PolicyKind::PiecewiseConstant;
  if (s == "hermite" || s == "cubic-hermite") return PolicyKind::CubicHermite;
  throw std::invalid_argument("unknown policy kind: " + s);
}

std::string to_string(PolicyKind kind) {
  return kind == PolicyKind::PiecewiseConstant ? "pwc" : "hermite";
}

PolicyBasis::PolicyBasis(std::vector<double> grid, PolicyKind kind, int input_dim)
    : grid_(std::move(grid)), kind_(kind), input_dim_(input_dim) {
  if (grid_.size() < 2) throw std::invalid_argument("policy grid needs at least one interval");
  if (grid_.front() != 0.0) throw std::invalid_argument("policy grid must start at t = 0");
  for (std::size_t i = 1; i < grid_.size(); ++i)
    if (!(grid_[i] > grid_[i - 1])) throw std::invalid_argument("policy grid must be strictly increasing");
  if (input_dim_ < 1) throw std::invalid_argument("input dimension must be positive");
}

int PolicyBasis::interval_of(double t) const {
  if (!(t >= 0.0 && t <= grid_.back()))
    throw std::out_of_range("policy evaluated at t = " + std::to_string(t) + " outside [0, T]");
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  const int k = static_cast<int>(it - grid_.begin()) - 1;
  return std::min(k, intervals() - 1);
}

VecD PolicyBasis::node_weights(double t, int derivative) const {
  return node_weights_in(interval_of(t), t, derivative);
}

VecD PolicyBasis::node_weights_in(int k, double t, int derivative) const {
  const int n = intervals();
  if (k < 0 || k >= n) throw std::out_of_range("control interval index out of range");
  VecD w = VecD::Zero(n + 1);
  if (kind_ == PolicyKind::PiecewiseConstant) {
    if (derivative == 0) w(k) = 1.0;
    return w;
  }
  if (derivative > 3) return w;

  // Node slope of the interpolant as weights over node values.
  auto add_slope = [&](int node, double scale) {
    int lo = node - 1, hi = node + 1;
    if (node == 0) lo = 0;
    if (node == n) hi = n;
    const double inv = 1.0 / (grid_[hi] - grid_[lo]);
    w(hi) += scale * inv;
    w(lo) -= scale * inv;
  };

  const double h = grid_[k + 1] - grid_[k];
  const double s = (t - grid_[k]) / h;
  double h00, h10, h01, h11;
  switch (derivative) {
    case 0:
      h00 = (2 * s - 3) * s * s + 1;
      h10 = ((s - 2) * s + 1) * s;
      h01 = (3 - 2 * s) * s * s;
      h11 = (s - 1) * s * s;
      break;
    case 1:
      h00 = 6 * s * s - 6 * s;
      h10 = 3 * s * s - 4 * s + 1;
      h01 = -6 * s * s + 6 * s;
      h11 = 3 * s * s - 2 * s;
      break;
    case 2:
      h00 = 12 * s - 6;
      h10 = 6 * s - 4;
      h01 = -12 * s + 6;
      h11 = 6 * s - 2;
      break;
    default:
      h00 = 12;
      h10 = 6;
      h01 = -12;
      h11 = 6;
      break;
  }
  const double chain = std::pow(h, -derivative);
  w(k) += chain * h00;
  w(k + 1) += chain * h01;
  add_slope(k, chain * h * h10);
  add_slope(k + 1, chain * h * h11);
  return w;
}

VecD eval_policy(const InputPolicy& policy, double t) {
  if (policy.theta.size() != policy.basis.parameter_count())
    throw std::invalid_argument("policy parameter vector has the wrong length");
  return policy.basis.evaluate<double>(t, policy.theta);
}

Grids Grids::refine(std::vector<double> control, int steps_per_interval) {
  if (steps_per_interval < 1) throw std::invalid_argument("steps per interval must be positive");
  if (control.size() < 2) throw std::invalid_argument("control grid needs at least one interval");
  Grids g;
  g.steps_per_interval = steps_per_interval;
  for (std::size_t k = 0; k + 1 < control.size(); ++k) {
    if (!(control[k + 1] > control[k])) throw std::invalid_argument("control grid must be strictly increasing");
    const double h = control[k + 1] - control[k];
    for (int j = 0; j < steps_per_interval; ++j)
      g.integration.push_back(control[k] + h * static_cast<double>(j) / steps_per_interval);
  }
  g.integration.push_back(control.back());
  g.control = std::move(control);
  return g;
}

Grids Grids::uniform(double horizon, int intervals, int n_int) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (intervals < 1) throw std::invalid_argument("need at least one control interval");
  if (n_int < intervals || n_int % intervals != 0)
    throw std::invalid_argument("integration steps must be a positive multiple of the control intervals");
  std::vector<double> control(intervals + 1);
  for (int k = 0; k <= intervals; ++k) control[k] = horizon * static_cast<double>(k) / intervals;
  control.back() = horizon;
  return refine(std::move(control), n_int / intervals);
}

namespace {

ProblemSettings unit_settings(int dim, int intervals, int n_int) {
  ProblemSettings s;
  s.q_cost = MatD::Identity(dim, dim);
  s.r_cost = MatD::Identity(1, 1);
  s.intervals = intervals;
  s.n_int = n_int;
  return s;
}

Problem scalar_logistic() {
  auto field = [](const auto& t, const auto& x, const auto& u) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(1);
    dx(0) = x(0) * (S(1.0) - x(0)) + u(0);
    return dx;
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Mat<S> j(1, 1);
    j(0, 0) = S(1.0) - S(2.0) * x(0);
    return j;
  };
  Problem p{make_ivp("scalar_logistic", VecD::Constant(1, 0.1), 5.0, 1, field, jac),
            unit_settings(1, 20, 40)};
  p.ivp.exact_solution = [x0 = 0.1](double t) {
    return VecD::Constant(1, 1.0 / (1.0 + (1.0 / x0 - 1.0) * std::exp(-t)));
  };
  return p;
}

Problem linear_decay() {
  auto field = [](const auto& t, const auto& x, const auto& u) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(1);
    dx(0) = u(0) - x(0);
    return dx;
  };
  auto jac = [](const auto& t, const auto&, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Mat<S>::Constant(1, 1, S(-1.0));
  };
  Problem p{make_ivp("linear_decay", VecD::Constant(1, 1.0), 3.0, 1, field, jac), unit_settings(1, 3, 30)};
  p.ivp.exact_solution = [](double t) { return VecD::Constant(1, std::exp(-t)); };
  return p;
}

Problem integrator() {
  auto field = [](const auto&, const auto&, const auto& u) {
    using S = std::decay_t<decltype(u(0))>;
    Vec<S> dx(1);
    dx(0) = u(0);
    return dx;
  };
  auto jac = [](const auto& t, const auto&, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Mat<S>::Zero(1, 1).eval();
  };
  Problem p{make_ivp("integrator", VecD::Zero(1), 2.0, 1, field, jac), unit_settings(1, 4, 8)};
  p.ivp.exact_solution = [](double) { return VecD::Zero(1); };
  return p;
}

Problem zero_field() {
  auto field = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Vec<S>::Constant(x.size(), S(0.0)).eval();
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Mat<S>::Constant(x.size(), x.size(), S(0.0)).eval();
  };
  Problem p{make_ivp("zero", VecD::Zero(1), 1.0, 1, field, jac), unit_settings(1, 1, 4)};
  p.ivp.exact_solution = [](double) { return VecD::Zero(1); };
  return p;
}

Problem constant_field() {
  auto field = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Vec<S>::Constant(x.size(), S(1.0)).eval();
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    return Mat<S>::Constant(x.size(), x.size(), S(0.0)).eval();
  };
  Problem p{make_ivp("constant", VecD::Zero(1), 1.0, 1, field, jac), unit_settings(1, 2, 8)};
  p.ivp.exact_solution = [](double t) { return VecD::Constant(1, t); };
  return p;
}

}  // namespace

Problem logistic_example() {
  auto field = [](const auto& t, const auto& x, const auto& u) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(2);
    const S a = S(1.0) - x(1);
    dx(0) = a * a * x(0) - x(1) + u(0);
    dx(1) = x(0);
    return dx;
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Mat<S> j(2, 2);
    const S a = S(1.0) - x(1);
    j(0, 0) = a * a;
    j(0, 1) = S(-2.0) * a * x(0) - S(1.0);
    j(1, 0) = S(1.0);
    j(1, 1) = S(0.0);
    return j;
  };
  VecD x0(2);
  x0 << 3.0, 1.0;
  ProblemSettings s;
  s.q_cost = 50.0 * MatD::Identity(2, 2);
  s.r_cost = MatD::Identity(1, 1);
  s.intervals = 20;
  s.n_int = 40;
  s.order = 1;
  return {make_ivp("logistic_input", x0, 5.0, 1, field, jac), s};
}

Problem vanderpol_example() {
  auto field = [](const auto& t, const auto& x, const auto& u) {
    using S = std::decay_t<decltype(t)>;
    Vec<S> dx(2);
    dx(0) = (S(1.0) - x(1) * x(1)) * x(0) - x(1) + u(0);
    dx(1) = x(0);
    return dx;
  };
  auto jac = [](const auto& t, const auto& x, const auto&) {
    using S = std::decay_t<decltype(t)>;
    Mat<S> j(2, 2);
    j(0, 0) = S(1.0) - x(1) * x(1);
    j(0, 1) = S(-2.0) * x(1) * x(0) - S(1.0);
    j(1, 0) = S(1.0);
    j(1, 1) = S(0.0);
    return j;
  };
  Problem p = logistic_example();
  p.ivp = make_ivp("vanderpol_input", p.ivp.x0, p.ivp.horizon, 1, field, jac);
  return p;
}

std::vector<std::string> problem_names() {
  return {"logistic_input", "vanderpol_input", "scalar_logistic", "linear_decay", "integrator", "zero", "constant"};
}

Problem make_problem(const std::string& name) {
  if (name == "logistic_input") return logistic_example();
  if (name == "vanderpol_input") return vanderpol_example();
  if (name == "scalar_logistic") return scalar_logistic();
  if (name == "linear_decay") return linear_decay();
  if (name == "integrator") return integrator();
  if (name == "zero") return zero_field();
  if (name == "constant") return constant_field();
  throw std::invalid_argument("unknown problem: " + name);
}

namespace {

MatD diag_from_json(const nlohmann::json& j, const char* key) {
  const auto values = j.at(key).get<std::vector<double>>();
  MatD m = MatD::Zero(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

}  // namespace

Problem problem_from_json(const nlohmann::json& config) {
  Problem p = make_problem(config.value("name", std::string("logistic_input")));
  if (config.contains("x0")) {
    const auto x0 = config.at("x0").get<std::vector<double>>();
    if (static_cast<int>(x0.size()) != p.ivp.dim() && p.ivp.name != "zero" && p.ivp.name != "constant")
      throw std::invalid_argument("x0 has the wrong dimension for problem " + p.ivp.name);
    p.ivp.x0 = Eigen::Map<const VecD>(x0.data(), static_cast<Eigen::Index>(x0.size()));
    if (p.settings.q_cost.rows() != p.ivp.dim()) p.settings.q_cost = MatD::Identity(p.ivp.dim(), p.ivp.dim());
    if (p.ivp.name == "zero") {
      p.ivp.exact_solution = [x0 = p.ivp.x0](double) { return x0; };
    } else if (p.ivp.name == "constant") {
      p.ivp.exact_solution = [x0 = p.ivp.x0](double t) { return (x0.array() + t).matrix().eval(); };
    } else {
      p.ivp.exact_solution = nullptr;  // closed forms assume the default x0
    }
  }
  if (config.contains("T")) {
    p.ivp.horizon = config.at("T").get<double>();
    if (!(p.ivp.horizon > 0.0)) throw std::invalid_argument("T must be positive");
  }
  if (config.contains("N")) p.settings.intervals = config.at("N").get<int>();
  if (config.contains("N_int")) {
    const auto& n = config.at("N_int");
    p.settings.n_int = n.is_array() ? n.at(0).get<int>() : n.get<int>();
  }
  if (config.contains("Q_diag")) p.settings.q_cost = diag_from_json(config, "Q_diag");
  if (config.contains("R_diag")) p.settings.r_cost = diag_from_json(config, "R_diag");
  if (config.contains("policy_kind"))
    p.settings.policy_kind = parse_policy_kind(config.at("policy_kind").get<std::string>());
  if (config.contains("order")) {
    p.settings.order = config.at("order").get<int>();
    if (p.settings.order < 1) throw std::invalid_argument("order must be at least 1");
  }
  if (config.contains("bounds")) {
    const auto b = config.at("bounds").get<std::vector<double>>();
    if (b.size() != 2 || b[0] > b[1]) throw std::invalid_argument("bounds must be [lo, hi] with lo <= hi");
    p.settings.lower_bound = b[0];
    p.settings.upper_bound = b[1];
  }
  if (p.settings.q_cost.rows() != p.ivp.dim()) throw std::invalid_argument("Q_diag has the wrong dimension");
  if (p.settings.r_cost.rows() != p.ivp.input_dim) throw std::invalid_argument("R_diag has the wrong dimension");
  return p;
}

}  // namespace pnmpc
