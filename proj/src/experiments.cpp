#include "pnmpc/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "pnmpc/reference.hpp"

namespace pnmpc {

std::vector<int> default_sweep_n_int() { return {20, 40, 60, 80, 120, 160}; }

void ExperimentConfig::validate() const {
  const int n = problem.settings.intervals;
  if (n_int.empty()) throw std::invalid_argument("need at least one N_int value");
  for (int v : n_int)
    if (v < n || v % n != 0)
      throw std::invalid_argument("N_int = " + std::to_string(v) + " is not a positive multiple of N = " +
                                  std::to_string(n));
  if (modes.empty()) throw std::invalid_argument("need at least one mode");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.problem = problem_from_json(j);
  if (j.contains("N_int")) {
    const auto& n = j.at("N_int");
    c.n_int = n.is_array() ? n.get<std::vector<int>>() : std::vector<int>{n.get<int>()};
  } else {
    c.n_int = {c.problem.settings.n_int};
  }
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j.at("modes")) c.modes.push_back(parse_cost_mode(m.get<std::string>()));
  }
  if (j.contains("smoother")) c.smoother.mode = parse_smoother_mode(j.at("smoother").get<std::string>());
  if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
  return c;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << contents;
    if (!os) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string openloop_script(const std::vector<CostMode>& modes) {
  std::ostringstream os;
  os << "# gnuplot -p openloop.gp\n"
     << "set datafile separator ','\nset key autotitle columnhead\n"
     << "set multiplot layout 3,1\n";
  auto plot = [&](const std::string& what) {
    os << "plot ";
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const std::string f = "openloop_" + to_string(modes[i]) + ".csv";
      os << (i ? ", " : "") << "'" << f << "' using 't':'" << what << "' with lines";
    }
    os << "\n";
  };
  plot("x1_mean");
  plot("cumulative_ground_truth_cost");
  plot("u");
  os << "unset multiplot\n";
  return os.str();
}

}  // namespace

std::vector<OpenLoopRun> run_openloop(const ExperimentConfig& config) {
  config.validate();
  const Problem& problem = config.problem;
  const ControlledIVP& ivp = problem.ivp;
  const int n_int = config.n_int.front();
  const int d = ivp.dim();

  std::vector<OpenLoopRun> runs;
  for (CostMode mode : config.modes) {
    const OCPSpec spec = make_spec(problem, mode, n_int, config.smoother);
    OpenLoopRun run;
    run.mode = mode;
    run.solution = solve_ocp(spec, ivp, VecD::Zero(spec.parameter_count()), config.optimizer);
    const VecD& theta = run.solution.theta;
    const PolicyBasis basis = spec.basis();
    const PosteriorTrajectory<double> post =
        ode_filter_smoother<double>(ivp, basis, theta, spec.grids(), spec.model(), spec.smoother());
    ReferenceOptions ref_options;
    ref_options.stop_at_escape = true;
    const ReferenceSolution ref = solve_reference(ivp, InputPolicy{basis, theta}, ref_options);
    if (ref.escape_time)
      std::cerr << "warning: " << to_string(mode) << " input drives the reference solution to infinity near t = "
                << *ref.escape_time << "\n";
    const std::vector<double> gt = cumulative_ground_truth_cost(spec, theta, ref);
    run.predicted_cost = run.solution.report.total;
    run.ground_truth_cost = gt.back();

    std::ostringstream os;
    os << "t";
    for (int j = 1; j <= d; ++j) os << ",x" << j << "_mean";
    for (int j = 1; j <= d; ++j) os << ",x" << j << "_sd";
    for (int j = 1; j <= ivp.input_dim; ++j) os << (ivp.input_dim == 1 ? ",u" : ",u" + std::to_string(j));
    os << ",cumulative_predicted_cost,cumulative_ground_truth_cost\n";
    double predicted = 0.0;
    const Grids& g = spec.grids();
    for (int k = 0; k <= g.intervals(); ++k) {
      const int i = g.integration_index(k);
      const double t = g.control[k];
      const MatD cov = post.state_covariance(i, d);
      const VecD u = basis.evaluate<double>(t, theta);
      os << format_double(t);
      for (int j = 0; j < d; ++j) os << "," << format_double(post.means[i](j));
      for (int j = 0; j < d; ++j) os << "," << format_double(std::sqrt(std::max(cov(j, j), 0.0)));
      for (int j = 0; j < ivp.input_dim; ++j) os << "," << format_double(u(j));
      os << "," << format_double(predicted) << "," << format_double(gt[k]) << "\n";
      if (k < g.intervals()) {
        const NodeCost& c = run.solution.report.per_node[k];
        predicted += c.mean_state + c.input + c.trace;
      }
    }
    run.csv = config.out_dir / ("openloop_" + to_string(mode) + ".csv");
    write_atomic(run.csv, os.str());
    runs.push_back(std::move(run));
  }
  write_atomic(config.out_dir / "openloop.gp", openloop_script(config.modes));
  return runs;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config) {
  config.validate();
  std::vector<SweepRow> rows;
  for (int n : config.n_int)
    for (CostMode mode : config.modes) rows.push_back({n, mode, 0.0, 0.0, true});

  const long count = static_cast<long>(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (long r = 0; r < count; ++r) {
    SweepRow& row = rows[r];
    try {
      const OCPSpec spec = make_spec(config.problem, row.mode, row.n_int, config.smoother);
      const OCPSolution sol =
          solve_ocp(spec, config.problem.ivp, VecD::Zero(spec.parameter_count()), config.optimizer);
      row.predicted_cost = sol.report.total;
      try {
        row.ground_truth_cost = ground_truth_cost(spec, config.problem.ivp, sol.theta);
      } catch (const StiffnessError& e) {
        row.ground_truth_cost = std::numeric_limits<double>::infinity();
#pragma omp critical(pnmpc_sweep_log)
        std::cerr << "warning: sweep point n_int=" << row.n_int << " mode=" << to_string(row.mode)
                  << ": reference solution escapes near t = " << e.time() << "\n";
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.predicted_cost = row.ground_truth_cost = std::numeric_limits<double>::quiet_NaN();
#pragma omp critical(pnmpc_sweep_log)
      std::cerr << "warning: sweep point n_int=" << row.n_int << " mode=" << to_string(row.mode)
                << " failed: " << e.what() << "\n";
    }
  }

  bool any = false;
  std::ostringstream os;
  os << "n_int,mode,predicted_cost,ground_truth_cost\n";
  for (const SweepRow& row : rows) {
    any = any || row.ok;
    os << row.n_int << "," << to_string(row.mode) << "," << format_double(row.predicted_cost) << ","
       << format_double(row.ground_truth_cost) << "\n";
  }
  write_atomic(config.out_dir / "sweep.csv", os.str());
  write_atomic(config.out_dir / "sweep.gp",
               "# gnuplot -p sweep.gp\nset datafile separator ','\nset logscale x\n"
               "plot for [m in 'classical proposed'] 'sweep.csv' using 1:(strcol(2) eq m ? $3 : NaN) "
               "title m.' predicted' with linespoints, \\\n"
               "     for [m in 'classical proposed'] 'sweep.csv' using 1:(strcol(2) eq m ? $4 : NaN) "
               "title m.' ground truth' with linespoints\n");
  if (!any) throw std::runtime_error("every sweep point failed");
  return rows;
}

std::vector<ConvergenceRow> run_convergence(const ExperimentConfig& config) {
  const ControlledIVP& ivp = config.problem.ivp;
  if (!ivp.exact_solution) throw std::invalid_argument("problem " + ivp.name + " has no closed-form solution");
  std::vector<ConvergenceRow> rows;
  for (int p : config.orders) {
    const IWPModel model(p, ivp.dim());
    for (int n : config.convergence_steps) {
      const Grids grids = Grids::uniform(ivp.horizon, 1, n);
      const InputPolicy policy{PolicyBasis(grids.control, config.problem.settings.policy_kind, ivp.input_dim),
                               VecD::Zero(ivp.input_dim * 2)};
      const PosteriorTrajectory<double> post = ode_filter_smoother(ivp, policy, grids, model, config.smoother);
      double err = 0.0;
      for (std::size_t i = 0; i < post.nodes.size(); ++i)
        err = std::max(err, (post.means[i].head(ivp.dim()) - ivp.exact_solution(post.nodes[i])).cwiseAbs().maxCoeff());
      rows.push_back({p, n, err});
    }
  }
  std::ostringstream os;
  os << "p,n_steps,max_error\n";
  for (const auto& r : rows) os << r.order << "," << r.n_steps << "," << format_double(r.max_error) << "\n";
  write_atomic(config.out_dir / "convergence.csv", os.str());
  write_atomic(config.out_dir / "convergence.gp",
               "# gnuplot -p convergence.gp\nset datafile separator ','\nset logscale xy\n"
               "plot for [p in '1 2 3 4'] 'convergence.csv' using 2:(strcol(1) eq p ? $3 : NaN) "
               "title 'p='.p with linespoints\n");
  return rows;
}

double empirical_order(const std::vector<ConvergenceRow>& rows, int order) {
  std::vector<double> lx, ly;
  for (const auto& r : rows) {
    if (r.order != order || !(r.max_error > 0.0)) continue;
    lx.push_back(std::log(1.0 / r.n_steps));
    ly.push_back(std::log(r.max_error));
  }
  if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace pnmpc
