// pnmpc: open-loop control of an ODE with a probabilistic solver in the loop.
//
//   pnmpc openloop    --problem logistic_input --mode both --n-int 40 --out results/
//   pnmpc sweep       --n-int 20,40,60,80,120,160 --out results/
//   pnmpc convergence --problem scalar_logistic --out results/

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pnmpc/experiments.hpp"

namespace {

struct Flags {
  std::string problem;  // empty: per-subcommand default
  std::string config;
  std::string mode = "both";
  std::vector<int> n_int;
  std::string policy;
  std::string smoother = "eks";
  int order = 0;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--problem", f.problem,
                  "built-in problem name (default logistic_input, scalar_logistic for convergence)");
  cmd->add_option("--config", f.config, "JSON problem/config file (overrides --problem)")->check(CLI::ExistingFile);
  cmd->add_option("--mode", f.mode, "cost mode")->check(CLI::IsMember({"classical", "proposed", "both"}))
      ->capture_default_str();
  cmd->add_option("--n-int", f.n_int, "integration step counts")->delimiter(',');
  cmd->add_option("--policy", f.policy, "input parametrization")->check(CLI::IsMember({"pwc", "hermite"}));
  cmd->add_option("--smoother", f.smoother, "smoother")->check(CLI::IsMember({"eks", "ieks"}))->capture_default_str();
  cmd->add_option("--order", f.order, "IWP prior order p")->check(CLI::Range(1, 8));
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
}

pnmpc::ExperimentConfig build_config(const Flags& f, bool sweep) {
  pnmpc::ExperimentConfig c;
  bool n_from_config = false;
  if (!f.config.empty()) {
    std::ifstream is(f.config);
    c = pnmpc::config_from_json(nlohmann::json::parse(is));
    n_from_config = true;
  } else {
    c.problem = pnmpc::make_problem(f.problem.empty() ? "logistic_input" : f.problem);
    c.n_int = {c.problem.settings.n_int};
  }
  if (f.mode == "both") c.modes = {pnmpc::CostMode::Classical, pnmpc::CostMode::Proposed};
  else c.modes = {pnmpc::parse_cost_mode(f.mode)};
  if (!f.n_int.empty()) c.n_int = f.n_int;
  else if (sweep && !n_from_config) c.n_int = pnmpc::default_sweep_n_int();
  if (!f.policy.empty()) c.problem.settings.policy_kind = pnmpc::parse_policy_kind(f.policy);
  c.smoother.mode = pnmpc::parse_smoother_mode(f.smoother);
  if (f.order > 0) c.problem.settings.order = f.order;
  c.out_dir = f.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal control with a probabilistic ODE solver"};
  app.require_subcommand(1);
  Flags f;
  auto* openloop = app.add_subcommand("openloop", "solve the OCP and write per-node trajectories");
  auto* sweep = app.add_subcommand("sweep", "cost against integration grid size");
  auto* convergence = app.add_subcommand("convergence", "solver error against step count");
  for (auto* cmd : {openloop, sweep, convergence}) add_common(cmd, f);
  std::vector<int> orders;
  convergence->add_option("--orders", orders, "prior orders to test")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*openloop) {
      const auto runs = pnmpc::run_openloop(build_config(f, false));
      for (const auto& r : runs)
        std::cout << pnmpc::to_string(r.mode) << ": predicted " << r.predicted_cost << ", ground truth "
                  << r.ground_truth_cost << " (" << r.solution.status << ") -> " << r.csv.string() << "\n";
    } else if (*sweep) {
      const auto rows = pnmpc::run_sweep(build_config(f, true));
      for (const auto& r : rows)
        std::cout << r.n_int << " " << pnmpc::to_string(r.mode) << " " << r.predicted_cost << " "
                  << r.ground_truth_cost << "\n";
    } else {
      Flags g = f;
      if (g.problem.empty()) g.problem = "scalar_logistic";
      pnmpc::ExperimentConfig c = build_config(g, false);
      if (!orders.empty()) c.orders = orders;
      else if (f.order > 0) c.orders = {f.order};
      const auto rows = pnmpc::run_convergence(c);
      for (int p : c.orders)
        std::cout << "p=" << p << " empirical order " << pnmpc::empirical_order(rows, p) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
