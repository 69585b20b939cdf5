#pragma once

// Linearization-based Gaussian inference for ODE filtering: square-root EKF
// forward pass, RTS backward pass, IEKS iteration and diffusion calibration.
//
// Covariances are carried as upper-triangular factors R with R^T R = Sigma
// and are unscaled (unit diffusion). The calibrated diffusion only ever
// post-multiplies them.
//
// Everything is templated on the scalar; double and Dual are instantiated.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnmpc/linalg.hpp"
#include "pnmpc/prior.hpp"
#include "pnmpc/problem.hpp"

namespace pnmpc {

class SingularInnovationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, const std::string& what)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

template <class S = double>
struct GaussianBelief {
  Vec<S> mean;
  Mat<S> cov_sqrt;  // upper triangular

  Mat<S> covariance() const { return gram(cov_sqrt); }
};

/// Affine observation model C X - b of the ODE residual.
template <class S = double>
struct Linearization {
  Mat<S> c;
  Vec<S> b;
};

template <class S = double>
struct UpdateResult {
  GaussianBelief<S> belief;
  Vec<S> innovation;  // b - C mean^-
  Mat<S> s_sqrt;      // upper triangular factor of the innovation covariance
  bool regularized = false;
};

template <class S = double>
struct FilterStats {
  std::vector<Vec<S>> innovations;
  std::vector<Mat<S>> s_sqrt;
};

enum class SmootherMode { EKS, IEKS };

SmootherMode parse_smoother_mode(const std::string& s);
std::string to_string(SmootherMode mode);

struct SmootherOptions {
  SmootherMode mode = SmootherMode::EKS;
  int max_iter = 20;
  double tol = 1e-8;
  /// Fixed diffusion reported instead of the calibrated one. Inference always
  /// runs at unit diffusion, so this never changes means or factors.
  std::optional<double> diffusion;
};

template <class S = double>
struct PosteriorTrajectory {
  std::vector<double> nodes;
  std::vector<Vec<S>> means;       // smoothed
  std::vector<Mat<S>> cov_sqrt;    // smoothed, unscaled
  std::vector<GaussianBelief<S>> filtered;
  FilterStats<S> stats;            // from the final forward pass
  S calibrated_kappa{0.0};
  S kappa{0.0};                    // the diffusion the marginals are reported with
  int iterations = 0;
  double final_change = 0.0;

  /// kappa * E0 Lambda E0^T at node i.
  Mat<S> state_covariance(int i, int dim) const {
    const Mat<S> f = cov_sqrt[i].leftCols(dim);
    return kappa * (f.transpose() * f);
  }
};

template <class S>
GaussianBelief<S> predict(const GaussianBelief<S>& belief, const TransitionPair& tp);

template <class S>
Linearization<S> linearize(const ControlledIVP& ivp, const Selectors& sel, const S& t, const Vec<S>& x,
                           const Vec<S>& u);

/// Noise-free Kalman update onto C X = b. An observation with zero rows is a
/// no-op.
template <class S>
UpdateResult<S> update(const GaussianBelief<S>& pred, const Linearization<S>& lin);

/// Backward pass. transitions[i] maps node i to node i + 1, predicted[i] is
/// the one-step prediction into node i (predicted[0] is ignored).
template <class S>
std::vector<GaussianBelief<S>> rts_pass(const std::vector<GaussianBelief<S>>& filtered,
                                        const std::vector<GaussianBelief<S>>& predicted,
                                        const std::vector<TransitionPair>& transitions);

/// Quasi maximum-likelihood diffusion: mean of r^T S^-1 r over steps and
/// state dimensions.
template <class S>
S calibrate(const FilterStats<S>& stats, int steps, int dim);

template <class S>
PosteriorTrajectory<S> ode_filter_smoother(const ControlledIVP& ivp, const PolicyBasis& basis,
                                           const Vec<S>& theta, const Grids& grids, const IWPModel& model,
                                           const SmootherOptions& options = {});

PosteriorTrajectory<double> ode_filter_smoother(const ControlledIVP& ivp, const InputPolicy& policy,
                                                const Grids& grids, const IWPModel& model,
                                                const SmootherOptions& options = {});

#define PNMPC_FILTER_EXTERN(S)                                                                              \
  extern template GaussianBelief<S> predict<S>(const GaussianBelief<S>&, const TransitionPair&);            \
  extern template Linearization<S> linearize<S>(const ControlledIVP&, const Selectors&, const S&,           \
                                                const Vec<S>&, const Vec<S>&);                              \
  extern template UpdateResult<S> update<S>(const GaussianBelief<S>&, const Linearization<S>&);             \
  extern template std::vector<GaussianBelief<S>> rts_pass<S>(const std::vector<GaussianBelief<S>>&,         \
                                                             const std::vector<GaussianBelief<S>>&,         \
                                                             const std::vector<TransitionPair>&);           \
  extern template S calibrate<S>(const FilterStats<S>&, int, int);                                          \
  extern template PosteriorTrajectory<S> ode_filter_smoother<S>(const ControlledIVP&, const PolicyBasis&,   \
                                                                const Vec<S>&, const Grids&,                \
                                                                const IWPModel&, const SmootherOptions&);
PNMPC_FILTER_EXTERN(double)
PNMPC_FILTER_EXTERN(Dual)
#undef PNMPC_FILTER_EXTERN

}  // namespace pnmpc
