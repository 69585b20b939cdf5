#pragma once

// p-times integrated Wiener process prior on the extended state
// X = (x, x', ..., x^(p)), stored derivative-major: entry k * d + j is the
// k-th derivative of state component j.

#include "pnmpc/linalg.hpp"
#include "pnmpc/problem.hpp"

namespace pnmpc {

class IWPModel {
 public:
  IWPModel(int order, int dim);

  int order() const { return order_; }
  int dim() const { return dim_; }
  int state_size() const { return (order_ + 1) * dim_; }

 private:
  int order_;
  int dim_;
};

/// Exact discretization of the prior over one step, at unit diffusion.
struct TransitionPair {
  double dt = 0.0;
  MatD a;        // transition
  MatD qn;       // process noise
  MatD qn_sqrt;  // upper triangular, qn_sqrt^T qn_sqrt = qn
};

TransitionPair transition_matrices(const IWPModel& model, double dt);

struct Selectors {
  MatD e0;  // picks x
  MatD e1;  // picks x'
};

Selectors selectors(const IWPModel& model);

/// Initial extended state whose derivative blocks are the exact time
/// derivatives of the IVP solution at t = 0, from Taylor-mode propagation of
/// the vector field and the policy's own Taylor expansion.
VecD taylor_init(const ControlledIVP& ivp, const InputPolicy& policy, const IWPModel& model);

template <class S>
Vec<S> taylor_init(const ControlledIVP& ivp, const PolicyBasis& basis, const Vec<S>& theta,
                   const IWPModel& model);

extern template Vec<double> taylor_init<double>(const ControlledIVP&, const PolicyBasis&, const Vec<double>&,
                                                const IWPModel&);
extern template Vec<Dual> taylor_init<Dual>(const ControlledIVP&, const PolicyBasis&, const Vec<Dual>&,
                                            const IWPModel&);

}  // namespace pnmpc
