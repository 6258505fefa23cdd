#pragma once

// Method of moving asymptotes (Svanberg 1987) for a small number of
// constraints. The separable subproblem is solved in the dual: for fixed
// multipliers the primal minimizer is closed-form, and the concave dual is
// maximized by cyclic per-coordinate bisection on its partial derivatives,
// which is robust for the m <= 2 problems used here. Elastic variables with a
// large penalty keep infeasible iterates well-posed.

#include <Eigen/Dense>

namespace ht {

struct MMAOptions {
  double move = 0.2;       // move limit, fraction of the variable range
  double asyinit = 0.5;    // initial asymptote distance, fraction of range
  double asyincr = 1.2;
  double asydecr = 0.7;
  double albefa = 0.1;    // bound offset from the asymptotes
  // symmetric curvature floor on the p/q coefficients. Large enough that the
  // subproblem stays well conditioned when the gradient vanishes (the step
  // then contracts like a damped Newton step instead of jumping a fixed
  // fraction of the asymptote gap), small enough to be negligible against
  // real sensitivities.
  double raa0 = 1e-3;
  double c_elastic = 1e6;  // penalty on constraint violation
  int max_dual_cycles = 100;
  double dual_tol = 1e-9;
};

class MMA {
 public:
  MMA(int n, int m, const MMAOptions& opt = {});

  // one update. fval <= 0 means feasible; dfdx is m x n.
  Eigen::VectorXd update(const Eigen::VectorXd& x, const Eigen::VectorXd& xmin,
                         const Eigen::VectorXd& xmax, const Eigen::VectorXd& df0dx,
                         const Eigen::VectorXd& fval, const Eigen::MatrixXd& dfdx);

  void reset();
  const Eigen::VectorXd& lambda() const { return lam_; }

 private:
  int n_, m_, iter_ = 0;
  MMAOptions opt_;
  Eigen::VectorXd xold1_, xold2_, low_, upp_, lam_;
};

}  // namespace ht
