#include "ht/mma.hpp"

#include <cmath>
#include <stdexcept>

namespace ht {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MMA::MMA(int n, int m, const MMAOptions& opt) : n_(n), m_(m), opt_(opt) { reset(); }

void MMA::reset() {
  iter_ = 0;
  xold1_.resize(0);
  xold2_.resize(0);
  low_.resize(0);
  upp_.resize(0);
  lam_ = VectorXd::Zero(m_);
}

VectorXd MMA::update(const VectorXd& x, const VectorXd& xmin, const VectorXd& xmax,
                     const VectorXd& df0dx, const VectorXd& fval, const MatrixXd& dfdx) {
  if (x.size() != n_ || dfdx.rows() != m_ || dfdx.cols() != n_ || fval.size() != m_)
    throw std::invalid_argument("mma: inconsistent dimensions");
  ++iter_;
  const VectorXd range = (xmax - xmin).cwiseMax(1e-5);

  // asymptote update
  if (iter_ <= 2 || xold2_.size() == 0) {
    low_ = x - opt_.asyinit * range;
    upp_ = x + opt_.asyinit * range;
  } else {
    for (int j = 0; j < n_; ++j) {
      const double zz = (x(j) - xold1_(j)) * (xold1_(j) - xold2_(j));
      double f = 1.0;
      if (zz > 0)
        f = opt_.asyincr;
      else if (zz < 0)
        f = opt_.asydecr;
      // a move-limit-clamped step cannot use wider asymptotes, so growing them
      // here only has to be undone once the iterates start oscillating
      if (f > 1.0 &&
          std::abs(x(j) - xold1_(j)) >= opt_.move * range(j) * (1.0 - 1e-12))
        f = 1.0;
      low_(j) = x(j) - f * (xold1_(j) - low_(j));
      upp_(j) = x(j) + f * (upp_(j) - xold1_(j));
    }
    // the near-side clamp only guards against a vanishing asymptote gap; a
    // large floor (the often-quoted 0.01 of range) makes interior optima
    // limit-cycle at that scale because the subproblem step is a fixed
    // fraction of the gap once the gradient is small
    for (int j = 0; j < n_; ++j) {
      low_(j) = std::max(low_(j), x(j) - 10.0 * range(j));
      low_(j) = std::min(low_(j), x(j) - 1e-5 * range(j));
      upp_(j) = std::min(upp_(j), x(j) + 10.0 * range(j));
      upp_(j) = std::max(upp_(j), x(j) + 1e-5 * range(j));
    }
  }
  xold2_ = xold1_.size() ? xold1_ : x;
  xold1_ = x;

  // feasible box inside the asymptotes, with move limit
  VectorXd alfa(n_), beta(n_);
  for (int j = 0; j < n_; ++j) {
    alfa(j) = std::max({xmin(j), low_(j) + opt_.albefa * (x(j) - low_(j)),
                        x(j) - opt_.move * range(j)});
    beta(j) = std::min({xmax(j), upp_(j) - opt_.albefa * (upp_(j) - x(j)),
                        x(j) + opt_.move * range(j)});
    if (beta(j) < alfa(j)) beta(j) = alfa(j);
  }

  // p/q coefficients with the standard convexification mix
  const VectorXd ux1 = upp_ - x, xl1 = x - low_;
  const VectorXd ux2 = ux1.cwiseProduct(ux1), xl2 = xl1.cwiseProduct(xl1);
  VectorXd p0(n_), q0(n_);
  MatrixXd P(m_, n_), Q(m_, n_);
  for (int j = 0; j < n_; ++j) {
    const double dp = std::max(df0dx(j), 0.0), dq = std::max(-df0dx(j), 0.0);
    const double pq = 0.001 * (dp + dq) + opt_.raa0 / range(j);
    p0(j) = (dp + pq) * ux2(j);
    q0(j) = (dq + pq) * xl2(j);
    for (int i = 0; i < m_; ++i) {
      const double dpi = std::max(dfdx(i, j), 0.0), dqi = std::max(-dfdx(i, j), 0.0);
      const double pqi = 0.001 * (dpi + dqi) + opt_.raa0 / range(j);
      P(i, j) = (dpi + pqi) * ux2(j);
      Q(i, j) = (dqi + pqi) * xl2(j);
    }
  }
  // constraint constants so that the approximation matches fval at x
  VectorXd b = VectorXd::Zero(m_);
  for (int i = 0; i < m_; ++i) {
    for (int j = 0; j < n_; ++j) b(i) += P(i, j) / ux1(j) + Q(i, j) / xl1(j);
    b(i) -= fval(i);
  }

  // primal minimizer for fixed multipliers
  VectorXd xs(n_);
  auto primal_x = [&](const VectorXd& lam, VectorXd& out) {
    for (int j = 0; j < n_; ++j) {
      double pj = p0(j), qj = q0(j);
      for (int i = 0; i < m_; ++i) {
        pj += lam(i) * P(i, j);
        qj += lam(i) * Q(i, j);
      }
      const double sp = std::sqrt(pj), sq = std::sqrt(qj);
      double xj = (sp * low_(j) + sq * upp_(j)) / (sp + sq);
      out(j) = std::min(std::max(xj, alfa(j)), beta(j));
    }
  };
  // partial derivative of the dual: constraint value at x(lam) minus b,
  // minus the elastic variable y_i = max(0, lam_i - c)/1
  auto dual_grad_i = [&](const VectorXd& lam, int i) {
    primal_x(lam, xs);
    double gi = 0;
    for (int j = 0; j < n_; ++j) gi += P(i, j) / (upp_(j) - xs(j)) + Q(i, j) / (xs(j) - low_(j));
    gi -= b(i);
    gi -= std::max(0.0, lam(i) - opt_.c_elastic);
    return gi;
  };

  VectorXd lam = lam_.cwiseMax(0.0);
  for (int cycle = 0; cycle < opt_.max_dual_cycles; ++cycle) {
    double change = 0;
    for (int i = 0; i < m_; ++i) {
      const double old = lam(i);
      // the partial derivative is decreasing in lam(i); bisect its root
      lam(i) = 0.0;
      if (dual_grad_i(lam, i) <= 0) {
        change = std::max(change, std::abs(old));
        continue;  // optimal at the boundary
      }
      double hi = std::max(1.0, 2.0 * old);
      lam(i) = hi;
      while (dual_grad_i(lam, i) > 0 && hi < 1e12) {
        hi *= 10.0;
        lam(i) = hi;
      }
      double lo = 0.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        lam(i) = mid;
        if (dual_grad_i(lam, i) > 0)
          lo = mid;
        else
          hi = mid;
      }
      lam(i) = 0.5 * (lo + hi);
      change = std::max(change, std::abs(lam(i) - old));
    }
    if (change < opt_.dual_tol * (1.0 + lam.norm())) break;
  }
  lam_ = lam;
  primal_x(lam, xs);
  return xs;
}

}  // namespace ht
