#include "ht/filters.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ht {

using Eigen::VectorXd;

FilterOperator build_filter(const BoxMesh& mesh, double rmin) {
  if (!(rmin > 0)) throw std::invalid_argument("filter: rmin must be positive");
  FilterOperator F;
  F.rmin = rmin;
  const int n = mesh.n_elems();
  // centroid distances on the uniform grid are multiples of the spacings, so
  // the reach per axis is bounded by these window half-widths
  const int wx = static_cast<int>(std::floor(rmin / mesh.hx()));
  const int wy = static_cast<int>(std::floor(rmin / mesh.hy()));
  const int wz = static_cast<int>(std::floor(rmin / mesh.hz()));

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(n) * (2 * wx + 1) * (2 * wy + 1) * (2 * wz + 1));
  F.Hs = VectorXd::Zero(n);
  for (int e = 0; e < n; ++e) {
    const auto [i, j, k] = mesh.elem_ijk(e);
    for (int dk = -wz; dk <= wz; ++dk) {
      const int kk = k + dk;
      if (kk < 0 || kk >= mesh.nz) continue;
      for (int dj = -wy; dj <= wy; ++dj) {
        const int jj = j + dj;
        if (jj < 0 || jj >= mesh.ny) continue;
        for (int di = -wx; di <= wx; ++di) {
          const int ii = i + di;
          if (ii < 0 || ii >= mesh.nx) continue;
          const double dist = std::sqrt(std::pow(di * mesh.hx(), 2) +
                                        std::pow(dj * mesh.hy(), 2) +
                                        std::pow(dk * mesh.hz(), 2));
          const double wt = rmin - dist;
          if (wt <= 0) continue;
          trips.emplace_back(e, mesh.elem_id(ii, jj, kk), wt);
          F.Hs(e) += wt;
        }
      }
    }
  }
  F.H.resize(n, n);
  F.H.setFromTriplets(trips.begin(), trips.end());
  return F;
}

double project_density(double rho_t, double beta, double eta, double& deriv) {
  const double t = std::tanh(beta * (rho_t - eta));
  const double den = std::tanh(beta * eta) + std::tanh(beta * (1.0 - eta));
  deriv = beta * (1.0 - t * t) / den;
  return (std::tanh(beta * eta) + t) / den;
}

InterpPoint Interpolation::eval(double rho_b) const {
  InterpPoint o;
  const double rp = std::pow(rho_b, p);
  o.chi = rp * (1.0 - eps) + eps;
  o.dchi = (rho_b > 0 || p <= 1.0) ? p * std::pow(rho_b, p - 1.0) * (1.0 - eps) : 0.0;

  const double t = std::tanh(beta_psi * (o.chi - eta_psi));
  const double den = std::tanh(beta_psi * eta_psi) + std::tanh(beta_psi * (1.0 - eta_psi));
  o.gamma = (std::tanh(beta_psi * eta_psi) + t) / den;
  const double dgamma_dchi = beta_psi * (1.0 - t * t) / den;
  o.dgamma = dgamma_dchi * o.dchi;

  o.wlin = o.chi * (1.0 - o.gamma * o.gamma);
  o.dwlin = o.dchi * (1.0 - o.gamma * o.gamma) - 2.0 * o.chi * o.gamma * o.dgamma;
  return o;
}

OrientationResult orientation_filter(const FilterOperator& F, const VectorXd& theta,
                                     const VectorXd& w) {
  const int n = static_cast<int>(theta.size());
  OrientationResult R;
  R.theta_f.resize(n);
  R.c.setZero(n);
  R.s.setZero(n);
  R.ct.resize(n);
  R.st.resize(n);
  R.degenerate.assign(n, 0);

  for (int j = 0; j < n; ++j) {
    R.ct(j) = std::cos(2.0 * M_PI * theta(j));
    R.st(j) = std::sin(2.0 * M_PI * theta(j));
  }
  for (int e = 0; e < n; ++e) {
    double c = 0, s = 0, scale = 0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(F.H, e); it;
         ++it) {
      const double hw = it.value() * w(it.col());
      c += hw * R.ct(it.col());
      s += hw * R.st(it.col());
      scale += std::abs(hw);
    }
    R.c(e) = c;
    R.s(e) = s;
    // the renormalized resultant is direction-only; a cancelled resultant has
    // no direction, so the raw angle is kept for that element
    if (std::hypot(c, s) <= 1e-12 * scale) {
      R.degenerate[e] = 1;
      ++R.n_degenerate;
      R.theta_f(e) = theta(e);
      continue;
    }
    double tf = std::atan2(s, c) / (2.0 * M_PI);
    if (tf < 0) tf += 1.0;
    R.theta_f(e) = tf;
  }
  if (R.n_degenerate > 0)
    std::fprintf(stderr,
                 "orientation filter: %d element(s) with a degenerate direction, "
                 "raw angles kept\n",
                 R.n_degenerate);
  return R;
}

void orientation_vjp(const FilterOperator& F, const VectorXd& w,
                     const OrientationResult& R, const VectorXd& theta_bar,
                     VectorXd& grad_theta, VectorXd& grad_w) {
  const int n = static_cast<int>(w.size());
  grad_theta.setZero(n);
  grad_w.setZero(n);
  for (int e = 0; e < n; ++e) {
    if (R.degenerate[e]) {
      grad_theta(e) += theta_bar(e);
      continue;
    }
    const double c = R.c(e), s = R.s(e);
    const double r2 = c * c + s * s;
    const double tb = theta_bar(e);
    if (tb == 0.0) continue;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(F.H, e); it;
         ++it) {
      const int j = static_cast<int>(it.col());
      const double h = it.value();
      // theta_f = atan2(s, c) / 2pi with s, c linear in h w (sin, cos)
      grad_theta(j) += tb * h * w(j) * (c * R.ct(j) + s * R.st(j)) / r2;
      grad_w(j) += tb * h * (c * R.st(j) - s * R.ct(j)) / (2.0 * M_PI * r2);
    }
  }
}

void FilterStack::forward(const VectorXd& rho, const VectorXd& phi, const VectorXd& theta,
                          DesignFields& out) const {
  const int n = mesh.n_elems();
  if (rho.size() != n) throw std::invalid_argument("filter stack: rho size mismatch");
  if (use_phi && phi.size() != n)
    throw std::invalid_argument("filter stack: phi size mismatch");
  if (use_theta && theta.size() != n)
    throw std::invalid_argument("filter stack: theta size mismatch");

  out.rho_t = F.apply(rho);
  out.rho_b.resize(n);
  out.drho_b.resize(n);
  for (int e = 0; e < n; ++e)
    out.rho_b(e) = project_density(out.rho_t(e), beta_rho, eta_rho, out.drho_b(e));

  if (use_phi)
    out.phi_f = F.apply(phi_max * phi);
  else
    out.phi_f.resize(0);

  if (use_theta) {
    out.w = use_phi ? VectorXd(out.rho_b.cwiseProduct(out.phi_f)) : out.rho_b;
    out.orient = orientation_filter(F, theta, out.w);
    out.theta_f = out.orient.theta_f;
    out.n_degenerate = out.orient.n_degenerate;
  } else {
    out.w.resize(0);
    out.theta_f.resize(0);
    out.n_degenerate = 0;
  }

  out.chi.resize(n);
  out.gamma.resize(n);
  out.wlin.resize(n);
  out.dchi.resize(n);
  out.dgamma.resize(n);
  out.dwlin.resize(n);
  for (int e = 0; e < n; ++e) {
    const InterpPoint ip = interp.eval(out.rho_b(e));
    out.chi(e) = ip.chi;
    out.gamma(e) = ip.gamma;
    out.wlin(e) = ip.wlin;
    out.dchi(e) = ip.dchi;
    out.dgamma(e) = ip.dgamma;
    out.dwlin(e) = ip.dwlin;
  }
}

void FilterStack::reverse(const DesignFields& f, const VectorXd& dL_drho_b,
                          const VectorXd& dL_dphi_f, const VectorXd& dL_dtheta_f,
                          VectorXd& grad_rho, VectorXd& grad_phi,
                          VectorXd& grad_theta) const {
  const int n = mesh.n_elems();
  VectorXd acc_rb = dL_drho_b;
  VectorXd acc_pf = use_phi ? VectorXd(dL_dphi_f) : VectorXd();
  if (use_phi && acc_pf.size() == 0) acc_pf = VectorXd::Zero(n);

  if (use_theta) {
    // theta_f depends on the raw angles and on the weights rho_b (* phi_f)
    VectorXd dw;
    orientation_vjp(F, f.w, f.orient, dL_dtheta_f, grad_theta, dw);
    if (use_phi) {
      acc_rb += f.phi_f.cwiseProduct(dw);
      acc_pf += f.rho_b.cwiseProduct(dw);
    } else {
      acc_rb += dw;
    }
  } else {
    grad_theta.resize(0);
  }

  grad_rho = F.applyT(VectorXd(f.drho_b.cwiseProduct(acc_rb)));
  grad_phi = use_phi ? VectorXd(phi_max * F.applyT(acc_pf)) : VectorXd();
}

}  // namespace ht
