#pragma once

// Design-field stages for density-based optimization: cone filtering on the
// uniform grid, smooth Heaviside projection, power-law stiffness
// interpolation with the kinematic blend, and the periodic orientation
// filter. Every stage exposes the derivative needed to pull element-level
// sensitivities back to the raw design variables.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <vector>

#include "ht/mesh.hpp"

namespace ht {

// cone weights H_ej = max(0, rmin - |x_e - x_j|) between element centroids.
// Filtering is row-normalized, so a uniform field is reproduced exactly.
struct FilterOperator {
  Eigen::SparseMatrix<double, Eigen::RowMajor> H;
  Eigen::VectorXd Hs;  // row sums, strictly positive for rmin > 0
  double rmin = 0;

  Eigen::VectorXd apply(const Eigen::VectorXd& xi) const {
    return (H * xi).cwiseQuotient(Hs);
  }
  // adjoint of apply
  Eigen::VectorXd applyT(const Eigen::VectorXd& y) const {
    return H.transpose() * y.cwiseQuotient(Hs);
  }
};

FilterOperator build_filter(const BoxMesh& mesh, double rmin);

// smooth Heaviside thresholding of the filtered density. Exact at 0, eta and
// 1 by construction. Returns the projected value, writes d(projected)/d(rho~).
double project_density(double rho_t, double beta, double eta, double& deriv);

struct InterpPoint {
  double chi, gamma, wlin;
  double dchi, dgamma, dwlin;  // derivatives w.r.t. the projected density
};

// chi = rb^p (1-eps) + eps, gamma saturates chi through a sharp tanh ramp,
// and wlin = chi (1 - gamma^2) hands low-density elements to the linear
// stabilization energy.
struct Interpolation {
  double p = 1.0;
  double eps = 1e-3;
  double beta_psi = 500.0;
  double eta_psi = 0.01;
  InterpPoint eval(double rho_b) const;
};

struct OrientationResult {
  Eigen::VectorXd theta_f;          // filtered angle in [0, 1)
  Eigen::VectorXd c, s;             // per-element resultant of the doubled embedding
  Eigen::VectorXd ct, st;           // input embeddings, reused by the adjoint action
  std::vector<std::uint8_t> degenerate;
  int n_degenerate = 0;
};

// weighted circular mean of the doubled angle 2*pi*theta, so theta and
// theta+1 (same physical fiber) filter identically. Elements whose resultant
// cancels keep their raw angle; the count is reported and logged.
OrientationResult orientation_filter(const FilterOperator& F, const Eigen::VectorXd& theta,
                                     const Eigen::VectorXd& w);

// reverse-mode action: given dL/d(theta_f), accumulate dL/d(theta raw) and
// dL/d(weights). Degenerate elements pass their cotangent straight through.
void orientation_vjp(const FilterOperator& F, const Eigen::VectorXd& w,
                     const OrientationResult& R, const Eigen::VectorXd& theta_bar,
                     Eigen::VectorXd& grad_theta, Eigen::VectorXd& grad_w);

// all derived fields for one design evaluation
struct DesignFields {
  Eigen::VectorXd rho_t, rho_b, drho_b;  // filtered, projected, projection slope
  Eigen::VectorXd phi_f;                 // filtered inclusion fraction, already scaled
  Eigen::VectorXd w;                     // orientation weights rho_b (* phi_f)
  OrientationResult orient;
  Eigen::VectorXd theta_f;
  int n_degenerate = 0;
  Eigen::VectorXd chi, gamma, wlin, dchi, dgamma, dwlin;
};

// raw design -> element fields, and the adjoint chain back. phi is stored on
// [0,1] and scaled by phi_max before filtering; theta is filtered but never
// projected.
struct FilterStack {
  BoxMesh mesh;
  FilterOperator F;
  double beta_rho = 1.0;
  double eta_rho = 0.5;
  Interpolation interp;
  double phi_max = 0.5;
  bool use_phi = false;
  bool use_theta = false;

  FilterStack(const BoxMesh& m, double rmin) : mesh(m), F(build_filter(m, rmin)) {}

  void forward(const Eigen::VectorXd& rho, const Eigen::VectorXd& phi,
               const Eigen::VectorXd& theta, DesignFields& out) const;

  // dL_drho_b must already include every dependence on the projected density
  // (interpolation chain, constraints); the orientation-weight path is added
  // here. Unused outputs come back empty.
  void reverse(const DesignFields& f, const Eigen::VectorXd& dL_drho_b,
               const Eigen::VectorXd& dL_dphi_f, const Eigen::VectorXd& dL_dtheta_f,
               Eigen::VectorXd& grad_rho, Eigen::VectorXd& grad_phi,
               Eigen::VectorXd& grad_theta) const;
};

}  // namespace ht
