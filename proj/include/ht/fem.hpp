#pragma once

// Total-Lagrangian finite element core on structured hex meshes.
//
// Each element carries an interpolation state (chi, gamma, wlin) and a micro
// design (phi, theta). The element strain energy density is
//   chi * psi(C_hat) + wlin * psi_lin(eps),   C_hat from F_hat = I + gamma*grad(u),
// so fully void elements (gamma ~ 0) degenerate to a soft linear material and
// cannot invert. Solid elements have chi = gamma = 1 and wlin = 0.
//
// Nearly incompressible materials use a mixed formulation with one constant
// pressure unknown per element. The pressure enters through
//   -p*(J_hat - 1) - p^2/(2*kappa_e),   kappa_e = kappa0 * chi_e,
// and is eliminated exactly element by element (p = -kappa_e*(Jbar - 1)), which
// condenses to a displacement-only tangent.

#include <Eigen/Sparse>
#include <vector>

#include "ht/constitutive.hpp"
#include "ht/mesh.hpp"

namespace ht {

struct ElementMaterialState {
  double chi = 1.0;    // stress / stiffness scale
  double gamma = 1.0;  // deformation scale inside F_hat
  double wlin = 0.0;   // weight of the linear stabilization energy
  MicroDesign micro;
};

// quadrature data for the reference element of a uniform mesh;
// identical for every element, so computed once
struct ElementOps {
  static constexpr int kGP = 8;
  double w[kGP];                          // weight * detJ
  Eigen::Matrix<double, 3, 8> dNdX[kGP];  // shape gradients, rows = x,y,z
  Eigen::Matrix<double, 6, 24> Blin[kGP];
};
ElementOps make_element_ops(double hx, double hy, double hz);

// engineering-strain B matrix at deformation F (Blin is buildBN(I))
void buildBN(const Eigen::Matrix<double, 3, 8>& dNdX, const Tensor2& F,
             Eigen::Matrix<double, 6, 24>& B);

// small-strain isotropic stiffness in engineering Voigt form
Eigen::Matrix<double, 6, 6> isotropic_stiffness(double E, double nu);

struct NewtonOptions {
  double tol = 1e-8;        // residual tolerance relative to max(|lambda f_ext|, 1)
  int max_iters = 30;
  int max_halvings = 8;     // load step bisections before giving up
  int grow_after = 2;       // consecutive converged steps before step doubling
  double initial_step = 1.0;
};

struct NewtonResult {
  bool converged = false;
  int load_steps = 0;
  int total_iters = 0;
  double final_residual = 0;
};

// per-element derivative chain of the interpolation quantities with respect
// to one scalar design variable (filled in by the optimizer)
struct DesignChain {
  double dchi = 0, dgamma = 0, dwlin = 0;
};

struct ElemDesignDerivs {
  Eigen::Matrix<double, 24, 1> dRu_drho = Eigen::Matrix<double, 24, 1>::Zero();
  Eigen::Matrix<double, 24, 1> dRu_dphi = Eigen::Matrix<double, 24, 1>::Zero();
  Eigen::Matrix<double, 24, 1> dRu_dtheta = Eigen::Matrix<double, 24, 1>::Zero();
  double dRp_drho = 0;  // mixed formulation only
};

class FEModel {
 public:
  FEModel(const BoxMesh& mesh, const ConstitutiveModel* material);

  BoxMesh mesh;
  const ConstitutiveModel* material = nullptr;
  std::vector<ElementMaterialState> estate;

  std::vector<uint8_t> fixed;  // size 3*n_nodes, nonzero = dof pinned to zero
  Eigen::VectorXd f_ext;       // size 3*n_nodes, dead loads

  double stab_E = 0.01, stab_nu = 0.3;

  bool mixed = false;
  double kappa0 = 0;  // volumetric penalty scale for the mixed formulation

  bool parallel = true;  // OpenMP element loop; scatter is serial either way

  int n_dof() const { return 3 * mesh.n_nodes(); }
  int n_free() const { return n_free_; }
  const std::vector<int>& free_map() const { return free_map_; }

  void fix_dof(int node, int comp) { fixed[3 * node + comp] = 1; }
  void fix_node(int node) { for (int c = 0; c < 3; ++c) fix_dof(node, c); }

  // call once after boundary conditions are final
  void finalize();

  double kappa_e(int e) const { return kappa0 * estate[e].chi; }

  // exact elimination of the element pressures at the current displacements
  void update_pressures(const Eigen::VectorXd& u, Eigen::VectorXd& p) const;

  // mean of J_hat over one element
  double elem_mean_J(int e, const Eigen::VectorXd& u) const;

  // residual of free dofs (f_int - lambda*f_ext) and condensed tangent;
  // returns false if any element evaluation failed (inverted or non-finite)
  bool assemble(const Eigen::VectorXd& u, const Eigen::VectorXd& p, double lambda,
                Eigen::VectorXd& R_free, Eigen::SparseMatrix<double>& K) const;

  // full-length internal force vector (includes reactions at fixed dofs)
  bool internal_force(const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                      Eigen::VectorXd& fint) const;

  // total potential energy at (u, p); used by finite difference checks
  double total_potential(const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                         double lambda) const;

  // Newton with adaptive load stepping from lambda = 0 to 1; u and p are
  // updated in place (warm starts allowed)
  NewtonResult solve(Eigen::VectorXd& u, Eigen::VectorXd& p,
                     const NewtonOptions& opt = {}) const;

  // solves K(u)^T lam = rhs_u on the free dofs (full-length vectors in/out)
  // and recovers the element pressure adjoints for the mixed formulation
  bool adjoint_solve(const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                     const Eigen::VectorXd& rhs_u, Eigen::VectorXd& lam_u,
                     Eigen::VectorXd& lam_p) const;

  // partial derivatives of the element residual with respect to the element's
  // design quantities, holding u and p fixed
  bool element_design_derivs(int e, const Eigen::VectorXd& u, double p_e,
                             const DesignChain& chain, ElemDesignDerivs& out) const;

  const ElementOps& ops() const { return ops_; }
  Eigen::Matrix<double, 6, 6> stab_C() const { return stab_C_; }

 private:
  struct ElemWork {
    Eigen::Matrix<double, 24, 24> ke;
    Eigen::Matrix<double, 24, 1> fe;
    Eigen::Matrix<double, 24, 1> kup;  // coupling column, mixed only
    double energy = 0;
    bool ok = true;
  };

  // element kernel; any of the outputs may be skipped via flags
  bool elem_eval(int e, const Eigen::VectorXd& u, double p_e, bool want_tangent,
                 ElemWork& w) const;

  void gather(int e, const Eigen::VectorXd& u, Eigen::Matrix<double, 24, 1>& ue) const;

  ElementOps ops_;
  Eigen::Matrix<double, 6, 6> stab_C_;
  std::vector<int> free_map_;
  int n_free_ = 0;
  bool finalized_ = false;
};

}  // namespace ht
