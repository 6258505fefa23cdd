#pragma once

// Hyperelastic point models: analytic references and the trained network
// surrogate. All models return the plain Voigt second Piola-Kirchhoff stress
// S = 2 dpsi/dC and algorithmic tangent Calg with apply(Calg, dC) = 2 dS.
// Incompressible models return only the isochoric part; the volumetric
// response is supplied by the mixed element formulation.
//
// The surrogate wraps a trained network over the class invariants and applies
// the stress normalization
//   psi(C, phi) = psi_nn(z) - psi_nn(z0(phi)) - sum_i c0_i(phi) (I_i - I_i0)
// where c0 is the minimal-norm coefficient vector cancelling the network's
// identity-point stress. c0 does not depend on the evaluation orientation
// (tests assert this), so it is computed once per phi at a reference frame.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ht/invariants.hpp"
#include "ht/isnn.hpp"

namespace ht {

enum class MaterialClass { CompressibleIso, CompressibleTI, CompressibleCubic, IncompressibleIso };

std::string material_class_tag(MaterialClass c);
MaterialClass material_class_from_tag(const std::string& tag);

int invariant_count(MaterialClass c);
// invariant slot -> network input index (x0 block first, then y0, then t0=phi)
std::vector<int> invariant_input_map(MaterialClass c);
int phi_input_index(MaterialClass c);  // -1 when the class has no phi input
ISNNShape default_shape(MaterialClass c, int width = 16, int depth = 3);
VectorXd identity_inputs(MaterialClass c, double phi);

// class invariants at an explicit orientation (R ignored by the iso classes;
// TI uses the fiber n = R e3, cubic uses the axes R e_i)
InvariantSet class_invariants(MaterialClass c, const SymTensor2& C, const Tensor2& R);

struct MicroDesign {
  double phi = 0;    // microstructure volume fraction
  double theta = 0;  // design angle in [0,1); physical in-plane angle pi*theta
};

struct PointState {
  double psi = 0;
  SymTensor2 S;
  SymTensor4 Calg;
  // design sensitivities at fixed C, filled when requested
  SymTensor2 dS_dphi, dS_dtheta;
};

// S and Calg from energy derivatives in invariant space:
//   S = 2 sum_i g_i B_i,   Calg = 4 [ sum_ij H_ij B_i B_j^T + sum_i g_i K_i ]
PointState assemble_point(double psi, const InvariantSet& inv, const VectorXd& g,
                          const MatrixXd& H);
// dS/dtheta = 2 sum_i [ (sum_j H_ij dI_j/dtheta) B_i + g_i dB_i/dtheta ]
SymTensor2 assemble_dS_dtheta(const InvariantSet& inv, const VectorXd& g, const MatrixXd& H);

class ConstitutiveModel {
 public:
  virtual ~ConstitutiveModel() = default;
  virtual MaterialClass material_class() const = 0;
  bool incompressible() const {
    return material_class() == MaterialClass::IncompressibleIso;
  }
  virtual bool oriented() const { return false; }
  virtual void eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
                    PointState& out) const = 0;
  FiberPlane plane;  // in-plane convention shared by oriented models
};

// psi = c1/2 (I1 - 3) - c1 ln J + c2/2 (J - 1)^2
class NeoHookean : public ConstitutiveModel {
 public:
  double c1 = 10.0, c2 = 5.0;
  NeoHookean() = default;
  NeoHookean(double c1_, double c2_) : c1(c1_), c2(c2_) {}
  MaterialClass material_class() const override { return MaterialClass::CompressibleIso; }
  void eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
            PointState& out) const override;
};

// neo-Hookean matrix with fibers along n(theta):
//   psi = NH(mu(phi), kappa(phi)) + a4 phi (I4-1)^2 + a5 phi (I5-1)^2,
//   mu = mu0 (1 + mu_slope phi), kappa = kappa0 (1 + kappa_slope phi)
class FiberReinforcedNH : public ConstitutiveModel {
 public:
  double mu0 = 5.0, kappa0 = 25.0, mu_slope = 1.0, kappa_slope = 0.5;
  double a4 = 5.0, a5 = 2.5;
  std::optional<Vec3> fixed_fiber;  // overrides theta (data generation)
  MaterialClass material_class() const override { return MaterialClass::CompressibleTI; }
  bool oriented() const override { return !fixed_fiber.has_value(); }
  void eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
            PointState& out) const override;
};

// cubic-symmetric lattice with axes R(theta) e_i:
//   psi = NH(mu(phi), kappa(phi)) + phi [ a4 (I4-3)^2 + a5 (I5-3)^2 + a6 (I6-3)^2 ]
class CubicLatticeNH : public ConstitutiveModel {
 public:
  double mu0 = 5.0, kappa0 = 25.0, mu_slope = 1.0, kappa_slope = 0.5;
  double a4 = 2.0, a5 = 1.0, a6 = 0.5;
  std::optional<Tensor2> fixed_rotation;  // overrides theta (data generation)
  MaterialClass material_class() const override { return MaterialClass::CompressibleCubic; }
  bool oriented() const override { return !fixed_rotation.has_value(); }
  void eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
            PointState& out) const override;
};

// isochoric Mooney-Rivlin with phi-scaled moduli; kappa0 is the volumetric
// penalty the mixed formulation pairs with this model
class MooneyRivlinIncompressible : public ConstitutiveModel {
 public:
  double C10 = 58.3722481654436, C01 = 58.3722481654436;  // 0.25 mu, mu = E/(2(1+nu))
  double kappa0 = 700.0 / (3.0 * 0.002);                  // E/(3(1-2nu)), nu = 0.499
  double phi_scale = 1.0;                                 // moduli factor (1 + phi_scale phi)
  MaterialClass material_class() const override { return MaterialClass::IncompressibleIso; }
  void eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
            PointState& out) const override;
};

class SurrogateModel : public ConstitutiveModel {
 public:
  explicit SurrogateModel(SurrogateCheckpoint ck);
  MaterialClass material_class() const override { return cls_; }
  bool oriented() const override {
    return cls_ == MaterialClass::CompressibleTI || cls_ == MaterialClass::CompressibleCubic;
  }
  void eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
            PointState& out) const override;
  const SurrogateCheckpoint& checkpoint() const { return ck_; }

 private:
  struct Norm {
    VectorXd c0, dc0_dphi;
    double psi0 = 0;
  };
  const Norm& norm_at(double phi) const;

  SurrogateCheckpoint ck_;
  MaterialClass cls_;
  std::vector<int> zmap_;
  int phi_col_ = -1;
  InvariantSet id_inv_;     // identity-point invariants at the reference frame
  std::uint64_t uid_ = 0;   // distinguishes instances in the per-thread norm cache
};

std::unique_ptr<ConstitutiveModel> load_surrogate(const std::string& checkpoint_path);

}  // namespace ht
