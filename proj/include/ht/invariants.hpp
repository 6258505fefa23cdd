#pragma once

// Invariant sets for hyperelastic energies, with first derivatives (bases,
// B_i = dI_i/dC) and second derivatives (curvatures K_i, where
// apply(K_i, dC) is the directional derivative of B_i).
//
// Sets:
//   iso         I1 = tr C, I2 = tr(cof C), J = sqrt(det C)
//   ti          iso + I4 = tr(C N), I5 = tr(cof(C) N), N = n (x) n
//   cubic       iso + I4 = C:A:C, I5 = C:A:C^2, I6 = C^2:A:C^2,
//               A = sum_i a_i(x)a_i(x)a_i(x)a_i, a_i = R e_i
//   isochoric   Ib1 = tr(Cbar), Ib2 = tr(cof Cbar), Cbar = J^(-2/3) C
//
// The fiber angle convention: a design angle t in [0,1) maps to the physical
// in-plane angle pi*t (directions are unsigned), while the orientation filter
// elsewhere embeds t on the full circle 2*pi*t so that t=0 and t=1 coincide.

#include <array>
#include <vector>

#include "ht/tensor.hpp"

namespace ht {

constexpr int kMaxInvariants = 6;

struct InvariantSet {
  int count = 0;
  std::array<double, kMaxInvariants> I{};
  std::array<SymTensor2, kMaxInvariants> B{};
  std::array<SymTensor4, kMaxInvariants> K{};
  // orientation derivatives, filled only by the theta-aware TI builder
  bool has_theta = false;
  std::array<double, kMaxInvariants> dI_dtheta{};
  std::array<SymTensor2, kMaxInvariants> dB_dtheta{};
};

InvariantSet iso_invariants(const SymTensor2& C);
InvariantSet ti_invariants(const SymTensor2& C, const Vec3& n);
InvariantSet cubic_invariants(const SymTensor2& C, const Tensor2& R);
InvariantSet isochoric_invariants(const SymTensor2& C);

// in-plane fiber parametrization (plane spanned by global axes a, b)
struct FiberPlane {
  int a = 0, b = 2;  // default x-z
};

Vec3 fiber_direction(double theta, const FiberPlane& p = {});
Vec3 fiber_direction_dtheta(double theta, const FiberPlane& p = {});

// TI set with dI/dtheta, dB/dtheta populated (theta is the design angle)
InvariantSet ti_invariants_theta(const SymTensor2& C, double theta, const FiberPlane& p = {});

// cubic set with axes R(theta) e_i, R(theta) = in_plane_rotation(theta, p),
// and the theta derivatives populated
InvariantSet cubic_invariants_theta(const SymTensor2& C, double theta, const FiberPlane& p = {});

// rotation about e_a x e_b by the physical angle pi*theta, so that
// R(theta) e_a = fiber_direction(theta)
Tensor2 in_plane_rotation(double theta, const FiberPlane& p = {});

// directional derivatives of (I4, I5) and their bases under a fiber velocity dn
void ti_orientation_derivs(const SymTensor2& C, const Vec3& n, const Vec3& dn, double& dI4,
                           double& dI5, SymTensor2& dB4, SymTensor2& dB5);
// same for the cubic triple under per-axis velocities da
void cubic_orientation_derivs(const SymTensor2& C, const std::array<Vec3, 3>& a,
                              const std::array<Vec3, 3>& da, double* dI, SymTensor2* dB);

// Rodrigues rotation; axis need not be normalized
Tensor2 rodrigues(const Vec3& axis, double angle);
// derivatives of R w.r.t. the 4 raw parameters (axis x,y,z, angle)
std::array<Tensor2, 4> rodrigues_derivs(const Vec3& axis, double angle);

// structural tensors
Tensor2 ti_structural(const Tensor2& R);           // N = (R e3)(R e3)^T
std::array<Vec3, 3> cubic_axes(const Tensor2& R);  // a_i = R e_i

// the 24 proper rotations of the cube
std::vector<Tensor2> cubic_rotation_group();

// identity-point invariant values for each set (C = I)
// iso: {3, 3, 1}; ti: {3, 3, 1, 1, 1}; cubic: {3, 3, 1, 3, 3, 3}; isochoric: {3, 3}

}  // namespace ht
