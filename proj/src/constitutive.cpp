#include "ht/constitutive.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace ht {

std::string material_class_tag(MaterialClass c) {
  switch (c) {
    case MaterialClass::CompressibleIso: return "compressible_iso";
    case MaterialClass::CompressibleTI: return "compressible_ti";
    case MaterialClass::CompressibleCubic: return "compressible_cubic";
    case MaterialClass::IncompressibleIso: return "incompressible_iso";
  }
  throw std::logic_error("bad material class");
}

MaterialClass material_class_from_tag(const std::string& tag) {
  if (tag == "compressible_iso") return MaterialClass::CompressibleIso;
  if (tag == "compressible_ti") return MaterialClass::CompressibleTI;
  if (tag == "compressible_cubic") return MaterialClass::CompressibleCubic;
  if (tag == "incompressible_iso") return MaterialClass::IncompressibleIso;
  throw std::invalid_argument("unknown material class tag: " + tag);
}

int invariant_count(MaterialClass c) {
  switch (c) {
    case MaterialClass::CompressibleIso: return 3;
    case MaterialClass::CompressibleTI: return 5;
    case MaterialClass::CompressibleCubic: return 6;
    case MaterialClass::IncompressibleIso: return 2;
  }
  return 0;
}

std::vector<int> invariant_input_map(MaterialClass c) {
  // invariant slot order is (I1, I2, J, ...aniso...) or (Ib1, Ib2); network
  // inputs are (J | I1.. | phi) with J in the unconstrained x0 block
  switch (c) {
    case MaterialClass::CompressibleIso: return {1, 2, 0};
    case MaterialClass::CompressibleTI: return {1, 2, 0, 3, 4};
    case MaterialClass::CompressibleCubic: return {1, 2, 0, 3, 4, 5};
    case MaterialClass::IncompressibleIso: return {0, 1};
  }
  return {};
}

int phi_input_index(MaterialClass c) {
  switch (c) {
    case MaterialClass::CompressibleTI: return 5;
    case MaterialClass::CompressibleCubic: return 6;
    default: return -1;
  }
}

ISNNShape default_shape(MaterialClass c, int width, int depth) {
  ISNNShape s;
  s.depth = depth;
  s.width_x = s.width_y = s.width_t = width;
  switch (c) {
    case MaterialClass::CompressibleIso: s.nx = 1, s.ny = 2, s.nt = 0; break;
    case MaterialClass::CompressibleTI: s.nx = 1, s.ny = 4, s.nt = 1; break;
    case MaterialClass::CompressibleCubic: s.nx = 1, s.ny = 5, s.nt = 1; break;
    case MaterialClass::IncompressibleIso: s.nx = 0, s.ny = 2, s.nt = 0; break;
  }
  return s;
}

VectorXd identity_inputs(MaterialClass c, double phi) {
  switch (c) {
    case MaterialClass::CompressibleIso: {
      VectorXd z(3);
      z << 1, 3, 3;
      return z;
    }
    case MaterialClass::CompressibleTI: {
      VectorXd z(6);
      z << 1, 3, 3, 1, 1, phi;
      return z;
    }
    case MaterialClass::CompressibleCubic: {
      VectorXd z(7);
      z << 1, 3, 3, 3, 3, 3, phi;
      return z;
    }
    case MaterialClass::IncompressibleIso: {
      VectorXd z(2);
      z << 3, 3;
      return z;
    }
  }
  return {};
}

InvariantSet class_invariants(MaterialClass c, const SymTensor2& C, const Tensor2& R) {
  switch (c) {
    case MaterialClass::CompressibleIso: return iso_invariants(C);
    case MaterialClass::CompressibleTI: return ti_invariants(C, R.col(2));
    case MaterialClass::CompressibleCubic: return cubic_invariants(C, R);
    case MaterialClass::IncompressibleIso: return isochoric_invariants(C);
  }
  return {};
}

PointState assemble_point(double psi, const InvariantSet& inv, const VectorXd& g,
                          const MatrixXd& H) {
  PointState o;
  o.psi = psi;
  for (int i = 0; i < inv.count; ++i) {
    o.S = o.S + (2.0 * g(i)) * inv.B[i];
    o.Calg += (4.0 * g(i)) * inv.K[i];
    for (int j = 0; j < inv.count; ++j)
      if (H(i, j) != 0.0) o.Calg += (4.0 * H(i, j)) * SymTensor4::outer(inv.B[i], inv.B[j]);
  }
  return o;
}

SymTensor2 assemble_dS_dtheta(const InvariantSet& inv, const VectorXd& g, const MatrixXd& H) {
  SymTensor2 r;
  for (int i = 0; i < inv.count; ++i) {
    double dgi = 0;
    for (int j = 0; j < inv.count; ++j) dgi += H(i, j) * inv.dI_dtheta[j];
    r = r + (2.0 * dgi) * inv.B[i] + (2.0 * g(i)) * inv.dB_dtheta[i];
  }
  return r;
}

namespace {

// neo-Hookean contribution in invariant slots (I1, I2, J): energy, gradient,
// diagonal curvature, and the same for the phi-derivative of the moduli
struct NHPart {
  double psi, g1, gJ, HJJ;
};

NHPart nh_part(double mu, double kappa, double I1, double J) {
  NHPart p;
  p.psi = 0.5 * mu * (I1 - 3.0) - mu * std::log(J) + 0.5 * kappa * (J - 1.0) * (J - 1.0);
  p.g1 = 0.5 * mu;
  p.gJ = -mu / J + kappa * (J - 1.0);
  p.HJJ = mu / (J * J) + kappa;
  return p;
}

}  // namespace

void NeoHookean::eval(const SymTensor2& C, const MicroDesign&, bool, PointState& out) const {
  const InvariantSet inv = iso_invariants(C);
  const NHPart p = nh_part(c1, c2, inv.I[0], inv.I[2]);
  VectorXd g = VectorXd::Zero(3);
  MatrixXd H = MatrixXd::Zero(3, 3);
  g(0) = p.g1;
  g(2) = p.gJ;
  H(2, 2) = p.HJJ;
  out = assemble_point(p.psi, inv, g, H);
}

void FiberReinforcedNH::eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
                             PointState& out) const {
  InvariantSet inv;
  if (fixed_fiber)
    inv = ti_invariants(C, *fixed_fiber);
  else if (want_design_sens)
    inv = ti_invariants_theta(C, d.theta, plane);
  else
    inv = ti_invariants(C, fiber_direction(d.theta, plane));

  const double mu = mu0 * (1.0 + mu_slope * d.phi);
  const double kappa = kappa0 * (1.0 + kappa_slope * d.phi);
  const NHPart p = nh_part(mu, kappa, inv.I[0], inv.I[2]);
  const double e4 = inv.I[3] - 1.0, e5 = inv.I[4] - 1.0;
  const double psi = p.psi + d.phi * (a4 * e4 * e4 + a5 * e5 * e5);

  VectorXd g = VectorXd::Zero(5);
  MatrixXd H = MatrixXd::Zero(5, 5);
  g(0) = p.g1;
  g(2) = p.gJ;
  g(3) = 2.0 * a4 * d.phi * e4;
  g(4) = 2.0 * a5 * d.phi * e5;
  H(2, 2) = p.HJJ;
  H(3, 3) = 2.0 * a4 * d.phi;
  H(4, 4) = 2.0 * a5 * d.phi;
  out = assemble_point(psi, inv, g, H);

  if (want_design_sens) {
    const double dmu = mu0 * mu_slope, dkappa = kappa0 * kappa_slope;
    VectorXd dg = VectorXd::Zero(5);
    dg(0) = 0.5 * dmu;
    dg(2) = -dmu / inv.I[2] + dkappa * (inv.I[2] - 1.0);
    dg(3) = 2.0 * a4 * e4;
    dg(4) = 2.0 * a5 * e5;
    SymTensor2 dsp;
    for (int i = 0; i < 5; ++i) dsp = dsp + (2.0 * dg(i)) * inv.B[i];
    out.dS_dphi = dsp;
    out.dS_dtheta = inv.has_theta ? assemble_dS_dtheta(inv, g, H) : SymTensor2();
  }
}

void CubicLatticeNH::eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
                          PointState& out) const {
  InvariantSet inv;
  if (fixed_rotation)
    inv = cubic_invariants(C, *fixed_rotation);
  else if (want_design_sens)
    inv = cubic_invariants_theta(C, d.theta, plane);
  else
    inv = cubic_invariants(C, in_plane_rotation(d.theta, plane));

  const double mu = mu0 * (1.0 + mu_slope * d.phi);
  const double kappa = kappa0 * (1.0 + kappa_slope * d.phi);
  const NHPart p = nh_part(mu, kappa, inv.I[0], inv.I[2]);
  const double e4 = inv.I[3] - 3.0, e5 = inv.I[4] - 3.0, e6 = inv.I[5] - 3.0;
  const double psi = p.psi + d.phi * (a4 * e4 * e4 + a5 * e5 * e5 + a6 * e6 * e6);

  VectorXd g = VectorXd::Zero(6);
  MatrixXd H = MatrixXd::Zero(6, 6);
  g(0) = p.g1;
  g(2) = p.gJ;
  g(3) = 2.0 * a4 * d.phi * e4;
  g(4) = 2.0 * a5 * d.phi * e5;
  g(5) = 2.0 * a6 * d.phi * e6;
  H(2, 2) = p.HJJ;
  H(3, 3) = 2.0 * a4 * d.phi;
  H(4, 4) = 2.0 * a5 * d.phi;
  H(5, 5) = 2.0 * a6 * d.phi;
  out = assemble_point(psi, inv, g, H);

  if (want_design_sens) {
    const double dmu = mu0 * mu_slope, dkappa = kappa0 * kappa_slope;
    VectorXd dg = VectorXd::Zero(6);
    dg(0) = 0.5 * dmu;
    dg(2) = -dmu / inv.I[2] + dkappa * (inv.I[2] - 1.0);
    dg(3) = 2.0 * a4 * e4;
    dg(4) = 2.0 * a5 * e5;
    dg(5) = 2.0 * a6 * e6;
    SymTensor2 dsp;
    for (int i = 0; i < 6; ++i) dsp = dsp + (2.0 * dg(i)) * inv.B[i];
    out.dS_dphi = dsp;
    out.dS_dtheta = inv.has_theta ? assemble_dS_dtheta(inv, g, H) : SymTensor2();
  }
}

void MooneyRivlinIncompressible::eval(const SymTensor2& C, const MicroDesign& d,
                                      bool want_design_sens, PointState& out) const {
  const InvariantSet inv = isochoric_invariants(C);
  const double f = 1.0 + phi_scale * d.phi;
  const double psi = f * (C10 * (inv.I[0] - 3.0) + C01 * (inv.I[1] - 3.0));
  VectorXd g(2);
  g << f * C10, f * C01;
  const MatrixXd H = MatrixXd::Zero(2, 2);
  out = assemble_point(psi, inv, g, H);
  if (want_design_sens) {
    out.dS_dphi = (2.0 * phi_scale * C10) * inv.B[0] + (2.0 * phi_scale * C01) * inv.B[1];
    out.dS_dtheta = SymTensor2();
  }
}

namespace {
std::atomic<std::uint64_t> g_surrogate_uid{1};
}

SurrogateModel::SurrogateModel(SurrogateCheckpoint ck)
    : ck_(std::move(ck)), cls_(material_class_from_tag(ck_.class_tag)) {
  zmap_ = invariant_input_map(cls_);
  phi_col_ = phi_input_index(cls_);
  id_inv_ = class_invariants(cls_, SymTensor2::identity(), Tensor2::Identity());
  uid_ = g_surrogate_uid.fetch_add(1);
}

const SurrogateModel::Norm& SurrogateModel::norm_at(double phi) const {
  struct Cache {
    std::uint64_t uid = 0;
    double phi = 0;
    Norm n;
  };
  static thread_local Cache c;
  if (c.uid == uid_ && c.phi == phi) return c.n;

  const int cnt = invariant_count(cls_);
  const VectorXd z0 = identity_inputs(cls_, phi);
  const EnergyEval e0 = ck_.net.evaluate(z0);
  VectorXd g0(cnt), dg0(cnt);
  for (int i = 0; i < cnt; ++i) {
    g0(i) = e0.grad(zmap_[i]);
    dg0(i) = phi_col_ >= 0 ? e0.hess(zmap_[i], phi_col_) : 0.0;
  }
  c.n.c0 = stress_zero_coefficients(id_inv_, g0);
  c.n.dc0_dphi = stress_zero_coefficients(id_inv_, dg0);
  c.n.psi0 = e0.psi;
  c.uid = uid_;
  c.phi = phi;
  return c.n;
}

void SurrogateModel::eval(const SymTensor2& C, const MicroDesign& d, bool want_design_sens,
                          PointState& out) const {
  InvariantSet inv;
  switch (cls_) {
    case MaterialClass::CompressibleIso:
      inv = iso_invariants(C);
      break;
    case MaterialClass::CompressibleTI:
      inv = want_design_sens ? ti_invariants_theta(C, d.theta, plane)
                             : ti_invariants(C, fiber_direction(d.theta, plane));
      break;
    case MaterialClass::CompressibleCubic:
      inv = want_design_sens ? cubic_invariants_theta(C, d.theta, plane)
                             : cubic_invariants(C, in_plane_rotation(d.theta, plane));
      break;
    case MaterialClass::IncompressibleIso:
      inv = isochoric_invariants(C);
      break;
  }
  const int cnt = inv.count;
  VectorXd z(ck_.net.shape.n_inputs());
  for (int i = 0; i < cnt; ++i) z(zmap_[i]) = inv.I[i];
  if (phi_col_ >= 0) z(phi_col_) = d.phi;

  const EnergyEval e = ck_.net.evaluate(z);
  const Norm& nm = norm_at(d.phi);

  VectorXd g(cnt);
  MatrixXd H(cnt, cnt);
  double psi = e.psi - nm.psi0;
  for (int i = 0; i < cnt; ++i) {
    g(i) = e.grad(zmap_[i]) - nm.c0(i);
    psi -= nm.c0(i) * (inv.I[i] - id_inv_.I[i]);
    for (int j = 0; j < cnt; ++j) H(i, j) = e.hess(zmap_[i], zmap_[j]);
  }
  out = assemble_point(psi, inv, g, H);

  if (want_design_sens) {
    SymTensor2 dsp;
    for (int i = 0; i < cnt; ++i) {
      const double dgi = (phi_col_ >= 0 ? e.hess(zmap_[i], phi_col_) : 0.0) - nm.dc0_dphi(i);
      dsp = dsp + (2.0 * dgi) * inv.B[i];
    }
    out.dS_dphi = dsp;
    out.dS_dtheta = inv.has_theta ? assemble_dS_dtheta(inv, g, H) : SymTensor2();
  }
}

std::unique_ptr<ConstitutiveModel> load_surrogate(const std::string& checkpoint_path) {
  return std::make_unique<SurrogateModel>(load_checkpoint(checkpoint_path));
}

}  // namespace ht
