#include "ht/invariants.hpp"

#include <cmath>

namespace ht {

namespace {

// shared iso part; returns det/inv pieces for reuse by the anisotropic sets
struct IsoWork {
  double I1, I2, I3, J;
  Tensor2 Cm, Cinv;
  SymTensor2 CinvS;
};

IsoWork iso_core(const SymTensor2& C, InvariantSet& s) {
  IsoWork w;
  w.Cm = C.to_matrix();
  const DetInvCof d = det_inv_cof(w.Cm);
  w.I3 = d.det;
  w.J = std::sqrt(w.I3);
  w.Cinv = d.inv;
  w.CinvS = SymTensor2::from_matrix(d.inv);
  w.I1 = C.trace();
  w.I2 = d.cof.trace();

  const SymTensor2 Id = SymTensor2::identity();

  s.count = 3;
  s.I[0] = w.I1;
  s.B[0] = Id;
  s.K[0] = SymTensor4::zero();

  s.I[1] = w.I2;
  s.B[1] = w.I1 * Id - C;
  s.K[1] = SymTensor4::outer(Id, Id) - SymTensor4::sym_identity();

  s.I[2] = w.J;
  s.B[2] = 0.5 * w.J * w.CinvS;
  s.K[2] = 0.25 * w.J * SymTensor4::outer(w.CinvS, w.CinvS) -
           0.5 * w.J * SymTensor4::sym_outer(w.Cinv);
  return w;
}

// I4 = tr(C N), I5 = tr(cof(C) N) for a rank-one structural tensor N = n(x)n.
// Fills slots 3 and 4; optionally the theta derivatives when dn is provided.
void ti_part(const SymTensor2& C, const IsoWork& w, const Vec3& n, const Vec3* dn,
             InvariantSet& s) {
  const Tensor2 N = n * n.transpose();
  const SymTensor2 NS = SymTensor2::from_matrix(N);

  s.count = 5;
  s.I[3] = ddot(C, NS);
  s.B[3] = NS;
  s.K[3] = SymTensor4::zero();

  const double cn = ddot(w.CinvS, NS);  // C^-1 : N
  const Tensor2 CiNCi = w.Cinv * N * w.Cinv;
  const SymTensor2 CiNCiS = SymTensor2::from_matrix(CiNCi);
  const SymTensor2 M = cn * w.CinvS - CiNCiS;

  s.I[4] = w.I3 * cn;
  s.B[4] = w.I3 * M;
  s.K[4] = w.I3 * (SymTensor4::outer(M, w.CinvS) - SymTensor4::outer(w.CinvS, CiNCiS) -
                   cn * SymTensor4::sym_outer(w.Cinv) + SymTensor4::sym_outer2(w.Cinv, CiNCi));

  if (dn) {
    s.has_theta = true;
    const Tensor2 dN = n * dn->transpose() + (*dn) * n.transpose();
    const SymTensor2 dNS = SymTensor2::from_matrix(dN);
    s.dI_dtheta[3] = ddot(C, dNS);
    s.dB_dtheta[3] = dNS;
    const double dcn = ddot(w.CinvS, dNS);
    const SymTensor2 CidNCiS = SymTensor2::from_matrix(w.Cinv * dN * w.Cinv);
    s.dI_dtheta[4] = w.I3 * dcn;
    s.dB_dtheta[4] = w.I3 * (dcn * w.CinvS - CidNCiS);
  }
}

}  // namespace

InvariantSet iso_invariants(const SymTensor2& C) {
  InvariantSet s;
  iso_core(C, s);
  return s;
}

InvariantSet ti_invariants(const SymTensor2& C, const Vec3& n) {
  InvariantSet s;
  const IsoWork w = iso_core(C, s);
  ti_part(C, w, n, nullptr, s);
  return s;
}

Vec3 fiber_direction(double theta, const FiberPlane& p) {
  Vec3 n = Vec3::Zero();
  n[p.a] = std::cos(M_PI * theta);
  n[p.b] = std::sin(M_PI * theta);
  return n;
}

Vec3 fiber_direction_dtheta(double theta, const FiberPlane& p) {
  Vec3 n = Vec3::Zero();
  n[p.a] = -M_PI * std::sin(M_PI * theta);
  n[p.b] = M_PI * std::cos(M_PI * theta);
  return n;
}

InvariantSet ti_invariants_theta(const SymTensor2& C, double theta, const FiberPlane& p) {
  InvariantSet s;
  const IsoWork w = iso_core(C, s);
  const Vec3 n = fiber_direction(theta, p);
  const Vec3 dn = fiber_direction_dtheta(theta, p);
  ti_part(C, w, n, &dn, s);
  return s;
}

void ti_orientation_derivs(const SymTensor2& C, const Vec3& n, const Vec3& dn, double& dI4,
                           double& dI5, SymTensor2& dB4, SymTensor2& dB5) {
  const Tensor2 Cm = C.to_matrix();
  const DetInvCof d = det_inv_cof(Cm);
  const Tensor2 dN = n * dn.transpose() + dn * n.transpose();
  const SymTensor2 dNS = SymTensor2::from_matrix(dN);
  dI4 = ddot(C, dNS);
  dB4 = dNS;
  const SymTensor2 CinvS = SymTensor2::from_matrix(d.inv);
  const double dcn = ddot(CinvS, dNS);
  const SymTensor2 CidNCiS = SymTensor2::from_matrix(d.inv * dN * d.inv);
  dI5 = d.det * dcn;
  dB5 = d.det * (dcn * CinvS - CidNCiS);
}

void cubic_orientation_derivs(const SymTensor2& C, const std::array<Vec3, 3>& a,
                              const std::array<Vec3, 3>& da, double* dI, SymTensor2* dB) {
  const Tensor2 Cm = C.to_matrix();
  const Tensor2 C2 = Cm * Cm;
  for (int k = 0; k < 3; ++k) {
    dI[k] = 0;
    dB[k] = SymTensor2();
  }
  for (int i = 0; i < 3; ++i) {
    const Tensor2 N = a[i] * a[i].transpose();
    const Tensor2 dN = a[i] * da[i].transpose() + da[i] * a[i].transpose();
    const SymTensor2 NS = SymTensor2::from_matrix(N), dNS = SymTensor2::from_matrix(dN);
    const double q = a[i].dot(Cm * a[i]), r = a[i].dot(C2 * a[i]);
    const double dq = 2.0 * da[i].dot(Cm * a[i]), dr = 2.0 * da[i].dot(C2 * a[i]);
    const SymTensor2 MS = SymTensor2::from_matrix(Cm * N + N * Cm);
    const SymTensor2 dMS = SymTensor2::from_matrix(Cm * dN + dN * Cm);

    dI[0] += 2.0 * q * dq;
    dB[0] = dB[0] + 2.0 * (dq * NS + q * dNS);
    dI[1] += dq * r + q * dr;
    dB[1] = dB[1] + dr * NS + r * dNS + dq * MS + q * dMS;
    dI[2] += 2.0 * r * dr;
    dB[2] = dB[2] + 2.0 * (dr * MS + r * dMS);
  }
}

Tensor2 in_plane_rotation(double theta, const FiberPlane& p) {
  const Vec3 axis = Vec3::Unit(p.a).cross(Vec3::Unit(p.b));
  return rodrigues(axis, M_PI * theta);
}

InvariantSet cubic_invariants_theta(const SymTensor2& C, double theta, const FiberPlane& p) {
  const Tensor2 R = in_plane_rotation(theta, p);
  InvariantSet s = cubic_invariants(C, R);
  s.has_theta = true;
  const Vec3 k = Vec3::Unit(p.a).cross(Vec3::Unit(p.b));
  std::array<Vec3, 3> a = cubic_axes(R), da;
  for (int i = 0; i < 3; ++i) da[i] = M_PI * k.cross(a[i]);
  double dI[3];
  SymTensor2 dB[3];
  cubic_orientation_derivs(C, a, da, dI, dB);
  for (int k2 = 0; k2 < 3; ++k2) {
    s.dI_dtheta[3 + k2] = dI[k2];
    s.dB_dtheta[3 + k2] = dB[k2];
  }
  return s;
}

InvariantSet cubic_invariants(const SymTensor2& C, const Tensor2& R) {
  InvariantSet s;
  const IsoWork w = iso_core(C, s);
  const Tensor2 C2 = w.Cm * w.Cm;
  const Tensor2 Id3 = Tensor2::Identity();

  s.count = 6;
  s.I[3] = s.I[4] = s.I[5] = 0.0;
  SymTensor2 B4, B5, B6;
  SymTensor4 K4, K5, K6;
  for (int i = 0; i < 3; ++i) {
    const Vec3 a = R.col(i);
    const Tensor2 N = a * a.transpose();
    const SymTensor2 NS = SymTensor2::from_matrix(N);
    const double q = a.dot(w.Cm * a);
    const double r = a.dot(C2 * a);
    const Tensor2 M = w.Cm * N + N * w.Cm;
    const SymTensor2 MS = SymTensor2::from_matrix(M);
    const SymTensor4 dM = SymTensor4::sym_outer2(Id3, N);  // d(M)/dC action

    s.I[3] += q * q;
    B4 = B4 + 2.0 * q * NS;
    K4 += 2.0 * SymTensor4::outer(NS, NS);

    s.I[4] += q * r;
    B5 = B5 + r * NS + q * MS;
    K5 += SymTensor4::outer(NS, MS) + SymTensor4::outer(MS, NS) + q * dM;

    s.I[5] += r * r;
    B6 = B6 + 2.0 * r * MS;
    K6 += 2.0 * SymTensor4::outer(MS, MS) + 2.0 * r * dM;
  }
  s.B[3] = B4;
  s.B[4] = B5;
  s.B[5] = B6;
  s.K[3] = K4;
  s.K[4] = K5;
  s.K[5] = K6;
  return s;
}

InvariantSet isochoric_invariants(const SymTensor2& C) {
  InvariantSet s;
  InvariantSet iso;
  const IsoWork w = iso_core(C, iso);

  const double f1 = std::pow(w.I3, -1.0 / 3.0);
  const double f2 = f1 * f1;
  const SymTensor2 Id = SymTensor2::identity();
  const SymTensor2& Ci = w.CinvS;

  s.count = 2;
  s.I[0] = f1 * w.I1;
  s.B[0] = f1 * (Id - (w.I1 / 3.0) * Ci);
  s.K[0] = (-1.0 / 3.0) * SymTensor4::outer(s.B[0], Ci) +
           f1 * ((-1.0 / 3.0) * SymTensor4::outer(Ci, Id) +
                 (w.I1 / 3.0) * SymTensor4::sym_outer(w.Cinv));

  const SymTensor2& B2 = iso.B[1];
  s.I[1] = f2 * w.I2;
  s.B[1] = f2 * (B2 - (2.0 * w.I2 / 3.0) * Ci);
  s.K[1] = (-2.0 / 3.0) * SymTensor4::outer(s.B[1], Ci) +
           f2 * (iso.K[1] - (2.0 / 3.0) * SymTensor4::outer(Ci, B2) +
                 (2.0 * w.I2 / 3.0) * SymTensor4::sym_outer(w.Cinv));
  return s;
}

Tensor2 rodrigues(const Vec3& axis, double angle) {
  const double len = axis.norm();
  Vec3 p = axis;
  if (len > 0) p /= len;
  Tensor2 P;
  P << 0, -p.z(), p.y(), p.z(), 0, -p.x(), -p.y(), p.x(), 0;
  return Tensor2::Identity() + std::sin(angle) * P + (1.0 - std::cos(angle)) * P * P;
}

std::array<Tensor2, 4> rodrigues_derivs(const Vec3& axis, double angle) {
  const double len = axis.norm();
  const Vec3 p = axis / len;
  Tensor2 P;
  P << 0, -p.z(), p.y(), p.z(), 0, -p.x(), -p.y(), p.x(), 0;
  const double sn = std::sin(angle), cs = std::cos(angle);

  std::array<Tensor2, 4> d;
  for (int k = 0; k < 3; ++k) {
    const Vec3 dp = (Vec3::Unit(k) - p * p[k]) / len;  // d(normalized axis)/d(axis_k)
    Tensor2 dP;
    dP << 0, -dp.z(), dp.y(), dp.z(), 0, -dp.x(), -dp.y(), dp.x(), 0;
    d[k] = sn * dP + (1.0 - cs) * (dP * P + P * dP);
  }
  d[3] = cs * P + sn * P * P;
  return d;
}

Tensor2 ti_structural(const Tensor2& R) {
  const Vec3 n = R.col(2);
  return n * n.transpose();
}

std::array<Vec3, 3> cubic_axes(const Tensor2& R) {
  return {R.col(0), R.col(1), R.col(2)};
}

std::vector<Tensor2> cubic_rotation_group() {
  std::vector<Tensor2> g;
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& pm : perms)
    for (int s = 0; s < 8; ++s) {
      Tensor2 G = Tensor2::Zero();
      for (int i = 0; i < 3; ++i) G(i, pm[i]) = (s >> i) & 1 ? -1.0 : 1.0;
      if (G.determinant() > 0.5) g.push_back(G);
    }
  return g;
}

}  // namespace ht
