#include "ht/fem.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ht {

namespace {
using Mat38 = Eigen::Matrix<double, 3, 8>;
using Mat624 = Eigen::Matrix<double, 6, 24>;
using Vec24 = Eigen::Matrix<double, 24, 1>;
using SpMat = Eigen::SparseMatrix<double>;

// plain Voigt components from engineering ones (halve the shears)
SymTensor2 plain_from_eng(const Vec6& eng) {
  SymTensor2 s;
  s.v.head<3>() = eng.head<3>();
  s.v.tail<3>() = 0.5 * eng.tail<3>();
  return s;
}
}  // namespace

void buildBN(const Mat38& dNdX, const Tensor2& F, Mat624& B) {
  for (int a = 0; a < 8; ++a) {
    const double d0 = dNdX(0, a), d1 = dNdX(1, a), d2 = dNdX(2, a);
    for (int k = 0; k < 3; ++k) {
      const int col = 3 * a + k;
      B(0, col) = F(k, 0) * d0;
      B(1, col) = F(k, 1) * d1;
      B(2, col) = F(k, 2) * d2;
      B(3, col) = F(k, 0) * d1 + F(k, 1) * d0;
      B(4, col) = F(k, 0) * d2 + F(k, 2) * d0;
      B(5, col) = F(k, 1) * d2 + F(k, 2) * d1;
    }
  }
}

ElementOps make_element_ops(double hx, double hy, double hz) {
  // local corner signs, bottom face counterclockwise then top
  static const int xi[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                               {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};
  ElementOps ops;
  const double g = 1.0 / std::sqrt(3.0);
  const double detJ = hx * hy * hz / 8.0;
  const double sx = 2.0 / hx, sy = 2.0 / hy, sz = 2.0 / hz;
  int gp = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c, ++gp) {
        const double p0 = (2 * a - 1) * g, p1 = (2 * b - 1) * g, p2 = (2 * c - 1) * g;
        ops.w[gp] = detJ;
        for (int n = 0; n < 8; ++n) {
          const double f0 = 1 + xi[n][0] * p0, f1 = 1 + xi[n][1] * p1, f2 = 1 + xi[n][2] * p2;
          ops.dNdX[gp](0, n) = 0.125 * xi[n][0] * f1 * f2 * sx;
          ops.dNdX[gp](1, n) = 0.125 * xi[n][1] * f0 * f2 * sy;
          ops.dNdX[gp](2, n) = 0.125 * xi[n][2] * f0 * f1 * sz;
        }
        buildBN(ops.dNdX[gp], Tensor2::Identity(), ops.Blin[gp]);
      }
  return ops;
}

Mat6 isotropic_stiffness(double E, double nu) {
  const double lam = E * nu / ((1 + nu) * (1 - 2 * nu));
  const double mu = E / (2 * (1 + nu));
  Mat6 C = Mat6::Zero();
  C.topLeftCorner<3, 3>().setConstant(lam);
  for (int i = 0; i < 3; ++i) {
    C(i, i) += 2 * mu;
    C(3 + i, 3 + i) = mu;
  }
  return C;
}

FEModel::FEModel(const BoxMesh& m, const ConstitutiveModel* mat)
    : mesh(m), material(mat) {
  estate.resize(mesh.n_elems());
  fixed.assign(n_dof(), 0);
  f_ext = Eigen::VectorXd::Zero(n_dof());
  ops_ = make_element_ops(mesh.hx(), mesh.hy(), mesh.hz());
  stab_C_ = isotropic_stiffness(stab_E, stab_nu);
}

void FEModel::finalize() {
  stab_C_ = isotropic_stiffness(stab_E, stab_nu);
  free_map_.assign(n_dof(), -1);
  n_free_ = 0;
  for (int d = 0; d < n_dof(); ++d)
    if (!fixed[d]) free_map_[d] = n_free_++;
  finalized_ = true;
}

void FEModel::gather(int e, const Eigen::VectorXd& u, Vec24& ue) const {
  const auto nodes = mesh.elem_nodes(e);
  for (int a = 0; a < 8; ++a) ue.segment<3>(3 * a) = u.segment<3>(3 * nodes[a]);
}

double FEModel::elem_mean_J(int e, const Eigen::VectorXd& u) const {
  Vec24 ue;
  gather(e, u, ue);
  const Eigen::Map<const Mat38> U(ue.data());
  const double gamma = estate[e].gamma;
  double sum = 0, vol = 0;
  for (int gp = 0; gp < ElementOps::kGP; ++gp) {
    const Tensor2 G = U * ops_.dNdX[gp].transpose();
    const Tensor2 F = Tensor2::Identity() + gamma * G;
    sum += ops_.w[gp] * F.determinant();
    vol += ops_.w[gp];
  }
  return sum / vol;
}

void FEModel::update_pressures(const Eigen::VectorXd& u, Eigen::VectorXd& p) const {
  if (p.size() != mesh.n_elems()) p = Eigen::VectorXd::Zero(mesh.n_elems());
  for (int e = 0; e < mesh.n_elems(); ++e)
    p[e] = -kappa_e(e) * (elem_mean_J(e, u) - 1.0);
}

bool FEModel::elem_eval(int e, const Eigen::VectorXd& u, double p_e, bool want_tangent,
                        ElemWork& w) const {
  w.fe.setZero();
  w.energy = 0;
  if (want_tangent) {
    w.ke.setZero();
    w.kup.setZero();
  }
  const ElementMaterialState& es = estate[e];
  Vec24 ue;
  gather(e, u, ue);
  const Eigen::Map<const Mat38> U(ue.data());

  try {
    Mat624 BN;
    PointState ps;
    for (int gp = 0; gp < ElementOps::kGP; ++gp) {
      const double wq = ops_.w[gp];
      const Tensor2 G = U * ops_.dNdX[gp].transpose();
      const Tensor2 F = Tensor2::Identity() + es.gamma * G;
      if (F.determinant() <= 1e-10) return false;
      const SymTensor2 C = right_cauchy_green(F);
      material->eval(C, es.micro, false, ps);

      SymTensor2 S = es.chi * ps.S;
      SymTensor4 D;
      if (want_tangent) D = es.chi * ps.Calg;
      w.energy += wq * es.chi * ps.psi;

      SymTensor2 CinvS;
      double J = 0;
      if (mixed) {
        const DetInvCof dic = det_inv_cof(C.to_matrix());
        J = std::sqrt(dic.det);
        CinvS = SymTensor2::from_matrix(dic.inv);
        S = S + (-p_e * J) * CinvS;
        if (want_tangent)
          D += (-p_e * J) * SymTensor4::outer(CinvS, CinvS) +
               (2.0 * p_e * J) * SymTensor4::sym_outer(dic.inv);
        w.energy += wq * (-p_e * (J - 1.0) - p_e * p_e / (2.0 * kappa_e(e)));
      }

      buildBN(ops_.dNdX[gp], F, BN);
      w.fe.noalias() += (wq * es.gamma) * (BN.transpose() * S.v);

      const Vec6 eps = ops_.Blin[gp] * ue;
      const Vec6 Slin = stab_C_ * eps;
      w.fe.noalias() += (wq * es.wlin) * (ops_.Blin[gp].transpose() * Slin);
      w.energy += wq * es.wlin * 0.5 * eps.dot(Slin);

      if (want_tangent) {
        const double g2 = es.gamma * es.gamma;
        w.ke.noalias() += (wq * g2) * (BN.transpose() * D.m * BN);
        const Eigen::Matrix<double, 8, 8> sab =
            ops_.dNdX[gp].transpose() * S.to_matrix() * ops_.dNdX[gp];
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b) {
            const double v = wq * g2 * sab(a, b);
            w.ke(3 * a, 3 * b) += v;
            w.ke(3 * a + 1, 3 * b + 1) += v;
            w.ke(3 * a + 2, 3 * b + 2) += v;
          }
        w.ke.noalias() +=
            (wq * es.wlin) * (ops_.Blin[gp].transpose() * stab_C_ * ops_.Blin[gp]);
        if (mixed) w.kup.noalias() += (wq * es.gamma) * (BN.transpose() * (-J * CinvS.v));
      }
    }
    if (mixed && want_tangent) {
      // exact elimination of the element pressure: Kpp = -Ve/kappa_e
      w.ke.noalias() += (kappa_e(e) / mesh.elem_volume()) * (w.kup * w.kup.transpose());
    }
  } catch (...) {
    return false;
  }
  if (!w.fe.allFinite() || !std::isfinite(w.energy)) return false;
  if (want_tangent && !w.ke.allFinite()) return false;
  return true;
}

bool FEModel::assemble(const Eigen::VectorXd& u, const Eigen::VectorXd& p, double lambda,
                       Eigen::VectorXd& R_free, SpMat& K) const {
  const int ne = mesh.n_elems();
  std::vector<ElemWork> work(ne);
  bool all_ok = true;
#ifdef HT_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (int e = 0; e < ne; ++e) {
    const double pe = (mixed && p.size() == ne) ? p[e] : 0.0;
    work[e].ok = elem_eval(e, u, pe, true, work[e]);
  }
  for (int e = 0; e < ne; ++e) all_ok = all_ok && work[e].ok;
  if (!all_ok) return false;

  R_free = Eigen::VectorXd::Zero(n_free_);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(ne) * 576);
  for (int e = 0; e < ne; ++e) {
    const auto nodes = mesh.elem_nodes(e);
    int gdof[24];
    for (int a = 0; a < 8; ++a)
      for (int i = 0; i < 3; ++i) gdof[3 * a + i] = free_map_[3 * nodes[a] + i];
    for (int r = 0; r < 24; ++r) {
      if (gdof[r] < 0) continue;
      R_free[gdof[r]] += work[e].fe[r];
      for (int c = 0; c < 24; ++c)
        if (gdof[c] >= 0) trips.emplace_back(gdof[r], gdof[c], work[e].ke(r, c));
    }
  }
  for (int d = 0; d < n_dof(); ++d)
    if (free_map_[d] >= 0) R_free[free_map_[d]] -= lambda * f_ext[d];

  K.resize(n_free_, n_free_);
  K.setFromTriplets(trips.begin(), trips.end());
  return true;
}

bool FEModel::internal_force(const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                             Eigen::VectorXd& fint) const {
  const int ne = mesh.n_elems();
  std::vector<ElemWork> work(ne);
#ifdef HT_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (int e = 0; e < ne; ++e) {
    const double pe = (mixed && p.size() == ne) ? p[e] : 0.0;
    work[e].ok = elem_eval(e, u, pe, false, work[e]);
  }
  fint = Eigen::VectorXd::Zero(n_dof());
  for (int e = 0; e < ne; ++e) {
    if (!work[e].ok) return false;
    const auto nodes = mesh.elem_nodes(e);
    for (int a = 0; a < 8; ++a)
      fint.segment<3>(3 * nodes[a]) += work[e].fe.segment<3>(3 * a);
  }
  return true;
}

double FEModel::total_potential(const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                                double lambda) const {
  double energy = 0;
  ElemWork w;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const double pe = (mixed && p.size() == mesh.n_elems()) ? p[e] : 0.0;
    if (!elem_eval(e, u, pe, false, w))
      throw std::domain_error("element state not evaluable");
    energy += w.energy;
  }
  return energy - lambda * f_ext.dot(u);
}

NewtonResult FEModel::solve(Eigen::VectorXd& u, Eigen::VectorXd& p,
                            const NewtonOptions& opt) const {
  NewtonResult res;
  if (u.size() != n_dof()) u = Eigen::VectorXd::Zero(n_dof());
  for (int d = 0; d < n_dof(); ++d)
    if (fixed[d]) u[d] = 0;
  if (mixed && p.size() != mesh.n_elems()) p = Eigen::VectorXd::Zero(mesh.n_elems());

  double fnorm = 0;
  for (int d = 0; d < n_dof(); ++d)
    if (free_map_[d] >= 0) fnorm += f_ext[d] * f_ext[d];
  fnorm = std::sqrt(fnorm);

  Eigen::VectorXd R;
  SpMat K;
  double last_res = 0;

  auto newton_at = [&](double lam) -> bool {
    const double ref = std::max(lam * fnorm, 1.0);
    Eigen::SparseLU<SpMat> lu;
    for (int it = 0; it <= opt.max_iters; ++it) {
      if (mixed) update_pressures(u, p);
      if (!assemble(u, p, lam, R, K)) return false;
      last_res = R.norm();
      if (!std::isfinite(last_res)) return false;
      if (last_res <= opt.tol * ref) return true;
      if (it == opt.max_iters) return false;
      lu.compute(K);
      if (lu.info() != Eigen::Success) return false;
      const Eigen::VectorXd du = lu.solve(-R);
      if (!du.allFinite()) return false;
      for (int d = 0; d < n_dof(); ++d)
        if (free_map_[d] >= 0) u[d] += du[free_map_[d]];
      ++res.total_iters;
    }
    return false;
  };

  double done = 0, step = opt.initial_step;
  int halvings = 0, successes = 0;
  Eigen::VectorXd u_ok = u, p_ok = p;
  while (done < 1.0 - 1e-12) {
    const double target = std::min(done + step, 1.0);
    if (newton_at(target)) {
      done = target;
      u_ok = u;
      p_ok = p;
      ++res.load_steps;
      if (++successes >= opt.grow_after) {
        step = std::min(2 * step, 1.0);
        successes = 0;
      }
    } else {
      u = u_ok;
      p = p_ok;
      successes = 0;
      if (++halvings > opt.max_halvings) {
        res.final_residual = last_res;
        return res;
      }
      step *= 0.5;
    }
  }
  res.converged = true;
  res.final_residual = last_res;
  return res;
}

bool FEModel::adjoint_solve(const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                            const Eigen::VectorXd& rhs_u, Eigen::VectorXd& lam_u,
                            Eigen::VectorXd& lam_p) const {
  Eigen::VectorXd R;
  SpMat K;
  if (!assemble(u, p, 0.0, R, K)) return false;
  Eigen::SparseLU<SpMat> lu;
  // the condensed tangent is symmetric, so no transpose is needed here
  lu.compute(K);
  if (lu.info() != Eigen::Success) return false;

  Eigen::VectorXd rhs_free(n_free_);
  for (int d = 0; d < n_dof(); ++d)
    if (free_map_[d] >= 0) rhs_free[free_map_[d]] = rhs_u[d];
  const Eigen::VectorXd lam_free = lu.solve(rhs_free);
  if (!lam_free.allFinite()) return false;

  lam_u = Eigen::VectorXd::Zero(n_dof());
  for (int d = 0; d < n_dof(); ++d)
    if (free_map_[d] >= 0) lam_u[d] = lam_free[free_map_[d]];

  if (mixed) {
    lam_p = Eigen::VectorXd::Zero(mesh.n_elems());
    ElemWork w;
    Vec24 le;
    for (int e = 0; e < mesh.n_elems(); ++e) {
      if (!elem_eval(e, u, p[e], true, w)) return false;
      gather(e, lam_u, le);
      // block elimination: Kpp lam_p + Kpu lam_u = 0 with Kpp = -Ve/kappa_e
      lam_p[e] = (kappa_e(e) / mesh.elem_volume()) * w.kup.dot(le);
    }
  } else {
    lam_p.resize(0);
  }
  return true;
}

bool FEModel::element_design_derivs(int e, const Eigen::VectorXd& u, double p_e,
                                    const DesignChain& chain, ElemDesignDerivs& out) const {
  out = ElemDesignDerivs();
  const ElementMaterialState& es = estate[e];
  Vec24 ue;
  gather(e, u, ue);
  const Eigen::Map<const Mat38> U(ue.data());

  try {
    Mat624 BN, BG;
    PointState ps;
    for (int gp = 0; gp < ElementOps::kGP; ++gp) {
      const double wq = ops_.w[gp];
      const Tensor2 G = U * ops_.dNdX[gp].transpose();
      const Tensor2 F = Tensor2::Identity() + es.gamma * G;
      if (F.determinant() <= 1e-10) return false;
      const SymTensor2 C = right_cauchy_green(F);
      material->eval(C, es.micro, true, ps);

      SymTensor2 S_eff = es.chi * ps.S;
      SymTensor4 D_eff = es.chi * ps.Calg;
      SymTensor2 CinvS;
      double J = 0;
      if (mixed) {
        const DetInvCof dic = det_inv_cof(C.to_matrix());
        J = std::sqrt(dic.det);
        CinvS = SymTensor2::from_matrix(dic.inv);
        S_eff = S_eff + (-p_e * J) * CinvS;
        D_eff += (-p_e * J) * SymTensor4::outer(CinvS, CinvS) +
                 (2.0 * p_e * J) * SymTensor4::sym_outer(dic.inv);
      }

      buildBN(ops_.dNdX[gp], F, BN);
      buildBN(ops_.dNdX[gp], G, BG);  // dBN/dgamma

      // dC/dgamma in plain Voigt components
      const Vec6 dCdg_eng = 2.0 * (BN * ue);
      const SymTensor2 dCdg = plain_from_eng(dCdg_eng);
      const SymTensor2 dS_dg = 0.5 * D_eff.apply(dCdg);

      out.dRu_drho.noalias() +=
          (wq * chain.dgamma) * (BN.transpose() * S_eff.v) +
          (wq * es.gamma * chain.dgamma) * (BG.transpose() * S_eff.v) +
          (wq * es.gamma) *
              (BN.transpose() * (chain.dchi * ps.S.v + chain.dgamma * dS_dg.v));
      const Vec6 eps = ops_.Blin[gp] * ue;
      out.dRu_drho.noalias() +=
          (wq * chain.dwlin) * (ops_.Blin[gp].transpose() * (stab_C_ * eps));

      const double sc = wq * es.gamma * es.chi;
      out.dRu_dphi.noalias() += sc * (BN.transpose() * ps.dS_dphi.v);
      if (material->oriented())
        out.dRu_dtheta.noalias() += sc * (BN.transpose() * ps.dS_dtheta.v);

      if (mixed) {
        // Rp = -int (J - 1) - Ve p/kappa_e, with kappa_e = kappa0 chi
        const double dJ_dg = 0.5 * J * ddot(CinvS, dCdg);
        out.dRp_drho += -wq * dJ_dg * chain.dgamma;
      }
    }
    if (mixed) {
      const double ke = kappa_e(e);
      out.dRp_drho += mesh.elem_volume() * p_e * kappa0 * chain.dchi / (ke * ke);
    }
  } catch (...) {
    return false;
  }
  return out.dRu_drho.allFinite() && out.dRu_dphi.allFinite() &&
         out.dRu_dtheta.allFinite() && std::isfinite(out.dRp_drho);
}

}  // namespace ht
