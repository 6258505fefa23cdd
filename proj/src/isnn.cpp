#include "ht/isnn.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ht {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softplus_inv(double y) {
  if (y > 20.0) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

enum Act { kSoftplus, kSigmoid };

inline void act_derivs(Act a, double x, double& s0, double& s1, double& s2) {
  double s = sigmoid(x);
  if (a == kSoftplus) {
    s0 = softplus(x);
    s1 = s;
    s2 = s * (1.0 - s);
  } else {
    s0 = s;
    s1 = s * (1.0 - s);
    s2 = s1 * (1.0 - 2.0 * s);
  }
}

MatrixXd softplus_mat(const MatrixXd& m) {
  return m.unaryExpr([](double v) { return softplus(v); });
}

// stable parameter order shared by num_params / get_flat / set_flat / grads
template <class Net, class Fn>
void visit_params(Net& net, Fn&& fn) {
  int H = net.shape.depth;
  for (int l = 0; l < H - 1; ++l) {
    fn(net.Wyy[l]);
    fn(net.by[l]);
  }
  for (int l = 0; l < H - 1; ++l) {
    fn(net.Wtt[l]);
    fn(net.bt[l]);
  }
  for (int l = 0; l < H; ++l) {
    fn(net.Wxx[l]);
    if (l > 0) fn(net.Wxx0[l]);
    fn(net.Wxy[l]);
    fn(net.Wxt[l]);
    fn(net.bx[l]);
  }
}

// parallel walk over raw params and matching grad accumulators;
// flag marks softplus-reparameterized (non-negative) weights
template <class Fn>
void visit_params_grads(const ISNN& net, const ISNNGrads& g, Fn&& fn) {
  int H = net.shape.depth;
  for (int l = 0; l < H - 1; ++l) {
    fn(net.Wyy[l], g.Wyy[l], true);
    fn(net.by[l], g.by[l], false);
  }
  for (int l = 0; l < H - 1; ++l) {
    fn(net.Wtt[l], g.Wtt[l], true);
    fn(net.bt[l], g.bt[l], false);
  }
  for (int l = 0; l < H; ++l) {
    fn(net.Wxx[l], g.Wxx[l], l > 0);
    if (l > 0) fn(net.Wxx0[l], g.Wxx0[l], false);
    fn(net.Wxy[l], g.Wxy[l], true);
    fn(net.Wxt[l], g.Wxt[l], true);
    fn(net.bx[l], g.bx[l], false);
  }
}

}  // namespace

ISNN::ISNN(const ISNNShape& s) : shape(s) {
  if (s.depth < 2) throw std::invalid_argument("isnn depth must be >= 2");
  int H = s.depth;
  Wyy.resize(H - 1);
  by.resize(H - 1);
  Wtt.resize(H - 1);
  bt.resize(H - 1);
  Wxx.resize(H);
  Wxx0.resize(H);
  Wxy.resize(H);
  Wxt.resize(H);
  bx.resize(H);
  // absent branches keep zero-width matrices so the algebra stays uniform
  int wy = s.ny > 0 ? s.width_y : 0;
  int wt = s.nt > 0 ? s.width_t : 0;
  for (int l = 0; l < H - 1; ++l) {
    Wyy[l] = MatrixXd::Zero(wy, l == 0 ? s.ny : wy);
    by[l] = VectorXd::Zero(wy);
    Wtt[l] = MatrixXd::Zero(wt, l == 0 ? s.nt : wt);
    bt[l] = VectorXd::Zero(wt);
  }
  for (int l = 0; l < H; ++l) {
    int out = (l == H - 1) ? 1 : s.width_x;
    int in_x = (l == 0) ? s.nx : s.width_x;
    int yl = (l == 0) ? s.ny : wy;
    int tl = (l == 0) ? s.nt : wt;
    Wxx[l] = MatrixXd::Zero(out, in_x);
    Wxx0[l] = (l == 0) ? MatrixXd(out, 0) : MatrixXd::Zero(out, s.nx);
    Wxy[l] = MatrixXd::Zero(out, yl);
    Wxt[l] = MatrixXd::Zero(out, tl);
    bx[l] = VectorXd::Zero(out);
  }
  sync();
}

void ISNN::init_random(std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto xavier = [&](MatrixXd& m) {
    if (m.size() == 0) return;
    double lim = std::sqrt(6.0 / double(m.rows() + m.cols()));
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = lim * (2.0 * u(g) - 1.0);
  };
  // raw values chosen so the effective weights start positive, O(1/fan_in)
  auto pos_init = [&](MatrixXd& m) {
    if (m.size() == 0) return;
    double fi = double(m.cols());
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = softplus_inv((0.2 + 0.8 * u(g)) * 2.0 / fi);
  };
  int H = shape.depth;
  for (int l = 0; l < H - 1; ++l) {
    pos_init(Wyy[l]);
    pos_init(Wtt[l]);
    by[l].setZero();
    bt[l].setZero();
  }
  for (int l = 0; l < H; ++l) {
    if (l == 0)
      xavier(Wxx[0]);
    else {
      pos_init(Wxx[l]);
      xavier(Wxx0[l]);
    }
    pos_init(Wxy[l]);
    pos_init(Wxt[l]);
    bx[l].setZero();
  }
  sync();
}

void ISNN::sync() {
  int H = shape.depth;
  eWyy.resize(H - 1);
  eWtt.resize(H - 1);
  eWxx.resize(H);
  eWxy.resize(H);
  eWxt.resize(H);
  for (int l = 0; l < H - 1; ++l) {
    eWyy[l] = softplus_mat(Wyy[l]);
    eWtt[l] = softplus_mat(Wtt[l]);
  }
  for (int l = 0; l < H; ++l) {
    eWxx[l] = (l == 0) ? Wxx[0] : softplus_mat(Wxx[l]);
    eWxy[l] = softplus_mat(Wxy[l]);
    eWxt[l] = softplus_mat(Wxt[l]);
  }
}

double ISNN::value(const VectorXd& z) const {
  int nx = shape.nx, ny = shape.ny, nt = shape.nt, H = shape.depth;
  VectorXd zx = z.head(nx), zy = z.segment(nx, ny), zt = z.tail(nt);
  auto act = [](Act a, VectorXd v) {
    for (int i = 0; i < v.size(); ++i) v(i) = (a == kSoftplus) ? softplus(v(i)) : sigmoid(v(i));
    return v;
  };
  VectorXd vy = zy, vt = zt;
  VectorXd vx = act(kSoftplus, eWxx[0] * zx + eWxy[0] * zy + eWxt[0] * zt + bx[0]);
  for (int l = 1; l < H; ++l) {
    vy = act(kSoftplus, eWyy[l - 1] * vy + by[l - 1]);
    vt = act(kSigmoid, eWtt[l - 1] * vt + bt[l - 1]);
    vx = act(kSoftplus, eWxx[l] * vx + Wxx0[l] * zx + eWxy[l] * vy + eWxt[l] * vt + bx[l]);
  }
  return vx(0);
}

namespace {

// value + dense input Jacobian/Hessian propagation for one layer.
// Hessians are stored row-wise flattened: row i holds d2 v_i / dz dz as n*n entries.
void activate_vjh(Act a, const VectorXd& pre, const MatrixXd& Jpre, const MatrixXd& Hpre,
                  VectorXd& v, MatrixXd& Jv, MatrixXd& Hv) {
  int m = int(pre.size()), n = int(Jpre.cols());
  v.resize(m);
  Jv.resize(m, n);
  Hv.resize(m, n * n);
  for (int i = 0; i < m; ++i) {
    double s0, s1, s2;
    act_derivs(a, pre(i), s0, s1, s2);
    v(i) = s0;
    Jv.row(i) = s1 * Jpre.row(i);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        Hv(i, j * n + k) = s1 * Hpre(i, j * n + k) + s2 * Jpre(i, j) * Jpre(i, k);
  }
}

}  // namespace

EnergyEval ISNN::evaluate(const VectorXd& z) const {
  int nx = shape.nx, ny = shape.ny, nt = shape.nt, H = shape.depth;
  int n = shape.n_inputs();
  VectorXd zx = z.head(nx), zy = z.segment(nx, ny), zt = z.tail(nt);

  // branch states at the current level
  VectorXd vy = zy, vt = zt, vx;
  MatrixXd Jy = MatrixXd::Zero(ny, n), Jt = MatrixXd::Zero(nt, n);
  Jy.middleCols(nx, ny).setIdentity();
  Jt.rightCols(nt).setIdentity();
  MatrixXd Hy = MatrixXd::Zero(ny, n * n), Ht = MatrixXd::Zero(nt, n * n);
  MatrixXd Jx, Hx;

  {
    VectorXd a = eWxx[0] * zx + eWxy[0] * zy + eWxt[0] * zt + bx[0];
    MatrixXd Ja = MatrixXd::Zero(a.size(), n);
    Ja.leftCols(nx) = eWxx[0];
    Ja.middleCols(nx, ny) = eWxy[0];
    Ja.rightCols(nt) = eWxt[0];
    MatrixXd Ha = MatrixXd::Zero(a.size(), n * n);
    activate_vjh(kSoftplus, a, Ja, Ha, vx, Jx, Hx);
  }
  for (int l = 1; l < H; ++l) {
    {
      VectorXd a = eWyy[l - 1] * vy + by[l - 1];
      MatrixXd Ja = eWyy[l - 1] * Jy, Ha = eWyy[l - 1] * Hy;
      activate_vjh(kSoftplus, a, Ja, Ha, vy, Jy, Hy);
    }
    {
      VectorXd a = eWtt[l - 1] * vt + bt[l - 1];
      MatrixXd Ja = eWtt[l - 1] * Jt, Ha = eWtt[l - 1] * Ht;
      activate_vjh(kSigmoid, a, Ja, Ha, vt, Jt, Ht);
    }
    {
      VectorXd a = eWxx[l] * vx + Wxx0[l] * zx + eWxy[l] * vy + eWxt[l] * vt + bx[l];
      MatrixXd Ja = eWxx[l] * Jx + eWxy[l] * Jy + eWxt[l] * Jt;
      Ja.leftCols(nx) += Wxx0[l];
      MatrixXd Ha = eWxx[l] * Hx + eWxy[l] * Hy + eWxt[l] * Ht;
      activate_vjh(kSoftplus, a, Ja, Ha, vx, Jx, Hx);
    }
  }
  EnergyEval out;
  out.psi = vx(0);
  out.grad = Jx.row(0).transpose();
  out.hess = Eigen::Map<const MatrixXd>(Hx.row(0).data(), n, n);  // symmetric by construction
  return out;
}

void ISNN::batch_gradients(const MatrixXd& Z, int k, MatrixXd& G) const {
  int nx = shape.nx, ny = shape.ny, nt = shape.nt, H = shape.depth;
  int N = int(Z.cols());
  MatrixXd Zx = Z.topRows(nx), Zy = Z.middleRows(nx, ny), Zt = Z.bottomRows(nt);
  Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(N);

  auto s1_of = [](Act a, const MatrixXd& pre) {
    MatrixXd s(pre.rows(), pre.cols());
    for (int i = 0; i < pre.rows(); ++i)
      for (int j = 0; j < pre.cols(); ++j) {
        double s0, s1, s2;
        act_derivs(a, pre(i, j), s0, s1, s2);
        s(i, j) = s1;
      }
    return s;
  };
  auto s0_of = [](Act a, MatrixXd pre) {
    for (int i = 0; i < pre.rows(); ++i)
      for (int j = 0; j < pre.cols(); ++j)
        pre(i, j) = (a == kSoftplus) ? softplus(pre(i, j)) : sigmoid(pre(i, j));
    return pre;
  };

  MatrixXd Vy = Zy, Vt = Zt, Vx;
  std::vector<MatrixXd> dVy(k), dVt(k), dVx(k);
  for (int d = 0; d < k; ++d) {
    dVy[d] = MatrixXd::Zero(ny, N);
    if (d >= nx && d < nx + ny) dVy[d].row(d - nx) = ones;
    dVt[d] = MatrixXd::Zero(nt, N);
    if (d >= nx + ny) dVt[d].row(d - nx - ny) = ones;
  }
  {
    MatrixXd A = eWxx[0] * Zx + eWxy[0] * Zy + eWxt[0] * Zt + bx[0] * ones;
    MatrixXd S1 = s1_of(kSoftplus, A);
    Vx = s0_of(kSoftplus, A);
    for (int d = 0; d < k; ++d) {
      MatrixXd dA;
      if (d < nx)
        dA = eWxx[0].col(d) * ones;
      else if (d < nx + ny)
        dA = eWxy[0].col(d - nx) * ones;
      else
        dA = eWxt[0].col(d - nx - ny) * ones;
      dVx[d] = S1.cwiseProduct(dA);
    }
  }
  for (int l = 1; l < H; ++l) {
    {
      MatrixXd A = eWyy[l - 1] * Vy + by[l - 1] * ones;
      MatrixXd S1 = s1_of(kSoftplus, A);
      for (int d = 0; d < k; ++d) dVy[d] = S1.cwiseProduct(eWyy[l - 1] * dVy[d]);
      Vy = s0_of(kSoftplus, A);
    }
    {
      MatrixXd A = eWtt[l - 1] * Vt + bt[l - 1] * ones;
      MatrixXd S1 = s1_of(kSigmoid, A);
      for (int d = 0; d < k; ++d) dVt[d] = S1.cwiseProduct(eWtt[l - 1] * dVt[d]);
      Vt = s0_of(kSigmoid, A);
    }
    {
      MatrixXd A = eWxx[l] * Vx + Wxx0[l] * Zx + eWxy[l] * Vy + eWxt[l] * Vt + bx[l] * ones;
      MatrixXd S1 = s1_of(kSoftplus, A);
      for (int d = 0; d < k; ++d) {
        MatrixXd dA = eWxx[l] * dVx[d] + eWxy[l] * dVy[d] + eWxt[l] * dVt[d];
        if (d < nx) dA += Wxx0[l].col(d) * ones;
        dVx[d] = S1.cwiseProduct(dA);
      }
      Vx = s0_of(kSoftplus, A);
    }
  }
  G.resize(k, N);
  for (int d = 0; d < k; ++d) G.row(d) = dVx[d].row(0);
}

double ISNN::batch_tangent_reverse(const MatrixXd& Z, const MatrixXd& Alpha, ISNNGrads& grads,
                                   MatrixXd& Zbar) const {
  int nx = shape.nx, ny = shape.ny, nt = shape.nt, H = shape.depth;
  int n = shape.n_inputs(), N = int(Z.cols()), k = int(Alpha.rows());
  MatrixXd Zx = Z.topRows(nx), Zy = Z.middleRows(nx, ny), Zt = Z.bottomRows(nt);
  Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(N);

  // per-sample input tangents, zero beyond the first k rows
  MatrixXd dZ = MatrixXd::Zero(n, N);
  dZ.topRows(k) = Alpha;
  MatrixXd dZx = dZ.topRows(nx), dZy = dZ.middleRows(nx, ny), dZt = dZ.bottomRows(nt);

  // forward, storing what the reverse sweep needs
  std::vector<MatrixXd> Vy(H - 1), Vt(H - 1), Vx(H);
  std::vector<MatrixXd> dVy(H - 1), dVt(H - 1), dVx(H);
  std::vector<MatrixXd> S1y(H - 1), S2y(H - 1), S1t(H - 1), S2t(H - 1), S1x(H), S2x(H);
  std::vector<MatrixXd> dAy(H - 1), dAt(H - 1), dAx(H);

  auto forward = [](Act act, const MatrixXd& A, const MatrixXd& dA, MatrixXd& V, MatrixXd& dV,
                    MatrixXd& S1, MatrixXd& S2) {
    int m = int(A.rows()), c = int(A.cols());
    V.resize(m, c);
    S1.resize(m, c);
    S2.resize(m, c);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < c; ++j) act_derivs(act, A(i, j), V(i, j), S1(i, j), S2(i, j));
    dV = S1.cwiseProduct(dA);
  };

  {
    MatrixXd A = eWxx[0] * Zx + eWxy[0] * Zy + eWxt[0] * Zt + bx[0] * ones;
    dAx[0] = eWxx[0] * dZx + eWxy[0] * dZy + eWxt[0] * dZt;
    forward(kSoftplus, A, dAx[0], Vx[0], dVx[0], S1x[0], S2x[0]);
  }
  for (int l = 1; l < H; ++l) {
    {
      MatrixXd A = eWyy[l - 1] * (l == 1 ? Zy : Vy[l - 2]) + by[l - 1] * ones;
      dAy[l - 1] = eWyy[l - 1] * (l == 1 ? dZy : dVy[l - 2]);
      forward(kSoftplus, A, dAy[l - 1], Vy[l - 1], dVy[l - 1], S1y[l - 1], S2y[l - 1]);
    }
    {
      MatrixXd A = eWtt[l - 1] * (l == 1 ? Zt : Vt[l - 2]) + bt[l - 1] * ones;
      dAt[l - 1] = eWtt[l - 1] * (l == 1 ? dZt : dVt[l - 2]);
      forward(kSigmoid, A, dAt[l - 1], Vt[l - 1], dVt[l - 1], S1t[l - 1], S2t[l - 1]);
    }
    {
      MatrixXd A = eWxx[l] * Vx[l - 1] + Wxx0[l] * Zx + eWxy[l] * Vy[l - 1] +
                   eWxt[l] * Vt[l - 1] + bx[l] * ones;
      dAx[l] = eWxx[l] * dVx[l - 1] + Wxx0[l] * dZx + eWxy[l] * dVy[l - 1] + eWxt[l] * dVt[l - 1];
      forward(kSoftplus, A, dAx[l], Vx[l], dVx[l], S1x[l], S2x[l]);
    }
  }
  double T = dVx[H - 1].sum();

  // reverse sweep. Value/tangent adjoint pairs: for a layer output (V, dV)
  // with adjoints (Vb, dVb),
  //   Ab  = S1 .* Vb + S2 .* dA .* dVb,   dAb = S1 .* dVb,
  // then per weighted input P:  gW += Ab P^T + dAb dP^T,  Pb += W^T Ab,
  // dPb += W^T dAb, and gb += rowsum(Ab).
  auto rev_act = [](const MatrixXd& S1, const MatrixXd& S2, const MatrixXd& dA, const MatrixXd& Vb,
                    const MatrixXd& dVb, MatrixXd& Ab, MatrixXd& dAb) {
    Ab = S1.cwiseProduct(Vb) + S2.cwiseProduct(dA).cwiseProduct(dVb);
    dAb = S1.cwiseProduct(dVb);
  };

  // adjoints of the y/t branch values by level (0 = inputs)
  std::vector<MatrixXd> Ybar(H), dYbar(H), Tbar(H), dTbar(H);
  for (int lv = 0; lv < H; ++lv) {
    int wy = lv == 0 ? ny : int(Vy.empty() ? 0 : Vy[lv - 1].rows());
    int wt = lv == 0 ? nt : int(Vt.empty() ? 0 : Vt[lv - 1].rows());
    Ybar[lv] = MatrixXd::Zero(wy, N);
    dYbar[lv] = MatrixXd::Zero(wy, N);
    Tbar[lv] = MatrixXd::Zero(wt, N);
    dTbar[lv] = MatrixXd::Zero(wt, N);
  }
  MatrixXd X0bar = MatrixXd::Zero(nx, N);

  MatrixXd Vxb = MatrixXd::Zero(1, N), dVxb = MatrixXd::Ones(1, N);
  for (int l = H - 1; l >= 1; --l) {
    MatrixXd Ab, dAb;
    rev_act(S1x[l], S2x[l], dAx[l], Vxb, dVxb, Ab, dAb);
    grads.Wxx[l] += Ab * Vx[l - 1].transpose() + dAb * dVx[l - 1].transpose();
    grads.Wxx0[l] += Ab * Zx.transpose() + dAb * dZx.transpose();
    grads.Wxy[l] += Ab * Vy[l - 1].transpose() + dAb * dVy[l - 1].transpose();
    grads.Wxt[l] += Ab * Vt[l - 1].transpose() + dAb * dVt[l - 1].transpose();
    grads.bx[l] += Ab.rowwise().sum();
    X0bar += Wxx0[l].transpose() * Ab;
    Ybar[l] += eWxy[l].transpose() * Ab;
    dYbar[l] += eWxy[l].transpose() * dAb;
    Tbar[l] += eWxt[l].transpose() * Ab;
    dTbar[l] += eWxt[l].transpose() * dAb;
    Vxb = eWxx[l].transpose() * Ab;
    dVxb = eWxx[l].transpose() * dAb;
  }
  {
    MatrixXd Ab, dAb;
    rev_act(S1x[0], S2x[0], dAx[0], Vxb, dVxb, Ab, dAb);
    grads.Wxx[0] += Ab * Zx.transpose() + dAb * dZx.transpose();
    grads.Wxy[0] += Ab * Zy.transpose() + dAb * dZy.transpose();
    grads.Wxt[0] += Ab * Zt.transpose() + dAb * dZt.transpose();
    grads.bx[0] += Ab.rowwise().sum();
    X0bar += eWxx[0].transpose() * Ab;
    Ybar[0] += eWxy[0].transpose() * Ab;
    Tbar[0] += eWxt[0].transpose() * Ab;
  }
  for (int l = H - 2; l >= 0; --l) {
    {
      MatrixXd Ab, dAb;
      rev_act(S1y[l], S2y[l], dAy[l], Ybar[l + 1], dYbar[l + 1], Ab, dAb);
      const MatrixXd& P = (l == 0) ? Zy : Vy[l - 1];
      const MatrixXd& dP = (l == 0) ? dZy : dVy[l - 1];
      grads.Wyy[l] += Ab * P.transpose() + dAb * dP.transpose();
      grads.by[l] += Ab.rowwise().sum();
      Ybar[l] += eWyy[l].transpose() * Ab;
      dYbar[l] += eWyy[l].transpose() * dAb;
    }
    {
      MatrixXd Ab, dAb;
      rev_act(S1t[l], S2t[l], dAt[l], Tbar[l + 1], dTbar[l + 1], Ab, dAb);
      const MatrixXd& P = (l == 0) ? Zt : Vt[l - 1];
      const MatrixXd& dP = (l == 0) ? dZt : dVt[l - 1];
      grads.Wtt[l] += Ab * P.transpose() + dAb * dP.transpose();
      grads.bt[l] += Ab.rowwise().sum();
      Tbar[l] += eWtt[l].transpose() * Ab;
      dTbar[l] += eWtt[l].transpose() * dAb;
    }
  }
  Zbar.resize(n, N);
  Zbar.topRows(nx) = X0bar;
  Zbar.middleRows(nx, ny) = Ybar[0];
  Zbar.bottomRows(nt) = Tbar[0];
  return T;
}

int ISNN::num_params() const {
  int n = 0;
  visit_params(*this, [&](const auto& m) { n += int(m.size()); });
  return n;
}

void ISNN::get_flat(VectorXd& p) const {
  p.resize(num_params());
  int off = 0;
  visit_params(*this, [&](const auto& m) {
    p.segment(off, m.size()) = Eigen::Map<const VectorXd>(m.data(), m.size());
    off += int(m.size());
  });
}

void ISNN::set_flat(const VectorXd& p) {
  int off = 0;
  visit_params(*this, [&](auto& m) {
    Eigen::Map<VectorXd>(m.data(), m.size()) = p.segment(off, m.size());
    off += int(m.size());
  });
  if (off != p.size()) throw std::invalid_argument("flat parameter size mismatch");
  sync();
}

ISNNGrads::ISNNGrads(const ISNN& net) {
  auto zlike_m = [](const std::vector<MatrixXd>& src) {
    std::vector<MatrixXd> out(src.size());
    for (size_t i = 0; i < src.size(); ++i) out[i] = MatrixXd::Zero(src[i].rows(), src[i].cols());
    return out;
  };
  auto zlike_v = [](const std::vector<VectorXd>& src) {
    std::vector<VectorXd> out(src.size());
    for (size_t i = 0; i < src.size(); ++i) out[i] = VectorXd::Zero(src[i].size());
    return out;
  };
  Wyy = zlike_m(net.Wyy);
  Wtt = zlike_m(net.Wtt);
  Wxx = zlike_m(net.Wxx);
  Wxx0 = zlike_m(net.Wxx0);
  Wxy = zlike_m(net.Wxy);
  Wxt = zlike_m(net.Wxt);
  by = zlike_v(net.by);
  bt = zlike_v(net.bt);
  bx = zlike_v(net.bx);
}

void ISNNGrads::set_zero() {
  for (auto* grp : {&Wyy, &Wtt, &Wxx, &Wxx0, &Wxy, &Wxt})
    for (auto& m : *grp) m.setZero();
  for (auto* grp : {&by, &bt, &bx})
    for (auto& v : *grp) v.setZero();
}

void ISNNGrads::flatten(const ISNN& net, VectorXd& g) const {
  g.resize(net.num_params());
  int off = 0;
  visit_params_grads(net, *this, [&](const auto& raw, const auto& geff, bool constrained) {
    auto seg = g.segment(off, raw.size());
    seg = Eigen::Map<const VectorXd>(geff.data(), geff.size());
    if (constrained) {
      // d eff / d raw = sigmoid(raw)
      const double* r = raw.data();
      for (int i = 0; i < seg.size(); ++i) seg(i) *= sigmoid(r[i]);
    }
    off += int(raw.size());
  });
}

VectorXd stress_zero_coefficients(const InvariantSet& at_identity, const VectorXd& g0) {
  MatrixXd M(6, at_identity.count);
  for (int i = 0; i < at_identity.count; ++i) M.col(i) = at_identity.B[i].v;
  VectorXd rhs = M * g0;
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(M);
  return cod.solve(rhs);
}

void save_checkpoint(const SurrogateCheckpoint& c, const std::string& path) {
  nlohmann::json j;
  j["format"] = "hypertopo-isnn-1";
  j["class"] = c.class_tag;
  j["shape"] = {{"depth", c.net.shape.depth},   {"width_x", c.net.shape.width_x},
                {"width_y", c.net.shape.width_y}, {"width_t", c.net.shape.width_t},
                {"nx", c.net.shape.nx},          {"ny", c.net.shape.ny},
                {"nt", c.net.shape.nt}};
  VectorXd p;
  c.net.get_flat(p);
  j["params"] = std::vector<double>(p.data(), p.data() + p.size());
  j["rotation"] = {{"axis", {c.rot_axis(0), c.rot_axis(1), c.rot_axis(2)}},
                   {"angle", c.rot_angle}};
  j["training"] = nlohmann::json::parse(c.training_meta_json);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f << j.dump(1) << "\n";
}

SurrogateCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  if (j.at("format").get<std::string>() != "hypertopo-isnn-1")
    throw std::runtime_error("unknown checkpoint format in " + path);
  SurrogateCheckpoint c;
  c.class_tag = j.at("class").get<std::string>();
  ISNNShape s;
  auto& js = j.at("shape");
  s.depth = js.at("depth");
  s.width_x = js.at("width_x");
  s.width_y = js.at("width_y");
  s.width_t = js.at("width_t");
  s.nx = js.at("nx");
  s.ny = js.at("ny");
  s.nt = js.at("nt");
  c.net = ISNN(s);
  std::vector<double> pv = j.at("params").get<std::vector<double>>();
  c.net.set_flat(Eigen::Map<const VectorXd>(pv.data(), long(pv.size())));
  auto& jr = j.at("rotation");
  c.rot_axis = Vec3(jr.at("axis")[0], jr.at("axis")[1], jr.at("axis")[2]);
  c.rot_angle = jr.at("angle");
  c.training_meta_json = j.at("training").dump();
  return c;
}

}  // namespace ht
