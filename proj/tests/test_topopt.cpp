#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>

#include "doctest.h"
#include "helpers.hpp"
#include "ht/filters.hpp"
#include "ht/mesh.hpp"
#include "ht/topopt.hpp"

using namespace ht;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// wrap a periodic difference into (-0.5, 0.5]
double circ_diff(double a, double b) {
  double d = a - b;
  return d - std::round(d);
}

// cantilever clamped at x = 0 with total z-load P spread over the x = lx face
void make_cantilever(FEModel& fm, double P) {
  const BoxMesh& m = fm.mesh;
  for (int n : m.nodes_in_box(Vec3(0, 0, 0), Vec3(0, m.ly, m.lz))) fm.fix_node(n);
  const auto tip = m.nodes_in_box(Vec3(m.lx, 0, 0), Vec3(m.lx, m.ly, m.lz));
  for (int n : tip) fm.f_ext[3 * n + 2] = P / tip.size();
  fm.finalize();
}

double compliance_at(TopOpt& opt, const VectorXd& rho, const VectorXd& phi,
                     const VectorXd& theta, const VectorXd& u0, const VectorXd& p0) {
  VectorXd u = u0, pr = p0;
  TopOpt::Eval ev;
  DesignFields f;
  REQUIRE(opt.evaluate(rho, phi, theta, u, pr, false, ev, f));
  return ev.compliance;
}

// min relative error of the adjoint directional derivative against central FD
// over a sweep of step sizes
double adjoint_fd_err(TopOpt& opt, const VectorXd& rho, const VectorXd& phi,
                      const VectorXd& theta, const VectorXd& dr, const VectorXd& dp,
                      const VectorXd& dt, const VectorXd& u0, const VectorXd& p0,
                      double analytic) {
  double best = 1e300;
  for (double h : {1e-5, 1e-4, 1e-3}) {
    auto shift = [&](double s, const VectorXd& v, const VectorXd& d) {
      return v.size() ? VectorXd(v + s * h * d) : VectorXd();
    };
    const double cp =
        compliance_at(opt, shift(1, rho, dr), shift(1, phi, dp), shift(1, theta, dt),
                      u0, p0);
    const double cm =
        compliance_at(opt, shift(-1, rho, dr), shift(-1, phi, dp), shift(-1, theta, dt),
                      u0, p0);
    const double fd = (cp - cm) / (2 * h);
    best = std::min(best, std::abs(fd - analytic) / std::max(std::abs(fd), 1e-300));
  }
  return best;
}

}  // namespace

TEST_CASE("cone filter weights on a 3x1x1 strip match hand computation") {
  BoxMesh mesh(3, 1, 1, 3.0, 1.0, 1.0);
  // centroids at x = 0.5, 1.5, 2.5; rmin = 1.2 reaches only direct neighbors
  FilterOperator F = build_filter(mesh, 1.2);
  CHECK(F.Hs(0) == doctest::Approx(1.4).epsilon(1e-14));
  CHECK(F.Hs(1) == doctest::Approx(1.6).epsilon(1e-14));
  CHECK(F.Hs(2) == doctest::Approx(1.4).epsilon(1e-14));

  VectorXd impulse = VectorXd::Zero(3);
  impulse(1) = 1.0;
  const VectorXd f = F.apply(impulse);
  CHECK(f(0) == doctest::Approx(0.2 / 1.4).epsilon(1e-14));
  CHECK(f(1) == doctest::Approx(1.2 / 1.6).epsilon(1e-14));
  CHECK(f(2) == doctest::Approx(0.2 / 1.4).epsilon(1e-14));
}

TEST_CASE("filter radius below element spacing gives the identity") {
  BoxMesh mesh(4, 3, 2, 4.0, 3.0, 2.0);
  FilterOperator F = build_filter(mesh, 0.9);
  auto g = htt::rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorXd x(mesh.n_elems());
  for (int e = 0; e < mesh.n_elems(); ++e) x(e) = u(g);
  const VectorXd f = F.apply(x);
  // diagonal weight cancels up to one rounding in the multiply-divide pair
  CHECK((f - x).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("filter is row-stochastic, linear, order-preserving, self-adjoint-consistent") {
  BoxMesh mesh(5, 4, 3, 5.0, 4.0, 3.0);
  FilterOperator F = build_filter(mesh, 2.3);
  const int n = mesh.n_elems();

  // uniform field is reproduced exactly
  const VectorXd ones = VectorXd::Ones(n);
  CHECK((F.apply(ones) - ones).lpNorm<Eigen::Infinity>() < 1e-14);

  auto g = htt::rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorXd x(n), y(n);
  for (int e = 0; e < n; ++e) {
    x(e) = u(g);
    y(e) = x(e) + u(g);  // y >= x componentwise
  }
  // order preserving
  const VectorXd fx = F.apply(x), fy = F.apply(y);
  for (int e = 0; e < n; ++e) CHECK(fy(e) >= fx(e) - 1e-15);
  // linear
  const VectorXd lin = F.apply(0.3 * x + 1.7 * y);
  CHECK((lin - 0.3 * fx - 1.7 * fy).lpNorm<Eigen::Infinity>() < 1e-13);
  // applyT is the adjoint of apply
  const double lhs = fx.dot(y);
  const double rhs = x.dot(F.applyT(y));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
}

TEST_CASE("density projection endpoints, midpoint symmetry, monotonicity, derivative") {
  for (double beta : {1.0, 2.0, 8.0}) {
    CAPTURE(beta);
    double d;
    CHECK(project_density(0.0, beta, 0.5, d) == 0.0);
    CHECK(project_density(1.0, beta, 0.5, d) == 1.0);
    CHECK(project_density(0.5, beta, 0.5, d) == 0.5);

    double prev = -1.0;
    for (int i = 0; i <= 40; ++i) {
      const double rt = i / 40.0;
      const double rb = project_density(rt, beta, 0.5, d);
      CHECK(rb > prev);
      prev = rb;
      // central finite difference on the projection itself
      const double h = 1e-6;
      double dtmp;
      const double fd = (project_density(rt + h, beta, 0.5, dtmp) -
                         project_density(rt - h, beta, 0.5, dtmp)) /
                        (2 * h);
      CHECK(d == doctest::Approx(fd).epsilon(1e-8));
    }
  }
}

TEST_CASE("interpolation endpoints and derivatives against finite differences") {
  Interpolation interp;  // defaults: eps 1e-3, beta_psi 500, eta_psi 0.01
  for (double p : {1.0, 2.0, 3.0, 4.0}) {
    CAPTURE(p);
    interp.p = p;
    InterpPoint a = interp.eval(1.0);
    CHECK(a.chi == 1.0);
    CHECK(a.gamma == 1.0);
    CHECK(a.wlin == 0.0);
    InterpPoint b = interp.eval(0.0);
    CHECK(b.chi == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(b.gamma < 1e-4);
    CHECK(b.wlin == doctest::Approx(1e-3).epsilon(1e-3));

    // interior points, including near the gamma transition chi ~ eta_psi
    const double pts[] = {0.05, 0.12, 0.2, std::pow(0.009, 1.0 / p), 0.35, 0.6, 0.85};
    for (double rb : pts) {
      CAPTURE(rb);
      const double h = 1e-6;
      InterpPoint c = interp.eval(rb);
      InterpPoint cp = interp.eval(rb + h), cm = interp.eval(rb - h);
      CHECK(c.dchi == doctest::Approx((cp.chi - cm.chi) / (2 * h)).epsilon(2e-6));
      CHECK(c.dgamma ==
            doctest::Approx((cp.gamma - cm.gamma) / (2 * h)).scale(1.0).epsilon(2e-5));
      CHECK(c.dwlin ==
            doctest::Approx((cp.wlin - cm.wlin) / (2 * h)).scale(1.0).epsilon(2e-5));
    }
  }
}

TEST_CASE("orientation filter reproduces a uniform angle field") {
  BoxMesh mesh(4, 2, 2, 4.0, 2.0, 2.0);
  FilterOperator F = build_filter(mesh, 1.8);
  const int n = mesh.n_elems();
  for (double t : {0.0, 0.13, 0.5, 0.77, 0.98}) {
    CAPTURE(t);
    const VectorXd theta = VectorXd::Constant(n, t);
    const VectorXd w = VectorXd::Constant(n, 0.6);
    OrientationResult R = orientation_filter(F, theta, w);
    CHECK(R.n_degenerate == 0);
    for (int e = 0; e < n; ++e) {
      CHECK(std::abs(circ_diff(R.theta_f(e), t)) < 1e-12);
      CHECK(R.theta_f(e) >= 0.0);
      CHECK(R.theta_f(e) < 1.0);
    }
  }
}

TEST_CASE("orientation filter treats theta and theta plus one identically") {
  BoxMesh mesh(4, 3, 1, 4.0, 3.0, 1.0);
  FilterOperator F = build_filter(mesh, 2.1);
  const int n = mesh.n_elems();
  auto g = htt::rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorXd theta(n), w(n);
  for (int e = 0; e < n; ++e) {
    theta(e) = 0.3 + 0.2 * u(g);
    w(e) = 0.3 + 0.7 * u(g);
  }
  OrientationResult R0 = orientation_filter(F, theta, w);
  VectorXd shifted = theta;
  shifted(2) += 1.0;  // same physical orientation
  shifted(5) -= 1.0;
  OrientationResult R1 = orientation_filter(F, shifted, w);
  for (int e = 0; e < n; ++e)
    CHECK(std::abs(circ_diff(R0.theta_f(e), R1.theta_f(e))) < 1e-13);

  // neighbors at theta = 0 and theta = 1 are the same circle point
  VectorXd tz = VectorXd::Zero(n);
  for (int e = 0; e < n; e += 2) tz(e) = 1.0;
  OrientationResult R2 = orientation_filter(F, tz, w);
  for (int e = 0; e < n; ++e) CHECK(std::abs(circ_diff(R2.theta_f(e), 0.0)) < 1e-12);
}

TEST_CASE("orientation filter falls back to the raw angle on antipodal cancellation") {
  BoxMesh mesh(2, 1, 1, 2.0, 1.0, 1.0);
  FilterOperator F = build_filter(mesh, 2.5);
  // H row 0: [2.5, 1.5]. weights chosen so the two doubled vectors cancel
  VectorXd theta(2), w(2);
  theta << 0.0, 0.5;  // doubled angles 0 and pi
  w << 1.5, 2.5;      // 2.5*1.5 = 1.5*2.5 exactly
  OrientationResult R = orientation_filter(F, theta, w);
  CHECK(R.n_degenerate == 1);
  CHECK(R.degenerate[0] == 1);
  CHECK(R.theta_f(0) == 0.0);  // pre-filter value kept
  CHECK(R.degenerate[1] == 0);
  CHECK(std::abs(circ_diff(R.theta_f(1), 0.5)) < 1e-12);

  // all-zero weights degenerate everywhere
  OrientationResult Rz = orientation_filter(F, theta, VectorXd::Zero(2));
  CHECK(Rz.n_degenerate == 2);
  CHECK(Rz.theta_f(0) == theta(0));
  CHECK(Rz.theta_f(1) == theta(1));
}

TEST_CASE("orientation filter adjoint action matches directional finite differences") {
  BoxMesh mesh(4, 3, 2, 4.0, 3.0, 2.0);
  FilterOperator F = build_filter(mesh, 2.2);
  const int n = mesh.n_elems();
  auto g = htt::rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorXd theta(n), w(n), tbar(n), dth(n), dw(n);
  for (int e = 0; e < n; ++e) {
    // smooth-ish field keeps every resultant far from zero
    theta(e) = 0.2 + 0.2 * (mesh.elem_center(e).x() / mesh.lx) + 0.05 * u(g);
    w(e) = 0.2 + 0.8 * u(g);
    tbar(e) = u(g) - 0.5;
    dth(e) = u(g) - 0.5;
    dw(e) = u(g) - 0.5;
  }
  OrientationResult R = orientation_filter(F, theta, w);
  REQUIRE(R.n_degenerate == 0);
  VectorXd gth, gw;
  orientation_vjp(F, w, R, tbar, gth, gw);
  const double lhs = gth.dot(dth) + gw.dot(dw);

  const double h = 1e-6;
  OrientationResult Rp = orientation_filter(F, theta + h * dth, w + h * dw);
  OrientationResult Rm = orientation_filter(F, theta - h * dth, w - h * dw);
  double rhs = 0;
  for (int e = 0; e < n; ++e)
    rhs += tbar(e) * circ_diff(Rp.theta_f(e), Rm.theta_f(e)) / (2 * h);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
}

TEST_CASE("design stage chain gradients match finite differences end to end") {
  BoxMesh mesh(4, 3, 2, 2.0, 1.5, 1.0);
  FilterStack stack(mesh, 0.8);
  stack.use_phi = true;
  stack.use_theta = true;
  stack.phi_max = 0.5;
  stack.beta_rho = 2.0;
  stack.interp.p = 3.0;
  const int n = mesh.n_elems();

  auto g = htt::rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorXd rho(n), phi(n), theta(n);
  for (int e = 0; e < n; ++e) {
    rho(e) = 0.3 + 0.6 * u(g);
    phi(e) = 0.3 + 0.7 * u(g);
    theta(e) = 0.2 + 0.2 * (mesh.elem_center(e).x() / mesh.lx) + 0.05 * u(g);
  }
  // random linear functional over every derived stage
  VectorXd a(n), b(n), c(n), d1(n), d2(n), d3(n);
  for (int e = 0; e < n; ++e) {
    a(e) = u(g) - 0.5;
    b(e) = u(g) - 0.5;
    c(e) = u(g) - 0.5;
    d1(e) = u(g) - 0.5;
    d2(e) = u(g) - 0.5;
    d3(e) = u(g) - 0.5;
  }
  auto loss = [&](const VectorXd& r, const VectorXd& ph, const VectorXd& th,
                  DesignFields& f) {
    stack.forward(r, ph, th, f);
    double L = a.dot(f.rho_b) + b.dot(f.phi_f);
    for (int e = 0; e < n; ++e)
      L += c(e) * f.theta_f(e) + d1(e) * f.chi(e) + d2(e) * f.gamma(e) +
           d3(e) * f.wlin(e);
    return L;
  };

  DesignFields f;
  loss(rho, phi, theta, f);
  REQUIRE(f.n_degenerate == 0);
  // cotangents w.r.t. the element stages: rho_b picks up the interpolation chain
  VectorXd Lrb(n), Lpf = b, Ltf = c;
  for (int e = 0; e < n; ++e)
    Lrb(e) = a(e) + d1(e) * f.dchi(e) + d2(e) * f.dgamma(e) + d3(e) * f.dwlin(e);
  VectorXd grho, gphi, gtheta;
  stack.reverse(f, Lrb, Lpf, Ltf, grho, gphi, gtheta);

  auto gdir = htt::rng(42);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int rep = 0; rep < 3; ++rep) {
    VectorXd dr(n), dp(n), dt(n);
    for (int e = 0; e < n; ++e) {
      dr(e) = ud(gdir);
      dp(e) = ud(gdir);
      dt(e) = ud(gdir);
    }
    const double h = 1e-6;
    DesignFields fp, fm;
    // theta_f is periodic: compare losses built from circular-consistent values.
    // fields stay far from the wrap here (theta in [0.2, 0.45]), so plain
    // differences are valid
    const double Lp = loss(rho + h * dr, phi + h * dp, theta + h * dt, fp);
    const double Lm = loss(rho - h * dr, phi - h * dp, theta - h * dt, fm);
    const double fd = (Lp - Lm) / (2 * h);
    const double an = grho.dot(dr) + gphi.dot(dp) + gtheta.dot(dt);
    CHECK(an == doctest::Approx(fd).epsilon(2e-6));
  }
}

TEST_CASE("density-only stack leaves microstructure fields empty") {
  BoxMesh mesh(3, 2, 2, 3.0, 2.0, 2.0);
  FilterStack stack(mesh, 1.4);
  const int n = mesh.n_elems();
  VectorXd rho = VectorXd::Constant(n, 0.5);
  DesignFields f;
  stack.forward(rho, VectorXd(), VectorXd(), f);
  CHECK(f.rho_b.size() == n);
  CHECK(f.phi_f.size() == 0);
  CHECK(f.theta_f.size() == 0);
  CHECK(f.chi.size() == n);
  // projected value at the midpoint stays 0.5, chi follows the power law
  CHECK(f.rho_b(0) == doctest::Approx(0.5).epsilon(1e-14));

  VectorXd grho, gphi, gtheta;
  VectorXd Lrb = VectorXd::Ones(n);
  stack.reverse(f, Lrb, VectorXd(), VectorXd(), grho, gphi, gtheta);
  CHECK(grho.size() == n);
  CHECK(gphi.size() == 0);
  CHECK(gtheta.size() == 0);
}

TEST_CASE("compliance adjoint gradient matches finite differences, isotropic") {
  BoxMesh mesh(3, 2, 2, 1.5, 1.0, 1.0);
  NeoHookean mat;
  FEModel fm(mesh, &mat);
  make_cantilever(fm, 0.05);
  OptConfig cfg;
  cfg.rmin = 0.8;
  cfg.newton.tol = 1e-11;
  TopOpt opt(fm, cfg);
  CHECK(!opt.use_phi);
  CHECK(!opt.use_theta);
  opt.stack.interp.p = 3.0;
  opt.stack.beta_rho = 2.0;

  const int n = mesh.n_elems();
  auto g = htt::rng(7);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  VectorXd rho(n), dr(n);
  for (int e = 0; e < n; ++e) {
    rho(e) = 0.4 + 0.5 * u01(g);
    dr(e) = u01(g) - 0.5;
  }
  VectorXd u = VectorXd::Zero(fm.n_dof()), pr;
  TopOpt::Eval ev;
  DesignFields f;
  REQUIRE(opt.evaluate(rho, VectorXd(), VectorXd(), u, pr, true, ev, f));
  CHECK(ev.compliance > 0);

  const double an = ev.dC_drho.dot(dr);
  const double err =
      adjoint_fd_err(opt, rho, VectorXd(), VectorXd(), dr, VectorXd(), VectorXd(), u,
                     pr, an);
  CHECK(err < 1e-4);
}

TEST_CASE("compliance adjoint gradients match finite differences, fiber material") {
  BoxMesh mesh(3, 2, 2, 1.5, 1.0, 1.0);
  FiberReinforcedNH mat;
  FEModel fm(mesh, &mat);
  make_cantilever(fm, 0.05);
  OptConfig cfg;
  cfg.rmin = 0.8;
  cfg.newton.tol = 1e-11;
  TopOpt opt(fm, cfg);
  CHECK(opt.use_phi);
  CHECK(opt.use_theta);
  opt.stack.interp.p = 3.0;
  opt.stack.beta_rho = 2.0;

  const int n = mesh.n_elems();
  auto g = htt::rng(17);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  VectorXd rho(n), phi(n), theta(n), dr(n), dp(n), dt(n);
  for (int e = 0; e < n; ++e) {
    rho(e) = 0.4 + 0.5 * u01(g);
    phi(e) = 0.3 + 0.6 * u01(g);
    theta(e) = 0.22 + 0.06 * u01(g);
    dr(e) = u01(g) - 0.5;
    dp(e) = u01(g) - 0.5;
    dt(e) = u01(g) - 0.5;
  }
  VectorXd u = VectorXd::Zero(fm.n_dof()), pr;
  TopOpt::Eval ev;
  DesignFields f;
  REQUIRE(opt.evaluate(rho, phi, theta, u, pr, true, ev, f));
  REQUIRE(f.n_degenerate == 0);

  // joint direction exercises the coupled weight path rho_b * phi_f -> theta_f
  const double an = ev.dC_drho.dot(dr) + ev.dC_dphi.dot(dp) + ev.dC_dtheta.dot(dt);
  const double err = adjoint_fd_err(opt, rho, phi, theta, dr, dp, dt, u, pr, an);
  CHECK(err < 1e-4);

  // per-field checks so a cancellation cannot hide a broken kernel
  const VectorXd z = VectorXd::Zero(n);
  CHECK(adjoint_fd_err(opt, rho, phi, theta, dr, z, z, u, pr, ev.dC_drho.dot(dr)) <
        1e-4);
  CHECK(adjoint_fd_err(opt, rho, phi, theta, z, dp, z, u, pr, ev.dC_dphi.dot(dp)) <
        1e-4);
  CHECK(adjoint_fd_err(opt, rho, phi, theta, z, z, dt, u, pr, ev.dC_dtheta.dot(dt)) <
        1e-4);
}

TEST_CASE("compliance adjoint gradient matches finite differences, mixed formulation") {
  BoxMesh mesh(3, 2, 2, 1.5, 1.0, 1.0);
  MooneyRivlinIncompressible mat;
  FEModel fm(mesh, &mat);
  fm.mixed = true;
  fm.kappa0 = mat.kappa0;
  make_cantilever(fm, 1.0);
  OptConfig cfg;
  cfg.rmin = 0.8;
  cfg.newton.tol = 1e-11;
  TopOpt opt(fm, cfg);
  CHECK(!opt.use_phi);
  opt.stack.interp.p = 3.0;
  opt.stack.beta_rho = 2.0;

  const int n = mesh.n_elems();
  auto g = htt::rng(27);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  VectorXd rho(n), dr(n);
  for (int e = 0; e < n; ++e) {
    rho(e) = 0.45 + 0.45 * u01(g);
    dr(e) = u01(g) - 0.5;
  }
  VectorXd u = VectorXd::Zero(fm.n_dof()), pr = VectorXd::Zero(n);
  TopOpt::Eval ev;
  DesignFields f;
  REQUIRE(opt.evaluate(rho, VectorXd(), VectorXd(), u, pr, true, ev, f));
  CHECK(ev.compliance > 0);

  const double an = ev.dC_drho.dot(dr);
  const double err =
      adjoint_fd_err(opt, rho, VectorXd(), VectorXd(), dr, VectorXd(), VectorXd(), u,
                     pr, an);
  CHECK(err < 1e-4);
}

TEST_CASE("zero external load gives zero compliance and zero gradients") {
  BoxMesh mesh(3, 2, 1, 1.5, 1.0, 0.5);
  NeoHookean mat;
  FEModel fm(mesh, &mat);
  for (int n : mesh.nodes_in_box(Vec3(0, 0, 0), Vec3(0, mesh.ly, mesh.lz)))
    fm.fix_node(n);
  fm.finalize();
  OptConfig cfg;
  cfg.rmin = 0.8;
  TopOpt opt(fm, cfg);

  const int n = mesh.n_elems();
  VectorXd rho = VectorXd::Constant(n, 0.6);
  VectorXd u = VectorXd::Zero(fm.n_dof()), pr;
  TopOpt::Eval ev;
  DesignFields f;
  REQUIRE(opt.evaluate(rho, VectorXd(), VectorXd(), u, pr, true, ev, f));
  CHECK(ev.compliance == 0.0);
  CHECK(ev.dC_drho.norm() == 0.0);
}

TEST_CASE("volume and inclusion mass constraints with chain-rule gradients") {
  BoxMesh mesh(4, 3, 2, 2.0, 1.5, 1.0);
  FiberReinforcedNH mat;
  FEModel fm(mesh, &mat);
  make_cantilever(fm, 0.01);
  OptConfig cfg;
  cfg.rmin = 0.9;
  cfg.eta = 0.5;
  cfg.rho_incl = 2.1;
  cfg.phi_max = 0.5;
  cfg.c_target = 4.0;
  TopOpt opt(fm, cfg);
  opt.stack.beta_rho = 4.0;
  opt.stack.interp.p = 2.0;
  const int n = mesh.n_elems();

  // target inclusion mass arithmetic
  CHECK(opt.m_phi == doctest::Approx(0.13125 * opt.V0).epsilon(1e-14));

  // uniform rho at the projection midpoint meets the volume bound exactly
  VectorXd theta = VectorXd::Constant(n, 0.3);
  {
    DesignFields f;
    opt.stack.forward(VectorXd::Constant(n, 0.5), VectorXd::Constant(n, 0.4), theta, f);
    CHECK(std::abs(opt.volume_g(f)) < 1e-12 * opt.V0);
  }

  auto g = htt::rng(37);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  VectorXd rho(n), phi(n), dr(n), dphi(n);
  for (int e = 0; e < n; ++e) {
    rho(e) = 0.2 + 0.7 * u01(g);
    phi(e) = 0.2 + 0.7 * u01(g);
    dr(e) = u01(g) - 0.5;
    dphi(e) = u01(g) - 0.5;
  }
  DesignFields f;
  opt.stack.forward(rho, phi, theta, f);

  const double h = 1e-6;
  auto g1_at = [&](const VectorXd& r) {
    DesignFields ff;
    opt.stack.forward(r, phi, theta, ff);
    return opt.volume_g(ff);
  };
  const double fd1 = (g1_at(rho + h * dr) - g1_at(rho - h * dr)) / (2 * h);
  CHECK(opt.volume_grad(f).dot(dr) == doctest::Approx(fd1).epsilon(1e-6));

  auto g2_at = [&](const VectorXd& r, const VectorXd& ph) {
    DesignFields ff;
    opt.stack.forward(r, ph, theta, ff);
    return opt.mass_g(ph, ff);
  };
  VectorXd m_rho, m_phi_grad;
  opt.mass_grad(phi, f, m_rho, m_phi_grad);
  const double fd2 =
      (g2_at(rho + h * dr, phi + h * dphi) - g2_at(rho - h * dr, phi - h * dphi)) /
      (2 * h);
  CHECK(m_rho.dot(dr) + m_phi_grad.dot(dphi) == doctest::Approx(fd2).epsilon(1e-6));
}

TEST_CASE("optimization loop advances continuation and keeps records consistent") {
  BoxMesh mesh(5, 2, 1, 2.5, 1.0, 0.5);
  NeoHookean mat;
  FEModel fm(mesh, &mat);
  make_cantilever(fm, 0.02);
  OptConfig cfg;
  cfg.eta = 0.5;
  cfg.rmin = 0.6;
  cfg.p_init = 1.0;
  cfg.dp = 1.5;
  cfg.p_max = 4.0;
  cfg.beta_init = 1.0;
  cfg.beta_max = 8.0;
  cfg.min_step_iters = 4;
  cfg.max_step_iters = 6;
  cfg.plateau_window = 2;
  cfg.history_csv = "topopt_hist_test.csv";
  TopOpt opt(fm, cfg);
  OptResult res = opt.run();

  REQUIRE(!res.history.empty());
  // p: 1 -> 2.5 -> 4 (capped), beta: 1 -> 2 -> 4 -> 8, advancing together
  CHECK(res.continuation_steps == 4);
  double prev_p = 0, prev_b = 0;
  int jumps = 0;
  for (size_t i = 0; i < res.history.size(); ++i) {
    const IterRecord& r = res.history[i];
    CHECK(r.iter == (int)i + 1);
    CHECK(r.compliance > 0);
    CHECK(r.p >= prev_p);
    CHECK(r.beta_rho >= prev_b);
    if (i > 0 && (r.p > prev_p || r.beta_rho > prev_b)) {
      ++jumps;
      // simultaneous advance: whichever parameter is not capped moves too
      if (prev_p < cfg.p_max) CHECK(r.p > prev_p);
      if (prev_b < cfg.beta_max) CHECK(r.beta_rho > prev_b);
    }
    CHECK(r.change <= cfg.mma.move + 1e-12);
    prev_p = r.p;
    prev_b = r.beta_rho;
  }
  CHECK(jumps == 3);
  CHECK(res.history.back().p == 4.0);
  CHECK(res.history.back().beta_rho == 8.0);

  for (int e = 0; e < res.rho.size(); ++e) {
    CHECK(res.rho(e) >= 0.0);
    CHECK(res.rho(e) <= 1.0);
  }
  CHECK(res.g1 <= 1e-3 * cfg.eta * opt.V0);
  CHECK(res.compliance > 0);

  std::FILE* fp = std::fopen("topopt_hist_test.csv", "r");
  REQUIRE(fp);
  int lines = 0;
  char buf[512];
  while (std::fgets(buf, sizeof buf, fp)) ++lines;
  std::fclose(fp);
  CHECK(lines == (int)res.history.size() + 1);
  std::remove("topopt_hist_test.csv");
}
