#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "helpers.hpp"
#include "ht/mma.hpp"

using namespace ht;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("unconstrained quadratic converges to its minimizer") {
  const int n = 6;
  VectorXd target(n);
  target << 0.3, 0.8, 0.45, 0.6, 0.2, 0.75;
  VectorXd x = VectorXd::Constant(n, 0.5);
  const VectorXd xmin = VectorXd::Zero(n), xmax = VectorXd::Ones(n);
  MMA mma(n, 1);
  for (int it = 0; it < 80; ++it) {
    const VectorXd df0 = 2.0 * (x - target);
    // inactive constraint: sum(x) <= 100
    VectorXd fval(1);
    fval << x.sum() - 100.0;
    const MatrixXd dfdx = MatrixXd::Ones(1, n);
    x = mma.update(x, xmin, xmax, df0, fval, dfdx);
  }
  CHECK((x - target).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("single variable quadratic reaches the minimum within 1e-4 in 30 iterations") {
  // targets spread over the box, including near-bound ones, from several starts
  const double cases[][2] = {{0.05, 0.2}, {0.05, 1.9}, {0.4, 1.0},  {0.7, 0.2},
                             {0.7, 1.9},  {1.0, 1.9},  {1.3, 0.2},  {1.8, 1.0}};
  for (auto& tc : cases) {
    const double a = tc[0];
    CAPTURE(a);
    CAPTURE(tc[1]);
    MMA mma(1, 1);
    VectorXd x(1), xmin(1), xmax(1), df(1), fval(1);
    const MatrixXd dfdx = MatrixXd::Zero(1, 1);
    x << tc[1];
    xmin << 0.0;
    xmax << 2.0;
    for (int it = 0; it < 30; ++it) {
      df(0) = 2.0 * (x(0) - a);
      fval(0) = -1.0;  // inactive
      x = mma.update(x, xmin, xmax, df, fval, dfdx);
    }
    CHECK(std::abs(x(0) - a) < 1e-4);
  }
}

TEST_CASE("linear objective with one linear constraint lands on the KKT point") {
  // min -2 x1 - x2  s.t.  x1 + x2 <= 1 on [0,2]^2: x* = (1, 0), multiplier 2
  MMA mma(2, 1);
  VectorXd x(2), xmin(2), xmax(2), df(2), fval(1);
  MatrixXd dfdx(1, 2);
  x << 0.2, 0.4;
  xmin << 0.0, 0.0;
  xmax << 2.0, 2.0;
  df << -2.0, -1.0;
  dfdx << 1.0, 1.0;
  for (int it = 0; it < 60; ++it) {
    fval(0) = x(0) + x(1) - 1.0;
    x = mma.update(x, xmin, xmax, df, fval, dfdx);
  }
  CHECK(x(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(x(1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
  // constraint active, not violated
  CHECK(x(0) + x(1) <= 1.0 + 1e-9);
  CHECK(x(0) + x(1) >= 1.0 - 1e-8);
  // stationarity: the objective gradient is balanced by lambda * dg
  CHECK(mma.lambda()(0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("reciprocal objective with a linear resource constraint") {
  // min sum c_i / x_i  s.t. sum x_i <= V: optimum x_i = sqrt(c_i) * V / sum sqrt(c_j)
  const int n = 4;
  VectorXd c(n);
  c << 1.0, 4.0, 9.0, 16.0;
  const double V = 8.0;
  VectorXd x = VectorXd::Constant(n, 1.0);
  const VectorXd xmin = VectorXd::Constant(n, 0.05), xmax = VectorXd::Constant(n, 8.0);
  MMA mma(n, 1);
  for (int it = 0; it < 120; ++it) {
    VectorXd df0 = -c.cwiseQuotient(x.cwiseProduct(x));
    VectorXd fval(1);
    fval << x.sum() - V;
    const MatrixXd dfdx = MatrixXd::Ones(1, n);
    x = mma.update(x, xmin, xmax, df0, fval, dfdx);
  }
  const VectorXd sq = c.cwiseSqrt();
  const VectorXd xstar = sq * (V / sq.sum());
  CHECK((x - xstar).lpNorm<Eigen::Infinity>() < 1e-3);
  CHECK(x.sum() <= V + 1e-6);
}

TEST_CASE("five-segment cantilever weight minimization") {
  // min 0.0624 sum x_i  s.t.  61/x1^3 + 37/x2^3 + 19/x3^3 + 7/x4^3 + 1/x5^3 <= 1
  // known optimum f* ~ 1.340
  const int n = 5;
  VectorXd coef(n);
  coef << 61, 37, 19, 7, 1;
  VectorXd x = VectorXd::Constant(n, 5.0);
  const VectorXd xmin = VectorXd::Constant(n, 1.0), xmax = VectorXd::Constant(n, 10.0);
  MMA mma(n, 1);
  for (int it = 0; it < 60; ++it) {
    const VectorXd df0 = VectorXd::Constant(n, 0.0624);
    double g = -1.0;
    VectorXd dg(n);
    for (int j = 0; j < n; ++j) {
      g += coef(j) / std::pow(x(j), 3);
      dg(j) = -3.0 * coef(j) / std::pow(x(j), 4);
    }
    VectorXd fval(1);
    fval << g;
    x = mma.update(x, xmin, xmax, df0, fval, dg.transpose());
  }
  const double f = 0.0624 * x.sum();
  double g = -1.0;
  for (int j = 0; j < n; ++j) g += coef(j) / std::pow(x(j), 3);
  CHECK(f == doctest::Approx(1.340).epsilon(2e-3));
  CHECK(g <= 1e-5);
  VectorXd xstar(n);
  xstar << 6.016, 5.309, 4.494, 3.502, 2.153;
  CHECK((x - xstar).lpNorm<Eigen::Infinity>() < 0.02);
}

TEST_CASE("two active constraints") {
  // min x1^2 + x2^2  s.t.  2 - x1 - x2 <= 0,  x2 - 0.7 <= 0: optimum (1.3, 0.7)
  const int n = 2;
  VectorXd x(n);
  x << 0.4, 0.2;
  const VectorXd xmin = VectorXd::Zero(n), xmax = VectorXd::Constant(n, 3.0);
  MMA mma(n, 2);
  for (int it = 0; it < 150; ++it) {
    const VectorXd df0 = 2.0 * x;
    VectorXd fval(2);
    fval << 2.0 - x(0) - x(1), x(1) - 0.7;
    MatrixXd dfdx(2, n);
    dfdx << -1, -1, 0, 1;
    x = mma.update(x, xmin, xmax, df0, fval, dfdx);
  }
  CHECK(x(0) == doctest::Approx(1.3).epsilon(2e-3));
  CHECK(x(1) == doctest::Approx(0.7).epsilon(2e-3));
  CHECK(x(0) + x(1) >= 2.0 - 1e-5);
}

TEST_CASE("iterates respect bounds and move limit") {
  const int n = 3;
  VectorXd x = VectorXd::Constant(n, 0.5);
  const VectorXd xmin = VectorXd::Zero(n), xmax = VectorXd::Ones(n);
  MMAOptions opt;
  opt.move = 0.1;
  MMA mma(n, 1, opt);
  auto g = htt::rng(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int it = 0; it < 25; ++it) {
    VectorXd df0(n);
    for (int j = 0; j < n; ++j) df0(j) = u(g);
    VectorXd fval(1);
    fval << x.sum() - 2.5;
    const VectorXd xprev = x;
    x = mma.update(x, xmin, xmax, df0, fval, MatrixXd::Ones(1, n));
    for (int j = 0; j < n; ++j) {
      CHECK(x(j) >= xmin(j) - 1e-12);
      CHECK(x(j) <= xmax(j) + 1e-12);
      CHECK(std::abs(x(j) - xprev(j)) <= opt.move * 1.0 + 1e-12);
    }
  }
}

TEST_CASE("recovers from an infeasible start") {
  // min sum x  s.t. 1.5 - sum x <= 0 starting far inside the infeasible region
  const int n = 4;
  VectorXd x = VectorXd::Constant(n, 0.05);
  const VectorXd xmin = VectorXd::Constant(n, 0.01), xmax = VectorXd::Ones(n);
  MMA mma(n, 1);
  for (int it = 0; it < 80; ++it) {
    const VectorXd df0 = VectorXd::Ones(n);
    VectorXd fval(1);
    fval << 1.5 - x.sum();
    x = mma.update(x, xmin, xmax, df0, fval, -MatrixXd::Ones(1, n));
  }
  CHECK(x.sum() == doctest::Approx(1.5).epsilon(1e-3));
}
