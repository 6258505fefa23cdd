#pragma once

// Input-specific neural network for invariant-based strain energies.
//
// Three coupled chains with depth H (H = number of x-updates, H >= 2):
//   y_{h+1} = sp( y_h Wyy_h^T + by_h )                               h = 0..H-2
//   t_{h+1} = sg( t_h Wtt_h^T + bt_h )                               h = 0..H-2
//   x_1     = sp( x_0 Wxx_0^T + y_0 Wxy_0^T + t_0 Wxt_0^T + bx_0 )
//   x_{h+1} = sp( x_h Wxx_h^T + x_0 Wxx0_h^T + y_h Wxy_h^T + t_h Wxt_h^T + bx_h )
//                                                                    h = 1..H-1
// output x_H (scalar). sp = softplus, sg = sigmoid.
//
// The energy is convex in x_0, convex and nondecreasing in y_0, and
// nondecreasing in t_0 provided Wyy, Wxy, Wtt, Wxt (all layers) and Wxx
// (layers h >= 1) are non-negative. Those weights are stored as raw values
// and mapped through softplus, so the constraint holds for any raw value.
//
// Derivatives with respect to the inputs (gradient and full Hessian) are
// propagated in closed form alongside the values; training gradients use a
// tangent-over-reverse sweep of the same recursions. No numerical
// differentiation anywhere.

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "ht/invariants.hpp"

namespace ht {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double softplus(double x);
double softplus_inv(double y);
double sigmoid(double x);

struct ISNNShape {
  int depth = 3;  // H
  int width_x = 16, width_y = 16, width_t = 16;
  int nx = 1, ny = 2, nt = 0;  // input splits: (x0, y0, t0)

  int n_inputs() const { return nx + ny + nt; }
};

struct EnergyEval {
  double psi = 0;
  VectorXd grad;  // d psi / d z
  MatrixXd hess;  // d2 psi / dz dz
};

// gradient accumulator mirroring the parameter layout
struct ISNNGrads;

class ISNN {
 public:
  ISNNShape shape;

  // raw parameters (constrained ones are softplus-mapped on sync)
  std::vector<MatrixXd> Wyy, Wtt;               // H-1
  std::vector<VectorXd> by, bt;                 // H-1
  std::vector<MatrixXd> Wxx, Wxx0, Wxy, Wxt;    // H   (Wxx0[0] unused)
  std::vector<VectorXd> bx;                     // H

  ISNN() = default;
  explicit ISNN(const ISNNShape& s);

  void init_random(std::mt19937_64& g);
  void sync();  // refresh effective weights after editing raw parameters

  // single-point evaluation with analytic first and second input derivatives
  EnergyEval evaluate(const VectorXd& z) const;
  double value(const VectorXd& z) const;

  // ---- batched training support (columns of Z are samples) ----

  // gradients w.r.t. the first k inputs for every sample: G is k x N
  void batch_gradients(const MatrixXd& Z, int k, MatrixXd& G) const;

  // With per-sample directions Alpha (k x N) over the first k inputs, form
  // T = sum_s Alpha_s . grad_s. Returns T; accumulates dT/d(raw params) into
  // grads and the value-path input adjoints (= Hess_s * Alpha_s) into Zbar
  // (n x N).
  double batch_tangent_reverse(const MatrixXd& Z, const MatrixXd& Alpha, ISNNGrads& grads,
                               MatrixXd& Zbar) const;

  // ---- flat parameter view (optimizer interface) ----
  int num_params() const;
  void get_flat(VectorXd& p) const;
  void set_flat(const VectorXd& p);  // calls sync()

  const std::vector<MatrixXd>& effWyy() const { return eWyy; }

 private:
  // effective (non-negative where constrained) weights
  std::vector<MatrixXd> eWyy, eWtt, eWxx, eWxy, eWxt;

  template <class Fn>
  void for_each_param(Fn&& fn) const;  // stable enumeration used by flat view

  friend struct ISNNGrads;
};

struct ISNNGrads {
  // same shapes as the raw parameters; accumulated w.r.t. EFFECTIVE weights,
  // chained to raw on flatten
  std::vector<MatrixXd> Wyy, Wtt, Wxx, Wxx0, Wxy, Wxt;
  std::vector<VectorXd> by, bt, bx;

  explicit ISNNGrads(const ISNN& net);
  void set_zero();
  // chain through the softplus reparameterization and append to flat vector
  void flatten(const ISNN& net, VectorXd& g) const;
};

// minimal-norm coefficients c with  sum_i c_i B_i(I) = sum_i g0_i B_i(I),
// used to cancel the identity-point stress of a raw network energy
VectorXd stress_zero_coefficients(const InvariantSet& at_identity, const VectorXd& g0);

// ---- checkpoint (JSON) ----
struct SurrogateCheckpoint {
  std::string class_tag;  // compressible_iso | compressible_ti | compressible_cubic |
                          // incompressible_iso
  ISNN net;
  Vec3 rot_axis = Vec3(0, 0, 1);
  double rot_angle = 0;
  std::string training_meta_json = "{}";  // loss history, dataset hash, epochs, seed
};

void save_checkpoint(const SurrogateCheckpoint& c, const std::string& path);
SurrogateCheckpoint load_checkpoint(const std::string& path);

}  // namespace ht
