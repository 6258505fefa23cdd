#pragma once

// Offline calibration data from the analytic material models and full-batch
// Adam training of the invariant-network surrogate. For the oriented classes
// the frame of the structural tensors is learned jointly with the weights
// through a Rodrigues axis/angle parametrization.
//
// Training matches second Piola-Kirchhoff stresses: the prediction goes
// through the same normalized energy the surrogate uses at evaluation time
// (raw network minus the identity-point stress correction), so a trained
// checkpoint is stress-free at C = I by construction.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ht/constitutive.hpp"
#include "ht/isnn.hpp"

namespace ht {

struct DataRecord {
  double phi = 0;
  SymTensor2 C;  // right Cauchy-Green stretch (isochoric part for incompressible sets)
  SymTensor2 S;
};

struct Dataset {
  std::vector<DataRecord> records;
  std::string oracle_name;
  double strain_range = 0;
  int n_F = 0;
  std::uint64_t seed = 0;
  bool isochoric = false;
};

struct FSamples {
  std::vector<Tensor2> F;
  double strain_range = 0;
  std::uint64_t seed = 0;
  int redraws = 0;  // rejected draws that were resampled inside their bins
};

// Latin hypercube sample of deformation gradients F = I + H: each of the nine
// displacement-gradient components is stratified over n equal bins of
// [-strain_range, strain_range], one sample per bin. Samples with
// det F <= 0.3 are resampled through bin swaps with random partners, so the
// marginal stratification survives rejection exactly.
FSamples lhs_sample_F(int n, double strain_range, std::uint64_t seed);

// Cross product of the phi grid with the F samples; stresses from the model's
// closed form. Oriented oracles are expected to carry a fixed frame
// (fixed_fiber / fixed_rotation), theta is passed as 0. Incompressible models
// see only the isochoric part of C and the dataset is flagged accordingly.
Dataset generate(const ConstitutiveModel& model, const std::string& oracle_name,
                 const std::vector<double>& phi_grid, const FSamples& samples);

// header + one row per record, every value printed with %.17g
std::string dataset_csv(const Dataset& ds);
void save_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

// FNV-1a over the exact CSV serialization
std::uint64_t dataset_hash(const Dataset& ds);

struct TrainConfig {
  int epochs = 20000;  // desk-scale default; the reference schedule is 1e5
  double lr_weights = 1e-3;
  double lr_rotation = 1e-4;
  bool full_batch = true;  // mini-batching unsupported, kept for config parity
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
  bool learn_rotation = true;  // applies to the oriented classes only
  bool normalize_components = false;  // weight the loss by 1/var per component
  Vec3 rot_axis_init = Vec3(1, 1, 1);
  double rot_angle_init = 0.1;
  int log_every = 0;  // stderr progress period, 0 silences
};

struct TrainResult {
  SurrogateCheckpoint checkpoint;
  std::vector<double> loss_history;  // training MSE per epoch
  double holdout_rmse_rel = 0;
  bool diverged = false;
};

TrainResult adam_train(MaterialClass cls, const Dataset& ds, const ISNNShape& shape,
                       const TrainConfig& cfg);

// Normalized surrogate stress at an explicit frame. This is the function the
// training loss differentiates; the holdout metric and parity reports for
// trained checkpoints evaluate it at the learned rotation.
SymTensor2 predict_stress(const ISNN& net, MaterialClass cls, const Tensor2& R, double phi,
                          const SymTensor2& C);

// One full-batch loss/gradient evaluation at fixed parameters over the
// records picked by idx (the training step primitive, exposed so derivative
// checks can probe it). w holds the per-component loss weights.
struct BatchEval {
  double loss = 0;
  VectorXd grad_net;          // w.r.t. the raw network parameters
  Eigen::Vector4d grad_rot;   // w.r.t. (axis x,y,z, angle); zero when frozen
};
BatchEval eval_loss(const ISNN& net, MaterialClass cls, const Vec3& rot_axis, double rot_angle,
                    bool want_rot_grad, const Dataset& ds, const std::vector<int>& idx,
                    const Vec6& w);

struct ParityMetrics {
  double rmse = 0;
  double rmse_rel = 0;  // sqrt(sum r^2 / sum S_true^2)
  double r2 = 0;
  int n = 0;  // component pairs
};

using StressPredictor = std::function<SymTensor2(double phi, const SymTensor2& C)>;

// pooled predicted-vs-reference metrics over all six components; when
// csv_path is nonempty the pairs are written as phi,comp,S_true,S_pred
ParityMetrics parity_report(const StressPredictor& pred, const Dataset& ds,
                            const std::string& csv_path = "");

// analytic model evaluated at theta = 0 (fixed-frame oracles ignore theta)
StressPredictor oracle_predictor(const ConstitutiveModel& model);
// trained checkpoint evaluated at its learned rotation
StressPredictor checkpoint_predictor(const SurrogateCheckpoint& ck);

}  // namespace ht
