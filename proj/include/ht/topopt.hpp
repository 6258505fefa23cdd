#pragma once

// Compliance minimization over the filtered design fields with MMA and
// simultaneous continuation of the penalization exponent p and the projection
// sharpness beta_rho. The active design variables follow the material class:
// density always, inclusion fraction when the class has a phi input, and the
// in-plane angle when the model is oriented.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "ht/fem.hpp"
#include "ht/filters.hpp"
#include "ht/mma.hpp"

namespace ht {

struct OptConfig {
  double eta = 0.5;   // volume fraction target
  double rmin = 1.5;  // filter radius, absolute length

  // inclusion mass bound m_phi = rho_incl * eta * V0 * phi_max / c_target,
  // enforced whenever the material carries a phi variable
  double rho_incl = 2.1;
  double phi_max = 0.5;
  double c_target = 4.0;

  // continuation schedule: both parameters advance together each step
  double p_init = 1.0, dp = 1.0, p_max = 4.0;
  double beta_init = 1.0, beta_max = 8.0;
  int min_step_iters = 20, max_step_iters = 50;
  double plateau_rel = 1e-3;  // relative compliance change over the window
  int plateau_window = 5;

  double theta_init = 0.25;  // off-axis start breaks the symmetric saddle

  int max_bisect = 6;  // design-step bisections after an FE failure
  NewtonOptions newton;
  MMAOptions mma;

  std::string history_csv;  // written at the end of run() when non-empty
};

struct IterRecord {
  int iter = 0;
  double compliance = 0, g1 = 0, g2 = 0;
  double p = 0, beta_rho = 0;
  double change = 0;   // max abs raw design change of the accepted update
  int fe_retries = 0;  // bisections needed before the FE solve converged
};

struct OptResult {
  Eigen::VectorXd rho, phi, theta;  // raw design at termination
  DesignFields fields;
  Eigen::VectorXd u, pressure;
  std::vector<IterRecord> history;
  double compliance = 0, g1 = 0, g2 = 0;
  bool plateau_reached = false;  // schedule exhausted and compliance flat
  int continuation_steps = 0;
};

void write_history_csv(const std::string& path, const std::vector<IterRecord>& hist);

class TopOpt {
 public:
  TopOpt(FEModel& model, const OptConfig& cfg);

  FEModel& model;
  OptConfig cfg;
  FilterStack stack;
  bool use_phi = false, use_theta = false;
  double V0 = 0, m_phi = 0;

  struct Eval {
    double compliance = 0;
    bool fe_ok = false;
    NewtonResult newton;
    Eigen::VectorXd dC_drho, dC_dphi, dC_dtheta;
  };

  // push derived fields into the element states
  void apply_fields(const DesignFields& f);

  // forward + FE solve (warm start through u, pressure) + compliance adjoint.
  // Returns false when the FE solve cannot be rescued by a cold restart.
  bool evaluate(const Eigen::VectorXd& rho, const Eigen::VectorXd& phi,
                const Eigen::VectorXd& theta, Eigen::VectorXd& u,
                Eigen::VectorXd& pressure, bool want_grads, Eval& out, DesignFields& f);

  // volume constraint g1 = sum(rho_b V_e) - eta V0 and its raw-rho gradient
  double volume_g(const DesignFields& f) const;
  Eigen::VectorXd volume_grad(const DesignFields& f) const;

  // inclusion mass g2 = sum(phi_max phi_e rho_incl rho_b_e V_e) - m_phi with
  // the raw (unfiltered) inclusion variable
  double mass_g(const Eigen::VectorXd& phi_raw, const DesignFields& f) const;
  void mass_grad(const Eigen::VectorXd& phi_raw, const DesignFields& f,
                 Eigen::VectorXd& grad_rho, Eigen::VectorXd& grad_phi) const;

  OptResult run();
};

}  // namespace ht
