#include "ht/topopt.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ht {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void write_history_csv(const std::string& path, const std::vector<IterRecord>& hist) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("history csv: cannot open " + path);
  std::fprintf(fp, "iteration,compliance,g1,g2,p,beta_rho,max_change\n");
  for (const IterRecord& r : hist)
    std::fprintf(fp, "%d,%.17g,%.17g,%.17g,%g,%g,%.17g\n", r.iter, r.compliance, r.g1,
                 r.g2, r.p, r.beta_rho, r.change);
  std::fclose(fp);
}

TopOpt::TopOpt(FEModel& model_, const OptConfig& cfg_)
    : model(model_), cfg(cfg_), stack(model_.mesh, cfg_.rmin) {
  const MaterialClass mc = model.material->material_class();
  use_phi = phi_input_index(mc) >= 0;
  use_theta = model.material->oriented();
  stack.use_phi = use_phi;
  stack.use_theta = use_theta;
  stack.phi_max = cfg.phi_max;
  stack.interp.p = cfg.p_init;
  stack.beta_rho = cfg.beta_init;
  V0 = model.mesh.n_elems() * model.mesh.elem_volume();
  m_phi = cfg.rho_incl * cfg.eta * V0 * cfg.phi_max / cfg.c_target;
}

void TopOpt::apply_fields(const DesignFields& f) {
  const int n = model.mesh.n_elems();
  for (int e = 0; e < n; ++e) {
    ElementMaterialState& st = model.estate[e];
    st.chi = f.chi(e);
    st.gamma = f.gamma(e);
    st.wlin = f.wlin(e);
    st.micro.phi = use_phi ? f.phi_f(e) : 0.0;
    st.micro.theta = use_theta ? f.theta_f(e) : 0.0;
  }
}

bool TopOpt::evaluate(const VectorXd& rho, const VectorXd& phi, const VectorXd& theta,
                      VectorXd& u, VectorXd& pressure, bool want_grads, Eval& out,
                      DesignFields& f) {
  stack.forward(rho, phi, theta, f);
  apply_fields(f);

  NewtonResult nr = model.solve(u, pressure, cfg.newton);
  if (!nr.converged) {
    // the warm start may sit outside the new design's basin; restart cold
    // with load stepping before rejecting the design
    u.setZero();
    pressure.setZero();
    NewtonOptions cold = cfg.newton;
    cold.initial_step = 0.5;
    nr = model.solve(u, pressure, cold);
  }
  out.newton = nr;
  out.fe_ok = nr.converged;
  if (!nr.converged) return false;
  out.compliance = model.f_ext.dot(u);
  if (!want_grads) return true;

  VectorXd lam_u, lam_p;
  if (!model.adjoint_solve(u, pressure, VectorXd(-model.f_ext), lam_u, lam_p)) {
    out.fe_ok = false;
    return false;
  }

  const int n = model.mesh.n_elems();
  VectorXd t_rho(n);
  VectorXd t_phi = use_phi ? VectorXd(VectorXd::Zero(n)) : VectorXd();
  VectorXd t_theta = use_theta ? VectorXd(VectorXd::Zero(n)) : VectorXd();
  std::vector<uint8_t> ok(n, 1);
#ifdef HT_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (model.parallel)
#endif
  for (int e = 0; e < n; ++e) {
    DesignChain chain{f.dchi(e), f.dgamma(e), f.dwlin(e)};
    ElemDesignDerivs dd;
    if (!model.element_design_derivs(e, u, model.mixed ? pressure(e) : 0.0, chain, dd)) {
      ok[e] = 0;
      continue;
    }
    const auto nodes = model.mesh.elem_nodes(e);
    Eigen::Matrix<double, 24, 1> ll;
    for (int a = 0; a < 8; ++a) ll.segment<3>(3 * a) = lam_u.segment<3>(3 * nodes[a]);
    t_rho(e) = ll.dot(dd.dRu_drho) + (model.mixed ? lam_p(e) * dd.dRp_drho : 0.0);
    if (use_phi) t_phi(e) = ll.dot(dd.dRu_dphi);
    if (use_theta) t_theta(e) = ll.dot(dd.dRu_dtheta);
  }
  for (int e = 0; e < n; ++e)
    if (!ok[e]) {
      out.fe_ok = false;
      return false;
    }
  stack.reverse(f, t_rho, t_phi, t_theta, out.dC_drho, out.dC_dphi, out.dC_dtheta);
  return true;
}

double TopOpt::volume_g(const DesignFields& f) const {
  return model.mesh.elem_volume() * f.rho_b.sum() - cfg.eta * V0;
}

VectorXd TopOpt::volume_grad(const DesignFields& f) const {
  const int n = model.mesh.n_elems();
  VectorXd drb = VectorXd::Constant(n, model.mesh.elem_volume());
  VectorXd grho, gphi, gtheta;
  stack.reverse(f, drb, use_phi ? VectorXd(VectorXd::Zero(n)) : VectorXd(),
                use_theta ? VectorXd(VectorXd::Zero(n)) : VectorXd(), grho, gphi,
                gtheta);
  return grho;
}

double TopOpt::mass_g(const VectorXd& phi_raw, const DesignFields& f) const {
  const double ve = model.mesh.elem_volume();
  double m = 0;
  for (int e = 0; e < phi_raw.size(); ++e)
    m += cfg.phi_max * phi_raw(e) * cfg.rho_incl * f.rho_b(e) * ve;
  return m - m_phi;
}

void TopOpt::mass_grad(const VectorXd& phi_raw, const DesignFields& f,
                       VectorXd& grad_rho, VectorXd& grad_phi) const {
  const int n = model.mesh.n_elems();
  const double ve = model.mesh.elem_volume();
  // direct dependence on the raw inclusion variable plus the projected-density
  // path back through projection and filtering
  grad_phi.resize(n);
  VectorXd drb(n);
  for (int e = 0; e < n; ++e) {
    grad_phi(e) = cfg.phi_max * cfg.rho_incl * f.rho_b(e) * ve;
    drb(e) = cfg.phi_max * phi_raw(e) * cfg.rho_incl * ve;
  }
  VectorXd grad_phi_chain, gtheta;
  stack.reverse(f, drb, use_phi ? VectorXd(VectorXd::Zero(n)) : VectorXd(),
                use_theta ? VectorXd(VectorXd::Zero(n)) : VectorXd(), grad_rho,
                grad_phi_chain, gtheta);
}

OptResult TopOpt::run() {
  const int n = model.mesh.n_elems();
  const int nv = n * (1 + (use_phi ? 1 : 0) + (use_theta ? 1 : 0));
  const int m = use_phi ? 2 : 1;
  const int o_phi = n;
  const int o_theta = use_phi ? 2 * n : n;

  OptResult res;
  res.rho = VectorXd::Constant(n, cfg.eta);
  res.theta = use_theta ? VectorXd(VectorXd::Constant(n, cfg.theta_init)) : VectorXd();
  res.u = VectorXd::Zero(model.n_dof());
  res.pressure = VectorXd::Zero(model.mixed ? n : 0);

  // start the inclusion field exactly on the mass bound
  if (use_phi) {
    DesignFields f0;
    stack.forward(res.rho, VectorXd::Zero(n), res.theta, f0);
    const double denom =
        cfg.phi_max * cfg.rho_incl * model.mesh.elem_volume() * f0.rho_b.sum();
    res.phi = VectorXd::Constant(n, std::min(1.0, denom > 0 ? m_phi / denom : 0.0));
  }

  VectorXd x(nv), xmin = VectorXd::Zero(nv), xmax = VectorXd::Ones(nv);
  x.head(n) = res.rho;
  if (use_phi) x.segment(o_phi, n) = res.phi;
  if (use_theta) x.segment(o_theta, n) = res.theta;
  auto unpack = [&](const VectorXd& xv) {
    res.rho = xv.head(n);
    if (use_phi) res.phi = xv.segment(o_phi, n);
    if (use_theta) res.theta = xv.segment(o_theta, n);
  };

  MMA mma(nv, m, cfg.mma);
  double p = cfg.p_init, beta = cfg.beta_init;
  int global_iter = 0;
  bool final_phase_done = false;

  Eval ev;
  DesignFields f;
  unpack(x);
  double change = 0;
  int retries = 0;

  while (true) {
    stack.interp.p = p;
    stack.beta_rho = beta;
    // phase constants (re)set, so the stored compliance must be refreshed
    if (!evaluate(res.rho, res.phi, res.theta, res.u, res.pressure, true, ev, f))
      throw std::runtime_error("optimize: FE solve failed at the phase start");
    mma.reset();
    ++res.continuation_steps;
    std::vector<double> phase_c;
    bool plateau = false;

    for (int it = 0; it < cfg.max_step_iters; ++it) {
      const double g1 = volume_g(f);
      double g2 = 0;
      VectorXd g2_rho, g2_phi;
      if (use_phi) {
        g2 = mass_g(res.phi, f);
        mass_grad(res.phi, f, g2_rho, g2_phi);
      }
      ++global_iter;
      res.history.push_back(
          {global_iter, ev.compliance, g1, g2, p, beta, change, retries});
      phase_c.push_back(ev.compliance);

      const int k = static_cast<int>(phase_c.size());
      if (k >= cfg.min_step_iters && k > cfg.plateau_window) {
        const double cref = phase_c[k - 1 - cfg.plateau_window];
        if (std::abs(phase_c[k - 1] - cref) <=
            cfg.plateau_rel * std::max(std::abs(cref), 1e-300)) {
          plateau = true;
          break;
        }
      }

      // objective and normalized constraints for the update
      VectorXd df0 = VectorXd::Zero(nv);
      df0.head(n) = ev.dC_drho;
      if (use_phi) df0.segment(o_phi, n) = ev.dC_dphi;
      if (use_theta) df0.segment(o_theta, n) = ev.dC_dtheta;

      VectorXd fval(m);
      MatrixXd dfdx = MatrixXd::Zero(m, nv);
      const double s1 = 1.0 / (cfg.eta * V0);
      fval(0) = g1 * s1;
      dfdx.row(0).head(n) = (volume_grad(f) * s1).transpose();
      if (use_phi) {
        const double s2 = 1.0 / m_phi;
        fval(1) = g2 * s2;
        dfdx.row(1).head(n) = (g2_rho * s2).transpose();
        dfdx.row(1).segment(o_phi, n) = (g2_phi * s2).transpose();
      }

      const VectorXd x_prev = x;
      VectorXd x_cand = mma.update(x, xmin, xmax, df0, fval, dfdx);
      retries = 0;
      Eval ev_cand;
      bool accepted = false;
      while (retries <= cfg.max_bisect) {
        unpack(x_cand);
        if (evaluate(res.rho, res.phi, res.theta, res.u, res.pressure, true, ev_cand,
                     f)) {
          accepted = true;
          break;
        }
        // rejected design step: retry at half the realized move
        x_cand = 0.5 * (x_cand + x_prev);
        ++retries;
      }
      if (!accepted)
        throw std::runtime_error("optimize: FE solve failed at every bisected step");
      change = (x_cand - x_prev).lpNorm<Eigen::Infinity>();
      x = x_cand;
      ev = ev_cand;
    }

    const bool capped = p >= cfg.p_max && beta >= cfg.beta_max;
    if (capped) {
      final_phase_done = plateau;
      break;
    }
    p = std::min(p + cfg.dp, cfg.p_max);
    beta = std::min(2.0 * beta, cfg.beta_max);
  }

  unpack(x);
  res.fields = f;
  res.compliance = ev.compliance;
  res.g1 = volume_g(f);
  res.g2 = use_phi ? mass_g(res.phi, f) : 0.0;
  res.plateau_reached = final_phase_done;
  if (!cfg.history_csv.empty()) write_history_csv(cfg.history_csv, res.history);
  return res;
}

}  // namespace ht
