#include "ht/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ht {

FSamples lhs_sample_F(int n, double strain_range, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("lhs_sample_F: n must be >= 1");
  if (strain_range < 0) throw std::invalid_argument("lhs_sample_F: negative strain range");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, n - 1);
  const double bin_w = 2.0 * strain_range / n;

  // one bin permutation per displacement-gradient component
  std::array<std::vector<int>, 9> perm;
  for (auto& p : perm) {
    p.resize(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    std::shuffle(p.begin(), p.end(), rng);
  }

  FSamples out;
  out.strain_range = strain_range;
  out.seed = seed;
  out.F.resize(n);
  auto draw = [&](int s) {
    Tensor2& F = out.F[s];
    for (int c = 0; c < 9; ++c) {
      const double v = -strain_range + (perm[c][s] + u01(rng)) * bin_w;
      F(c / 3, c % 3) = (c / 3 == c % 3 ? 1.0 : 0.0) + v;
    }
  };
  for (int s = 0; s < n; ++s) draw(s);

  // A rejected sample swaps one bin assignment with a random partner and both
  // are redrawn (the partner only in the swapped component). Swapping keeps
  // each marginal covering every bin exactly once, which a redraw inside the
  // narrow original bins cannot: the assignment itself can pin det F below
  // the floor. One swap per round keeps the churn on good samples small.
  std::uniform_int_distribution<int> pick_c(0, 8);
  for (int round = 0; round < 1000; ++round) {
    bool any_bad = false;
    for (int s = 0; s < n; ++s)
      if (out.F[s].determinant() <= 0.3) {
        any_bad = true;
        const int c = pick_c(rng), r = pick(rng);
        std::swap(perm[c][s], perm[c][r]);
        const double v = -strain_range + (perm[c][r] + u01(rng)) * bin_w;
        out.F[r](c / 3, c % 3) = (c / 3 == c % 3 ? 1.0 : 0.0) + v;
        draw(s);
        out.redraws++;
      }
    if (!any_bad) return out;
  }
  throw std::runtime_error("lhs_sample_F: cannot satisfy det F > 0.3 with stratified bins");
}

Dataset generate(const ConstitutiveModel& model, const std::string& oracle_name,
                 const std::vector<double>& phi_grid, const FSamples& samples) {
  if (phi_grid.empty()) throw std::invalid_argument("generate: empty phi grid");
  for (double p : phi_grid)
    if (p < 0) throw std::invalid_argument("generate: negative phi");
  if (samples.F.empty()) throw std::invalid_argument("generate: no deformation samples");

  Dataset ds;
  ds.oracle_name = oracle_name;
  ds.strain_range = samples.strain_range;
  ds.n_F = int(samples.F.size());
  ds.seed = samples.seed;
  ds.isochoric = model.incompressible();

  const int nF = ds.n_F, total = int(phi_grid.size()) * nF;
  ds.records.resize(total);
  std::exception_ptr err;

#ifdef HT_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int r = 0; r < total; ++r) {
    try {
      const double phi = phi_grid[r / nF];
      const Tensor2& F = samples.F[r % nF];
      SymTensor2 C = SymTensor2::from_matrix(F.transpose() * F);
      if (ds.isochoric) {
        const double det = (F.transpose() * F).determinant();
        C.v *= std::pow(det, -1.0 / 3.0);
      }
      PointState st;
      model.eval(C, MicroDesign{phi, 0.0}, false, st);
      ds.records[r] = DataRecord{phi, C, st.S};
    } catch (...) {
#ifdef HT_HAVE_OPENMP
#pragma omp critical
#endif
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return ds;
}

namespace {

void put(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  s += buf;
}

}  // namespace

std::string dataset_csv(const Dataset& ds) {
  std::string s = "# oracle=" + ds.oracle_name + " strain_range=";
  put(s, ds.strain_range);
  char buf[96];
  std::snprintf(buf, sizeof buf, " n_F=%d seed=%llu isochoric=%d\n", ds.n_F,
                (unsigned long long)ds.seed, ds.isochoric ? 1 : 0);
  s += buf;
  s += "phi,C11,C22,C33,C12,C13,C23,S11,S22,S33,S12,S13,S23\n";
  for (const auto& r : ds.records) {
    put(s, r.phi);
    for (int k = 0; k < 6; ++k) {
      s += ',';
      put(s, r.C.v[k]);
    }
    for (int k = 0; k < 6; ++k) {
      s += ',';
      put(s, r.S.v[k]);
    }
    s += '\n';
  }
  return s;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << dataset_csv(ds);
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  Dataset ds;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      char name[64] = {0};
      unsigned long long seed = 0;
      int iso = 0;
      if (std::sscanf(line.c_str(), "# oracle=%63s strain_range=%lg n_F=%d seed=%llu isochoric=%d",
                      name, &ds.strain_range, &ds.n_F, &seed, &iso) == 5) {
        ds.oracle_name = name;
        ds.seed = seed;
        ds.isochoric = iso != 0;
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("phi,", 0) != 0)
        throw std::runtime_error("dataset csv: missing header row in " + path);
      header_seen = true;
      continue;
    }
    DataRecord r;
    double v[13];
    if (std::sscanf(line.c_str(),
                    "%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg", &v[0], &v[1],
                    &v[2], &v[3], &v[4], &v[5], &v[6], &v[7], &v[8], &v[9], &v[10], &v[11],
                    &v[12]) != 13)
      throw std::runtime_error("dataset csv: malformed row in " + path);
    r.phi = v[0];
    for (int k = 0; k < 6; ++k) r.C.v[k] = v[1 + k];
    for (int k = 0; k < 6; ++k) r.S.v[k] = v[7 + k];
    ds.records.push_back(r);
  }
  if (!header_seen) throw std::runtime_error("dataset csv: empty file " + path);
  return ds;
}

std::uint64_t dataset_hash(const Dataset& ds) {
  const std::string s = dataset_csv(ds);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

SymTensor2 predict_stress(const ISNN& net, MaterialClass cls, const Tensor2& R, double phi,
                          const SymTensor2& C) {
  const std::vector<int> zmap = invariant_input_map(cls);
  const int cnt = invariant_count(cls), phi_col = phi_input_index(cls);
  const InvariantSet inv = class_invariants(cls, C, R);

  VectorXd z(net.shape.n_inputs());
  for (int i = 0; i < cnt; ++i) z(zmap[i]) = inv.I[i];
  if (phi_col >= 0) z(phi_col) = phi;
  const EnergyEval e = net.evaluate(z);

  const EnergyEval e0 = net.evaluate(identity_inputs(cls, phi));
  VectorXd g0(cnt);
  for (int i = 0; i < cnt; ++i) g0(i) = e0.grad(zmap[i]);
  const InvariantSet id_inv =
      class_invariants(cls, SymTensor2::identity(), Tensor2::Identity());
  const VectorXd c0 = stress_zero_coefficients(id_inv, g0);

  SymTensor2 S;
  for (int i = 0; i < cnt; ++i) S = S + (2.0 * (e.grad(zmap[i]) - c0(i))) * inv.B[i];
  return S;
}

BatchEval eval_loss(const ISNN& net, MaterialClass cls, const Vec3& rot_axis, double rot_angle,
                    bool want_rot_grad, const Dataset& ds, const std::vector<int>& idx,
                    const Vec6& w) {
  const std::vector<int> zmap = invariant_input_map(cls);
  const int cnt = invariant_count(cls), phi_col = phi_input_index(cls);
  const int k = cnt, n_in = net.shape.n_inputs();
  const int M = int(idx.size());
  const bool oriented =
      cls == MaterialClass::CompressibleTI || cls == MaterialClass::CompressibleCubic;
  const bool rot = want_rot_grad && oriented;

  BatchEval out;
  out.grad_net = VectorXd::Zero(net.num_params());
  out.grad_rot.setZero();
  if (M == 0) return out;

  const Tensor2 R = oriented ? rodrigues(rot_axis, rot_angle) : Tensor2::Identity();
  std::array<Tensor2, 4> dR;
  if (rot) dR = rodrigues_derivs(rot_axis, rot_angle);

  const InvariantSet id_inv =
      class_invariants(cls, SymTensor2::identity(), Tensor2::Identity());

  // per-record invariants, bases, rotation derivatives
  MatrixXd Z = MatrixXd::Zero(n_in, M);
  MatrixXd B_all(6 * cnt, M);
  std::array<MatrixXd, 4> dI_rot, dB_rot;
  if (rot)
    for (int p = 0; p < 4; ++p) {
      dI_rot[p] = MatrixXd::Zero(cnt, M);
      dB_rot[p] = MatrixXd::Zero(6 * cnt, M);
    }

  // phi groups share one identity-point normalization column
  std::map<double, int> group_of_phi;
  std::vector<int> grp(M);
  std::vector<double> grp_phi;

  for (int s = 0; s < M; ++s) {
    const DataRecord& rec = ds.records[idx[s]];
    const InvariantSet inv = class_invariants(cls, rec.C, R);
    for (int i = 0; i < cnt; ++i) {
      Z(zmap[i], s) = inv.I[i];
      B_all.block<6, 1>(6 * i, s) = inv.B[i].v;
    }
    if (phi_col >= 0) Z(phi_col, s) = rec.phi;

    auto [it, fresh] = group_of_phi.try_emplace(rec.phi, int(grp_phi.size()));
    if (fresh) grp_phi.push_back(rec.phi);
    grp[s] = it->second;

    if (rot) {
      if (cls == MaterialClass::CompressibleTI) {
        const Vec3 n = R.col(2);
        for (int p = 0; p < 4; ++p) {
          double dI4, dI5;
          SymTensor2 dB4, dB5;
          ti_orientation_derivs(rec.C, n, dR[p].col(2), dI4, dI5, dB4, dB5);
          dI_rot[p](3, s) = dI4;
          dI_rot[p](4, s) = dI5;
          dB_rot[p].block<6, 1>(18, s) = dB4.v;
          dB_rot[p].block<6, 1>(24, s) = dB5.v;
        }
      } else {
        const std::array<Vec3, 3> a = cubic_axes(R);
        for (int p = 0; p < 4; ++p) {
          const std::array<Vec3, 3> da = {dR[p].col(0), dR[p].col(1), dR[p].col(2)};
          double dI[3];
          SymTensor2 dB[3];
          cubic_orientation_derivs(rec.C, a, da, dI, dB);
          for (int q = 0; q < 3; ++q) {
            dI_rot[p](3 + q, s) = dI[q];
            dB_rot[p].block<6, 1>(6 * (3 + q), s) = dB[q].v;
          }
        }
      }
    }
  }

  // identity batch, one column per distinct phi
  const int G = int(grp_phi.size());
  MatrixXd Z0(n_in, G);
  for (int g = 0; g < G; ++g) Z0.col(g) = identity_inputs(cls, grp_phi[g]);
  MatrixXd G0;
  net.batch_gradients(Z0, k, G0);
  MatrixXd c0(cnt, G);
  for (int g = 0; g < G; ++g) {
    VectorXd g0(cnt);
    for (int i = 0; i < cnt; ++i) g0(i) = G0(zmap[i], g);
    c0.col(g) = stress_zero_coefficients(id_inv, g0);
  }

  MatrixXd Gm;
  net.batch_gradients(Z, k, Gm);

  // residuals of the normalized stress prediction
  MatrixXd r(6, M);
  for (int s = 0; s < M; ++s) {
    Vec6 sp = Vec6::Zero();
    for (int i = 0; i < cnt; ++i)
      sp += 2.0 * (Gm(zmap[i], s) - c0(i, grp[s])) * B_all.block<6, 1>(6 * i, s);
    r.col(s) = sp - ds.records[idx[s]].S.v;
  }
  double loss = 0;
  for (int s = 0; s < M; ++s) loss += w.cwiseProduct(r.col(s)).dot(r.col(s));
  loss /= 6.0 * M;
  out.loss = loss;
  if (!std::isfinite(loss)) return out;

  // beta = dL/dg per invariant slot; the same cotangent drives the
  // normalization path with opposite sign, projected by the identity-point
  // min-norm map (symmetric, so it is its own transpose)
  MatrixXd beta(cnt, M), Alpha = MatrixXd::Zero(k, M);
  MatrixXd rw(6, M);
  for (int s = 0; s < M; ++s) {
    rw.col(s) = (4.0 / (6.0 * M)) * w.cwiseProduct(r.col(s));
    for (int i = 0; i < cnt; ++i) {
      beta(i, s) = B_all.block<6, 1>(6 * i, s).dot(rw.col(s));
      Alpha(zmap[i], s) = beta(i, s);
    }
  }

  ISNNGrads grads(net);
  grads.set_zero();
  MatrixXd Zbar, Zbar0;
  net.batch_tangent_reverse(Z, Alpha, grads, Zbar);

  MatrixXd betabar = MatrixXd::Zero(cnt, G);
  for (int s = 0; s < M; ++s) betabar.col(grp[s]) += beta.col(s);
  MatrixXd Alpha0 = MatrixXd::Zero(k, G);
  for (int g = 0; g < G; ++g) {
    const VectorXd a0 = stress_zero_coefficients(id_inv, betabar.col(g));
    for (int i = 0; i < cnt; ++i) Alpha0(zmap[i], g) = -a0(i);
  }
  net.batch_tangent_reverse(Z0, Alpha0, grads, Zbar0);
  grads.flatten(net, out.grad_net);

  if (rot) {
    for (int p = 0; p < 4; ++p) {
      double acc = 0;
      for (int s = 0; s < M; ++s)
        for (int i = 3; i < cnt; ++i)
          acc += Zbar(zmap[i], s) * dI_rot[p](i, s) +
                 (Gm(zmap[i], s) - c0(i, grp[s])) *
                     dB_rot[p].block<6, 1>(6 * i, s).dot(rw.col(s));
      out.grad_rot(p) = acc;
    }
  }
  return out;
}

namespace {

struct AdamState {
  VectorXd m, v;
  explicit AdamState(int n) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}
  void step(VectorXd& x, const VectorXd& g, double lr, int t) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(0.9, t), bc2 = 1.0 - std::pow(0.999, t);
    x -= (lr / bc1) * m.cwiseQuotient(((v / bc2).cwiseSqrt().array() + 1e-8).matrix());
  }
};

}  // namespace

TrainResult adam_train(MaterialClass cls, const Dataset& ds, const ISNNShape& shape,
                       const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("adam_train: epochs must be >= 1");
  if (cfg.lr_weights <= 0 || cfg.lr_rotation <= 0)
    throw std::invalid_argument("adam_train: learning rates must be positive");
  if (!cfg.full_batch) throw std::invalid_argument("adam_train: mini-batching unsupported");
  if (cfg.holdout_fraction < 0 || cfg.holdout_fraction >= 1)
    throw std::invalid_argument("adam_train: holdout fraction outside [0, 1)");
  if (ds.records.empty()) throw std::invalid_argument("adam_train: empty dataset");

  std::mt19937_64 rng(cfg.seed);

  const int n = int(ds.records.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const int n_hold = int(cfg.holdout_fraction * n);
  std::vector<int> hold(order.begin(), order.begin() + n_hold);
  std::vector<int> train(order.begin() + n_hold, order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  if (train.empty()) throw std::invalid_argument("adam_train: holdout leaves no training data");

  ISNN net(shape);
  net.init_random(rng);

  const bool oriented =
      cls == MaterialClass::CompressibleTI || cls == MaterialClass::CompressibleCubic;
  const bool learn_rot = cfg.learn_rotation && oriented;
  Vec3 axis = oriented ? cfg.rot_axis_init : Vec3(0, 0, 1);
  double angle = oriented ? cfg.rot_angle_init : 0.0;
  if (oriented && axis.norm() < 1e-12)
    throw std::invalid_argument("adam_train: rotation axis must be nonzero");

  Vec6 w = Vec6::Ones();
  if (cfg.normalize_components) {
    Vec6 mean = Vec6::Zero(), var = Vec6::Zero();
    for (int i : train) mean += ds.records[i].S.v;
    mean /= double(train.size());
    for (int i : train) var += (ds.records[i].S.v - mean).cwiseAbs2();
    var /= double(train.size());
    const double floor = 1e-8 * var.maxCoeff();
    if (floor > 0)
      for (int a = 0; a < 6; ++a) w[a] = 1.0 / std::max(var[a], floor);
  }

  VectorXd p;
  net.get_flat(p);
  AdamState opt_w(int(p.size())), opt_r(4);
  VectorXd rp(4);
  rp << axis.x(), axis.y(), axis.z(), angle;

  TrainResult res;
  res.loss_history.reserve(cfg.epochs);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const BatchEval be = eval_loss(net, cls, axis, angle, learn_rot, ds, train, w);
    res.loss_history.push_back(be.loss);
    if (!std::isfinite(be.loss)) {
      res.diverged = true;
      break;
    }
    opt_w.step(p, be.grad_net, cfg.lr_weights, epoch);
    net.set_flat(p);
    if (learn_rot) {
      VectorXd gr = be.grad_rot;
      opt_r.step(rp, gr, cfg.lr_rotation, epoch);
      axis = Vec3(rp(0), rp(1), rp(2));
      angle = rp(3);
    }
    if (cfg.log_every > 0 && epoch % cfg.log_every == 0)
      std::fprintf(stderr, "adam_train: epoch %d loss %.6e\n", epoch, be.loss);
  }

  res.checkpoint.class_tag = material_class_tag(cls);
  res.checkpoint.net = net;
  res.checkpoint.rot_axis = axis;
  res.checkpoint.rot_angle = angle;

  res.holdout_rmse_rel = std::numeric_limits<double>::quiet_NaN();
  if (!res.diverged) {
    const std::vector<int>& eval_set = hold.empty() ? train : hold;
    const Tensor2 R = oriented ? rodrigues(axis, angle) : Tensor2::Identity();
    double num = 0, den = 0;
    for (int i : eval_set) {
      const DataRecord& rec = ds.records[i];
      const SymTensor2 sp = predict_stress(net, cls, R, rec.phi, rec.C);
      num += (sp.v - rec.S.v).squaredNorm();
      den += rec.S.v.squaredNorm();
    }
    res.holdout_rmse_rel = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  }

  nlohmann::json meta;
  meta["epochs_run"] = int(res.loss_history.size());
  meta["epochs"] = cfg.epochs;
  meta["seed"] = cfg.seed;
  meta["lr_weights"] = cfg.lr_weights;
  meta["lr_rotation"] = cfg.lr_rotation;
  meta["holdout_fraction"] = cfg.holdout_fraction;
  meta["normalize_components"] = cfg.normalize_components;
  char hb[24];
  std::snprintf(hb, sizeof hb, "%016llx", (unsigned long long)dataset_hash(ds));
  meta["dataset_hash"] = hb;
  meta["diverged"] = res.diverged;
  if (!res.loss_history.empty()) meta["final_loss"] = res.loss_history.back();
  if (std::isfinite(res.holdout_rmse_rel)) meta["holdout_rmse_rel"] = res.holdout_rmse_rel;
  // downsampled trace keeps checkpoints small; the full history stays in the result
  nlohmann::json trace = nlohmann::json::array();
  const int stride = std::max(1, int(res.loss_history.size()) / 100);
  for (int i = 0; i < int(res.loss_history.size()); i += stride)
    trace.push_back(res.loss_history[i]);
  if (!res.loss_history.empty() && (int(res.loss_history.size()) - 1) % stride != 0)
    trace.push_back(res.loss_history.back());
  meta["loss_trace"] = trace;
  res.checkpoint.training_meta_json = meta.dump();
  return res;
}

ParityMetrics parity_report(const StressPredictor& pred, const Dataset& ds,
                            const std::string& csv_path) {
  static const char* comp[6] = {"11", "22", "33", "12", "13", "23"};
  std::string csv = "phi,comp,S_true,S_pred\n";
  double sum_t = 0, ss_res = 0, ss_t2 = 0;
  std::vector<Vec6> preds;
  preds.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    const SymTensor2 sp = pred(rec.phi, rec.C);
    preds.push_back(sp.v);
    for (int a = 0; a < 6; ++a) {
      sum_t += rec.S.v[a];
      const double d = sp.v[a] - rec.S.v[a];
      ss_res += d * d;
      ss_t2 += rec.S.v[a] * rec.S.v[a];
      if (!csv_path.empty()) {
        put(csv, rec.phi);
        csv += ',';
        csv += comp[a];
        csv += ',';
        put(csv, rec.S.v[a]);
        csv += ',';
        put(csv, sp.v[a]);
        csv += '\n';
      }
    }
  }
  ParityMetrics m;
  m.n = 6 * int(ds.records.size());
  if (m.n == 0) return m;
  const double mean_t = sum_t / m.n;
  double ss_tot = 0;
  for (size_t r = 0; r < ds.records.size(); ++r)
    for (int a = 0; a < 6; ++a) {
      const double d = ds.records[r].S.v[a] - mean_t;
      ss_tot += d * d;
    }
  m.rmse = std::sqrt(ss_res / m.n);
  m.rmse_rel = ss_t2 > 0 ? std::sqrt(ss_res / ss_t2) : std::sqrt(ss_res);
  m.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  if (!csv_path.empty()) {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + csv_path);
    f << csv;
  }
  return m;
}

StressPredictor oracle_predictor(const ConstitutiveModel& model) {
  return [&model](double phi, const SymTensor2& C) {
    PointState st;
    model.eval(C, MicroDesign{phi, 0.0}, false, st);
    return st.S;
  };
}

StressPredictor checkpoint_predictor(const SurrogateCheckpoint& ck) {
  auto shared = std::make_shared<SurrogateCheckpoint>(ck);
  const MaterialClass cls = material_class_from_tag(ck.class_tag);
  const bool oriented =
      cls == MaterialClass::CompressibleTI || cls == MaterialClass::CompressibleCubic;
  const Tensor2 R = oriented ? rodrigues(ck.rot_axis, ck.rot_angle) : Tensor2::Identity();
  return [shared, cls, R](double phi, const SymTensor2& C) {
    return predict_stress(shared->net, cls, R, phi, C);
  };
}

}  // namespace ht
