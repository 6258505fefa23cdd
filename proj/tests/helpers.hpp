#pragma once

// shared test utilities: random kinematic states, brute-force tensor oracles,
// finite-difference probes

#include <random>

#include "ht/tensor.hpp"

namespace htt {

using namespace ht;

inline std::mt19937_64 rng(unsigned seed) { return std::mt19937_64(seed); }

inline Tensor2 random_matrix(std::mt19937_64& g, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor2 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = u(g);
  return m;
}

// deformation gradient near identity with strain level s
inline Tensor2 random_F(std::mt19937_64& g, double s = 0.2) {
  return Tensor2::Identity() + random_matrix(g, s);
}

inline SymTensor2 random_C(std::mt19937_64& g, double s = 0.2) {
  return right_cauchy_green(random_F(g, s));
}

inline SymTensor2 random_sym_dir(std::mt19937_64& g) {
  const Tensor2 m = random_matrix(g, 1.0);
  return SymTensor2::from_matrix(0.5 * (m + m.transpose()));
}

// brute-force minor-symmetric fourth-order tensor
struct Full4 {
  double a[3][3][3][3] = {};

  Tensor2 contract(const Tensor2& b) const {
    Tensor2 r = Tensor2::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) r(i, j) += a[i][j][k][l] * b(k, l);
    return r;
  }
};

inline double rel_err(double got, double want, double floor_ = 1e-14) {
  return std::abs(got - want) / std::max(std::abs(want), floor_);
}

inline double rel_err(const SymTensor2& got, const SymTensor2& want, double floor_ = 1e-14) {
  return (got.v - want.v).norm() / std::max(want.v.norm(), floor_);
}

}  // namespace htt
