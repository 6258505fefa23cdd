#pragma once

// Small-tensor kit for 3D finite-strain kernels.
//
// Voigt bookkeeping, fixed once for the whole project:
//   * component order 11, 22, 33, 12, 13, 23
//   * SymTensor2 stores plain (stress-like) components, no shear doubling
//   * SymTensor4 stores plain components T_(ij)(kl); its action on a
//     symmetric second-order tensor carries the shear weights (1,1,1,2,2,2)
//     on the column side, i.e. apply(T, b) = m * (W * b_v).
// With that convention the algorithmic tangent matrix can be used verbatim
// as the D-matrix against an engineering-strain B operator: dS_v = m * dE_eng.

#include <Eigen/Dense>
#include <stdexcept>

namespace ht {

using Tensor2 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Voigt index -> tensor index pair
inline constexpr int kVoigtI[6] = {0, 1, 2, 0, 0, 1};
inline constexpr int kVoigtJ[6] = {0, 1, 2, 1, 2, 2};

// shear weights for contractions
inline const Vec6 kVoigtWeight = (Vec6() << 1, 1, 1, 2, 2, 2).finished();

struct SymTensor2 {
  Vec6 v = Vec6::Zero();

  SymTensor2() = default;
  explicit SymTensor2(const Vec6& c) : v(c) {}

  double operator()(int k) const { return v[k]; }
  double& operator()(int k) { return v[k]; }

  static SymTensor2 from_matrix(const Tensor2& a) {
    SymTensor2 s;
    for (int k = 0; k < 6; ++k)
      s.v[k] = 0.5 * (a(kVoigtI[k], kVoigtJ[k]) + a(kVoigtJ[k], kVoigtI[k]));
    return s;
  }

  Tensor2 to_matrix() const {
    Tensor2 a;
    for (int k = 0; k < 6; ++k) {
      a(kVoigtI[k], kVoigtJ[k]) = v[k];
      a(kVoigtJ[k], kVoigtI[k]) = v[k];
    }
    return a;
  }

  static SymTensor2 identity() {
    SymTensor2 s;
    s.v << 1, 1, 1, 0, 0, 0;
    return s;
  }

  double trace() const { return v[0] + v[1] + v[2]; }

  SymTensor2 operator+(const SymTensor2& o) const { return SymTensor2(v + o.v); }
  SymTensor2 operator-(const SymTensor2& o) const { return SymTensor2(v - o.v); }
  SymTensor2 operator*(double a) const { return SymTensor2(v * a); }
};

inline SymTensor2 operator*(double a, const SymTensor2& s) { return s * a; }

// full double contraction A : B of two symmetric tensors
inline double ddot(const SymTensor2& a, const SymTensor2& b) {
  return a.v.dot(kVoigtWeight.cwiseProduct(b.v));
}

struct SymTensor4 {
  Mat6 m = Mat6::Zero();

  SymTensor4() = default;
  explicit SymTensor4(const Mat6& a) : m(a) {}

  // T : b for symmetric b
  SymTensor2 apply(const SymTensor2& b) const {
    return SymTensor2(m * kVoigtWeight.cwiseProduct(b.v));
  }

  static SymTensor4 zero() { return SymTensor4(); }

  // identity map on symmetric tensors: apply(I4, b) = b
  static SymTensor4 sym_identity() {
    SymTensor4 t;
    t.m = kVoigtWeight.cwiseInverse().asDiagonal();
    return t;
  }

  // a (x) b, apply gives a * (b : dC)
  static SymTensor4 outer(const SymTensor2& a, const SymTensor2& b) {
    return SymTensor4(a.v * b.v.transpose());
  }

  // apply gives A dC B + B dC A for symmetric A, B
  static SymTensor4 sym_outer2(const Tensor2& A, const Tensor2& B) {
    SymTensor4 t;
    for (int p = 0; p < 6; ++p) {
      const int i = kVoigtI[p], j = kVoigtJ[p];
      for (int q = 0; q < 6; ++q) {
        const int k = kVoigtI[q], l = kVoigtJ[q];
        t.m(p, q) = 0.5 * (A(i, k) * B(j, l) + A(i, l) * B(j, k) +
                           B(i, k) * A(j, l) + B(i, l) * A(j, k));
      }
    }
    return t;
  }

  // apply gives A dC A
  static SymTensor4 sym_outer(const Tensor2& A) {
    SymTensor4 t = sym_outer2(A, A);
    t.m *= 0.5;
    return t;
  }

  SymTensor4 operator+(const SymTensor4& o) const { return SymTensor4(m + o.m); }
  SymTensor4 operator-(const SymTensor4& o) const { return SymTensor4(m - o.m); }
  SymTensor4 operator*(double a) const { return SymTensor4(m * a); }
  SymTensor4& operator+=(const SymTensor4& o) {
    m += o.m;
    return *this;
  }
};

inline SymTensor4 operator*(double a, const SymTensor4& t) { return t * a; }

struct DetInvCof {
  double det;
  Tensor2 inv;
  Tensor2 cof;  // cof(A) = det(A) * A^-T
};

// throws std::domain_error when det <= 0 (inverse/cofactor path undefined
// for the kinematic states we accept)
DetInvCof det_inv_cof(const Tensor2& a);

SymTensor2 right_cauchy_green(const Tensor2& F);

}  // namespace ht
