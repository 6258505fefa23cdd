#include "ht/tensor.hpp"

namespace ht {

DetInvCof det_inv_cof(const Tensor2& a) {
  DetInvCof r;
  // cofactor from 2x2 minors; cheaper and better conditioned than det*inv^T
  Tensor2& c = r.cof;
  c(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  c(0, 1) = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
  c(0, 2) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
  c(1, 0) = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
  c(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
  c(1, 2) = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
  c(2, 0) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
  c(2, 1) = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
  c(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  r.det = a(0, 0) * c(0, 0) + a(0, 1) * c(0, 1) + a(0, 2) * c(0, 2);
  if (!(r.det > 0.0)) throw std::domain_error("det_inv_cof: non-positive determinant");
  r.inv = c.transpose() / r.det;
  return r;
}

SymTensor2 right_cauchy_green(const Tensor2& F) {
  return SymTensor2::from_matrix(F.transpose() * F);
}

}  // namespace ht
