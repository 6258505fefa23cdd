#pragma once

// Structured box mesh of 8-node hexahedra. Node and element indices are
// lexicographic (x fastest, then y, then z); element nodes follow the usual
// trilinear ordering with the bottom face counterclockwise.

#include <array>
#include <functional>
#include <vector>

#include "ht/tensor.hpp"

namespace ht {

struct BoxMesh {
  int nx = 1, ny = 1, nz = 1;
  double lx = 1, ly = 1, lz = 1;

  double hx() const { return lx / nx; }
  double hy() const { return ly / ny; }
  double hz() const { return lz / nz; }
  double elem_volume() const { return hx() * hy() * hz(); }

  int n_elems() const { return nx * ny * nz; }
  int n_nodes() const { return (nx + 1) * (ny + 1) * (nz + 1); }

  int node_id(int i, int j, int k) const { return i + (nx + 1) * (j + (ny + 1) * k); }
  int elem_id(int i, int j, int k) const { return i + nx * (j + ny * k); }

  std::array<int, 3> elem_ijk(int e) const {
    return {e % nx, (e / nx) % ny, e / (nx * ny)};
  }

  std::array<int, 8> elem_nodes(int e) const {
    const auto [i, j, k] = elem_ijk(e);
    return {node_id(i, j, k),         node_id(i + 1, j, k),
            node_id(i + 1, j + 1, k), node_id(i, j + 1, k),
            node_id(i, j, k + 1),     node_id(i + 1, j, k + 1),
            node_id(i + 1, j + 1, k + 1), node_id(i, j + 1, k + 1)};
  }

  Vec3 node_coord(int n) const {
    const int i = n % (nx + 1), j = (n / (nx + 1)) % (ny + 1), k = n / ((nx + 1) * (ny + 1));
    return Vec3(i * hx(), j * hy(), k * hz());
  }

  Vec3 elem_center(int e) const {
    const auto [i, j, k] = elem_ijk(e);
    return Vec3((i + 0.5) * hx(), (j + 0.5) * hy(), (k + 0.5) * hz());
  }

  // nodes whose coordinates lie in the closed box [lo, hi] (with tolerance)
  std::vector<int> nodes_in_box(const Vec3& lo, const Vec3& hi, double tol = 1e-9) const {
    std::vector<int> out;
    for (int n = 0; n < n_nodes(); ++n) {
      const Vec3 x = node_coord(n);
      bool in = true;
      for (int c = 0; c < 3; ++c) in = in && x[c] >= lo[c] - tol && x[c] <= hi[c] + tol;
      if (in) out.push_back(n);
    }
    return out;
  }
};

}  // namespace ht
