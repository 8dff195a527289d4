#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace eegcid {

// Dense row-major tensor of doubles, up to 4 dimensions. All model math in
// this project runs in 64-bit so that replays are bit-identical and
// finite-difference checks have headroom.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
  Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return s.empty() ? 0 : n;
  }

  size_t numel() const { return v.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& at(int i) { return v[static_cast<size_t>(i)]; }
  double at(int i) const { return v[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return v[static_cast<size_t>(i) * dim(1) + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * dim(1) + j]; }
  double& at(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double at(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double& at(int i, int j, int k, int l) {
    return v[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }
  double at(int i, int j, int k, int l) const {
    return v[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  // Reinterprets the buffer with a new shape of equal element count.
  Tensor reshaped(std::vector<int> s) const {
    assert(count(s) == numel());
    Tensor t;
    t.shape = std::move(s);
    t.v = v;
    return t;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

// C = A(m x k) * B(k x n), or C += when accumulate. Parallelised over rows of
// C so every output element has a fixed summation order regardless of thread
// count (bit-deterministic).
void gemm_nn(const double* A, const double* B, double* C, int m, int k, int n, bool accumulate);

// C = A^T(m x k)^T... i.e. C(k x n) (+)= A^T * B where A is (m x k), B is (m x n).
void gemm_tn(const double* A, const double* B, double* C, int m, int k, int n, bool accumulate);

// C(m x k) (+)= A(m x n) * B^T where B is (k x n).
void gemm_nt(const double* A, const double* B, double* C, int m, int n, int k, bool accumulate);

// Elementwise exp over a buffer. Branch-free range reduction plus a Taylor
// tail so the loop vectorizes; relative error stays under ~1e-14, and the
// softmax layers that burn through tens of millions of calls per step use
// this instead of libm.
void vexp_inplace(double* x, size_t n);

}  // namespace eegcid
