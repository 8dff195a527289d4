#include "eegcid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace eegcid {

namespace {
constexpr long long kParallelCutoff = 1 << 16;

// Training churns through multi-megabyte activation buffers every step;
// keeping them on the heap instead of per-allocation mmap avoids refaulting
// the same pages thousands of times.
#if defined(__GLIBC__)
const int kMallocTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  return 0;
}();
#endif
}

void gemm_nn(const double* A, const double* B, double* C, int m, int k, int n, bool accumulate) {
  const long long work = 1ll * m * k * n;
  const int m4 = m / 4 * 4;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m4; i += 4) {
    // Four output rows share each streamed row of B.
    double* c0 = C + static_cast<size_t>(i) * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    if (!accumulate) {
      std::fill(c0, c0 + n, 0.0);
      std::fill(c1, c1 + n, 0.0);
      std::fill(c2, c2 + n, 0.0);
      std::fill(c3, c3 + n, 0.0);
    }
    const double* a = A + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double a0 = a[p];
      const double a1 = a[k + p];
      const double a2 = a[2 * k + p];
      const double a3 = a[3 * k + p];
      const double* b = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        const double bj = b[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (int i = m4; i < m; ++i) {
    double* c = C + static_cast<size_t>(i) * n;
    if (!accumulate) std::fill(c, c + n, 0.0);
    const double* a = A + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double ap = a[p];
      if (ap == 0.0) continue;
      const double* b = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += ap * b[j];
    }
  }
}

void gemm_tn(const double* A, const double* B, double* C, int m, int k, int n, bool accumulate) {
  const long long work = 1ll * m * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int p = 0; p < k; ++p) {
    double* c = C + static_cast<size_t>(p) * n;
    if (!accumulate) std::fill(c, c + n, 0.0);
    for (int i = 0; i < m; ++i) {
      const double ap = A[static_cast<size_t>(i) * k + p];
      if (ap == 0.0) continue;
      const double* b = B + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += ap * b[j];
    }
  }
}

void gemm_nt(const double* A, const double* B, double* C, int m, int n, int k, bool accumulate) {
  const long long work = 1ll * m * k * n;
  // Transposing B up front turns the inner loop into a contiguous
  // accumulation, which vectorizes without reassociating any sum (the
  // summation order per output element stays fixed).
  std::vector<double> Bt(static_cast<size_t>(n) * k);
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < n; ++j) Bt[static_cast<size_t>(j) * k + p] = B[static_cast<size_t>(p) * n + j];
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * n;
    double* c = C + static_cast<size_t>(i) * k;
    if (!accumulate) std::fill(c, c + k, 0.0);
    for (int j = 0; j < n; ++j) {
      const double aj = a[j];
      if (aj == 0.0) continue;
      const double* b = Bt.data() + static_cast<size_t>(j) * k;
      for (int p = 0; p < k; ++p) c[p] += aj * b[p];
    }
  }
}

void vexp_inplace(double* x, size_t n) {
  constexpr double inv_ln2 = 1.4426950408889634074;
  constexpr double ln2_hi = 6.93147180369123816490e-01;
  constexpr double ln2_lo = 1.90821492927058770002e-10;
  // 1/i! for the degree-11 Taylor tail on |r| <= ln2/2.
  constexpr double c11 = 1.0 / 39916800.0, c10 = 1.0 / 3628800.0, c9 = 1.0 / 362880.0,
                   c8 = 1.0 / 40320.0, c7 = 1.0 / 5040.0, c6 = 1.0 / 720.0, c5 = 1.0 / 120.0,
                   c4 = 1.0 / 24.0, c3 = 1.0 / 6.0, c2 = 0.5;
  for (size_t i = 0; i < n; ++i) {
    // Clamp keeps 2^k a normal double; e^x over/underflows out there anyway.
    const double xi = std::min(708.0, std::max(-708.0, x[i]));
    const double kd = std::nearbyint(xi * inv_ln2);
    const double r = (xi - kd * ln2_hi) - kd * ln2_lo;
    double p = c11;
    p = p * r + c10;
    p = p * r + c9;
    p = p * r + c8;
    p = p * r + c7;
    p = p * r + c6;
    p = p * r + c5;
    p = p * r + c4;
    p = p * r + c3;
    p = p * r + c2;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const auto k = static_cast<int64_t>(kd);
    const uint64_t bits = static_cast<uint64_t>(k + 1023) << 52;
    double scale;
    __builtin_memcpy(&scale, &bits, sizeof(scale));
    x[i] = p * scale;
  }
}

}  // namespace eegcid
