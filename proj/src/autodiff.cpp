#include "eegcid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace eegcid {

namespace {
void check(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}
}  // namespace

int Tape::push(Tensor val, bool needs, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.needs = needs;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor v, bool needs_grad) { return push(std::move(v), needs_grad, nullptr); }

Tensor& Tape::gbuf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.val.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  check(n.grad_alloc, "gradient was not computed for this node");
  return n.grad;
}

void Tape::backward(int out) {
  Node& o = nodes_[static_cast<size_t>(out)];
  check(o.val.numel() == 1, "backward expects a scalar output");
  gbuf(out).v[0] = 1.0;
  for (int i = out; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.needs && n.grad_alloc && n.back) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// elementwise

int Tape::add(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.same_shape(B), "add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor y = A;
  for (size_t i = 0; i < y.numel(); ++i) y.v[i] += B.v[i];
  const bool needs = needs_grad(a) || needs_grad(b);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a, b](Tape& t) {
      const Tensor& g = t.grad(id);
      if (t.needs_grad(a)) {
        Tensor& ga = t.gbuf(a);
        for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i];
      }
      if (t.needs_grad(b)) {
        Tensor& gb = t.gbuf(b);
        for (size_t i = 0; i < g.numel(); ++i) gb.v[i] += g.v[i];
      }
    };
  }
  return id;
}

int Tape::sub(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.same_shape(B), "sub: shape mismatch");
  Tensor y = A;
  for (size_t i = 0; i < y.numel(); ++i) y.v[i] -= B.v[i];
  const bool needs = needs_grad(a) || needs_grad(b);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a, b](Tape& t) {
      const Tensor& g = t.grad(id);
      if (t.needs_grad(a)) {
        Tensor& ga = t.gbuf(a);
        for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i];
      }
      if (t.needs_grad(b)) {
        Tensor& gb = t.gbuf(b);
        for (size_t i = 0; i < g.numel(); ++i) gb.v[i] -= g.v[i];
      }
    };
  }
  return id;
}

int Tape::hadamard(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.same_shape(B), "hadamard: shape mismatch");
  Tensor y = A;
  for (size_t i = 0; i < y.numel(); ++i) y.v[i] *= B.v[i];
  const bool needs = needs_grad(a) || needs_grad(b);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a, b](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& A2 = t.val(a);
      const Tensor& B2 = t.val(b);
      if (t.needs_grad(a)) {
        Tensor& ga = t.gbuf(a);
        for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * B2.v[i];
      }
      if (t.needs_grad(b)) {
        Tensor& gb = t.gbuf(b);
        for (size_t i = 0; i < g.numel(); ++i) gb.v[i] += g.v[i] * A2.v[i];
      }
    };
  }
  return id;
}

int Tape::scale(int a, double s) {
  Tensor y = val(a);
  for (double& v : y.v) v *= s;
  const bool needs = needs_grad(a);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a, s](Tape& t) {
      const Tensor& g = t.grad(id);
      Tensor& ga = t.gbuf(a);
      for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += s * g.v[i];
    };
  }
  return id;
}

int Tape::one_minus(int a) {
  Tensor y = val(a);
  for (double& v : y.v) v = 1.0 - v;
  const bool needs = needs_grad(a);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a](Tape& t) {
      const Tensor& g = t.grad(id);
      Tensor& ga = t.gbuf(a);
      for (size_t i = 0; i < g.numel(); ++i) ga.v[i] -= g.v[i];
    };
  }
  return id;
}

int Tape::add_rowvec(int x, int b) {
  const Tensor& X = val(x);
  const Tensor& B = val(b);
  check(X.ndim() == 2 && B.ndim() == 1 && X.dim(1) == B.dim(0), "add_rowvec: shape mismatch");
  Tensor y = X;
  const int N = X.dim(0), D = X.dim(1);
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d) y.at(n, d) += B.at(d);
  const bool needs = needs_grad(x) || needs_grad(b);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, b, N, D](Tape& t) {
      const Tensor& g = t.grad(id);
      if (t.needs_grad(x)) {
        Tensor& gx = t.gbuf(x);
        for (size_t i = 0; i < g.numel(); ++i) gx.v[i] += g.v[i];
      }
      if (t.needs_grad(b)) {
        Tensor& gb = t.gbuf(b);
        for (int n = 0; n < N; ++n)
          for (int d = 0; d < D; ++d) gb.at(d) += g.at(n, d);
      }
    };
  }
  return id;
}

int Tape::elu(int a) {
  Tensor y = val(a);
  for (double& v : y.v) v = v > 0.0 ? v : std::expm1(v);
  const bool needs = needs_grad(a);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& y2 = t.val(id);
      Tensor& ga = t.gbuf(a);
      for (size_t i = 0; i < g.numel(); ++i)
        ga.v[i] += g.v[i] * (y2.v[i] > 0.0 ? 1.0 : y2.v[i] + 1.0);
    };
  }
  return id;
}

int Tape::sigmoid(int a) {
  Tensor y = val(a);
  for (double& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
  const bool needs = needs_grad(a);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& y2 = t.val(id);
      Tensor& ga = t.gbuf(a);
      for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * y2.v[i] * (1.0 - y2.v[i]);
    };
  }
  return id;
}

int Tape::tanh_op(int a) {
  Tensor y = val(a);
  for (double& v : y.v) v = std::tanh(v);
  const bool needs = needs_grad(a);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& y2 = t.val(id);
      Tensor& ga = t.gbuf(a);
      for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * (1.0 - y2.v[i] * y2.v[i]);
    };
  }
  return id;
}

// ---------------------------------------------------------------------------
// linear algebra

int Tape::matmul(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.ndim() == 2 && B.ndim() == 2 && A.dim(1) == B.dim(0),
        "matmul: shape mismatch " + A.shape_str() + " x " + B.shape_str());
  const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor y({m, n});
  gemm_nn(A.data(), B.data(), y.data(), m, k, n, false);
  const bool needs = needs_grad(a) || needs_grad(b);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a, b, m, k, n](Tape& t) {
      const Tensor& g = t.grad(id);
      if (t.needs_grad(a))
        gemm_nt(g.data(), t.val(b).data(), t.gbuf(a).data(), m, n, k, true);
      if (t.needs_grad(b))
        gemm_tn(t.val(a).data(), g.data(), t.gbuf(b).data(), m, k, n, true);
    };
  }
  return id;
}

// ---------------------------------------------------------------------------
// shape plumbing

int Tape::reshape(int x, std::vector<int> shape) {
  const Tensor& X = val(x);
  check(Tensor::count(shape) == X.numel(), "reshape: element count mismatch");
  Tensor y = X.reshaped(shape);
  const bool needs = needs_grad(x);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x](Tape& t) {
      const Tensor& g = t.grad(id);
      Tensor& gx = t.gbuf(x);
      for (size_t i = 0; i < g.numel(); ++i) gx.v[i] += g.v[i];
    };
  }
  return id;
}

int Tape::slice_time(int x, int tcol) {
  const Tensor& X = val(x);
  check(X.ndim() == 3 && tcol >= 0 && tcol < X.dim(2), "slice_time: bad column");
  const int N = X.dim(0), C = X.dim(1), T = X.dim(2);
  Tensor y({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) y.at(n, c) = X.at(n, c, tcol);
  const bool needs = needs_grad(x);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, N, C, T, tcol](Tape& t) {
      (void)T;
      const Tensor& g = t.grad(id);
      Tensor& gx = t.gbuf(x);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) gx.at(n, c, tcol) += g.at(n, c);
    };
  }
  return id;
}

int Tape::slice_cols(int x, int c0, int c1) {
  const Tensor& X = val(x);
  check(X.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= X.dim(1), "slice_cols: bad range");
  const int N = X.dim(0), D = c1 - c0;
  Tensor y({N, D});
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d) y.at(n, d) = X.at(n, c0 + d);
  const bool needs = needs_grad(x);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, N, D, c0](Tape& t) {
      const Tensor& g = t.grad(id);
      Tensor& gx = t.gbuf(x);
      for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d) gx.at(n, c0 + d) += g.at(n, d);
    };
  }
  return id;
}

int Tape::concat_channels(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.ndim() == 3 && B.ndim() == 3 && A.dim(0) == B.dim(0) && A.dim(2) == B.dim(2),
        "concat_channels: shape mismatch");
  const int N = A.dim(0), C1 = A.dim(1), C2 = B.dim(1), T = A.dim(2);
  Tensor y({N, C1 + C2, T});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C1; ++c)
      for (int t = 0; t < T; ++t) y.at(n, c, t) = A.at(n, c, t);
    for (int c = 0; c < C2; ++c)
      for (int t = 0; t < T; ++t) y.at(n, C1 + c, t) = B.at(n, c, t);
  }
  const bool needs = needs_grad(a) || needs_grad(b);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, a, b, N, C1, C2, T](Tape& t) {
      const Tensor& g = t.grad(id);
      if (t.needs_grad(a)) {
        Tensor& ga = t.gbuf(a);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C1; ++c)
            for (int tt = 0; tt < T; ++tt) ga.at(n, c, tt) += g.at(n, c, tt);
      }
      if (t.needs_grad(b)) {
        Tensor& gb = t.gbuf(b);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C2; ++c)
            for (int tt = 0; tt < T; ++tt) gb.at(n, c, tt) += g.at(n, C1 + c, tt);
      }
    };
  }
  return id;
}

int Tape::tile_time(int e, int T) {
  const Tensor& E = val(e);
  check(E.ndim() == 2 && T >= 1, "tile_time: expects [N,E]");
  const int N = E.dim(0), D = E.dim(1);
  Tensor y({N, D, T});
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d) {
      const double v = E.at(n, d);
      for (int t = 0; t < T; ++t) y.at(n, d, t) = v;
    }
  const bool needs = needs_grad(e);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, e, N, D, T](Tape& t) {
      const Tensor& g = t.grad(id);
      Tensor& ge = t.gbuf(e);
      for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d) {
          double s = 0.0;
          for (int tt = 0; tt < T; ++tt) s += g.at(n, d, tt);
          ge.at(n, d) += s;
        }
    };
  }
  return id;
}

// ---------------------------------------------------------------------------
// convolution / pooling

int Tape::conv_temporal(int x, int w) {
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  check(X.ndim() == 3 && W.ndim() == 2, "conv_temporal: expects [N,C,T] and [F,K]");
  const int N = X.dim(0), C = X.dim(1), T = X.dim(2);
  const int F = W.dim(0), K = W.dim(1);
  const int pad = (K - 1) / 2;
  Tensor y({N, F, C, T});
#pragma omp parallel for collapse(2) schedule(static) if (1ll * N * F * C * T * K > 1 << 16)
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c) {
        const double* xr = &X.v[(static_cast<size_t>(n) * C + c) * T];
        const double* wr = &W.v[static_cast<size_t>(f) * K];
        double* yr = &y.v[((static_cast<size_t>(n) * F + f) * C + c) * T];
        for (int t = 0; t < T; ++t) {
          double s = 0.0;
          const int k0 = std::max(0, pad - t), k1 = std::min(K, T + pad - t);
          for (int k = k0; k < k1; ++k) s += wr[k] * xr[t + k - pad];
          yr[t] = s;
        }
      }
  const bool needs = needs_grad(x) || needs_grad(w);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, w, N, C, T, F, K, pad](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& X2 = t.val(x);
      const Tensor& W2 = t.val(w);
      if (t.needs_grad(w)) {
        Tensor& gw = t.gbuf(w);
        for (int f = 0; f < F; ++f)
          for (int k = 0; k < K; ++k) {
            double s = 0.0;
            for (int n = 0; n < N; ++n)
              for (int c = 0; c < C; ++c) {
                const double* xr = &X2.v[(static_cast<size_t>(n) * C + c) * T];
                const double* gr = &g.v[((static_cast<size_t>(n) * F + f) * C + c) * T];
                const int t0 = std::max(0, pad - k), t1 = std::min(T, T + pad - k);
                for (int tt = t0; tt < t1; ++tt) s += gr[tt] * xr[tt + k - pad];
              }
            gw.at(f, k) += s;
          }
      }
      if (t.needs_grad(x)) {
        Tensor& gx = t.gbuf(x);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            double* gxr = &gx.v[(static_cast<size_t>(n) * C + c) * T];
            for (int f = 0; f < F; ++f) {
              const double* wr = &W2.v[static_cast<size_t>(f) * K];
              const double* gr = &g.v[((static_cast<size_t>(n) * F + f) * C + c) * T];
              for (int tt = 0; tt < T; ++tt) {
                const double gv = gr[tt];
                if (gv == 0.0) continue;
                const int k0 = std::max(0, pad - tt), k1 = std::min(K, T + pad - tt);
                for (int k = k0; k < k1; ++k) gxr[tt + k - pad] += gv * wr[k];
              }
            }
          }
      }
    };
  }
  return id;
}

int Tape::depthwise_spatial(int x, int w) {
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  check(X.ndim() == 4 && W.ndim() == 3 && X.dim(1) == W.dim(0) && X.dim(2) == W.dim(2),
        "depthwise_spatial: expects [N,F,C,T] and [F,M,C]");
  const int N = X.dim(0), F = X.dim(1), C = X.dim(2), T = X.dim(3), M = W.dim(1);
  Tensor y({N, F * M, T});
#pragma omp parallel for collapse(2) schedule(static) if (1ll * N * F * M * C * T > 1 << 16)
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int m = 0; m < M; ++m) {
        double* yr = &y.v[((static_cast<size_t>(n) * F * M) + f * M + m) * T];
        std::fill(yr, yr + T, 0.0);
        for (int c = 0; c < C; ++c) {
          const double wv = W.at(f, m, c);
          const double* xr = &X.v[(((static_cast<size_t>(n) * F + f) * C) + c) * T];
          for (int t = 0; t < T; ++t) yr[t] += wv * xr[t];
        }
      }
  const bool needs = needs_grad(x) || needs_grad(w);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, w, N, F, C, T, M](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& X2 = t.val(x);
      const Tensor& W2 = t.val(w);
      if (t.needs_grad(w)) {
        Tensor& gw = t.gbuf(w);
        for (int f = 0; f < F; ++f)
          for (int m = 0; m < M; ++m)
            for (int c = 0; c < C; ++c) {
              double s = 0.0;
              for (int n = 0; n < N; ++n) {
                const double* gr = &g.v[((static_cast<size_t>(n) * F * M) + f * M + m) * T];
                const double* xr = &X2.v[(((static_cast<size_t>(n) * F + f) * C) + c) * T];
                for (int tt = 0; tt < T; ++tt) s += gr[tt] * xr[tt];
              }
              gw.at(f, m, c) += s;
            }
      }
      if (t.needs_grad(x)) {
        Tensor& gx = t.gbuf(x);
        for (int n = 0; n < N; ++n)
          for (int f = 0; f < F; ++f)
            for (int c = 0; c < C; ++c) {
              double* gxr = &gx.v[(((static_cast<size_t>(n) * F + f) * C) + c) * T];
              for (int m = 0; m < M; ++m) {
                const double wv = W2.at(f, m, c);
                const double* gr = &g.v[((static_cast<size_t>(n) * F * M) + f * M + m) * T];
                for (int tt = 0; tt < T; ++tt) gxr[tt] += wv * gr[tt];
              }
            }
      }
    };
  }
  return id;
}

int Tape::depthwise_time(int x, int w) {
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  check(X.ndim() == 3 && W.ndim() == 2 && X.dim(1) == W.dim(0),
        "depthwise_time: expects [N,F,T] and [F,K]");
  const int N = X.dim(0), F = X.dim(1), T = X.dim(2), K = W.dim(1);
  const int pad = (K - 1) / 2;
  Tensor y({N, F, T});
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f) {
      const double* xr = &X.v[(static_cast<size_t>(n) * F + f) * T];
      const double* wr = &W.v[static_cast<size_t>(f) * K];
      double* yr = &y.v[(static_cast<size_t>(n) * F + f) * T];
      for (int t = 0; t < T; ++t) {
        double s = 0.0;
        const int k0 = std::max(0, pad - t), k1 = std::min(K, T + pad - t);
        for (int k = k0; k < k1; ++k) s += wr[k] * xr[t + k - pad];
        yr[t] = s;
      }
    }
  const bool needs = needs_grad(x) || needs_grad(w);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, w, N, F, T, K, pad](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& X2 = t.val(x);
      const Tensor& W2 = t.val(w);
      if (t.needs_grad(w)) {
        Tensor& gw = t.gbuf(w);
        for (int f = 0; f < F; ++f)
          for (int k = 0; k < K; ++k) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
              const double* xr = &X2.v[(static_cast<size_t>(n) * F + f) * T];
              const double* gr = &g.v[(static_cast<size_t>(n) * F + f) * T];
              const int t0 = std::max(0, pad - k), t1 = std::min(T, T + pad - k);
              for (int tt = t0; tt < t1; ++tt) s += gr[tt] * xr[tt + k - pad];
            }
            gw.at(f, k) += s;
          }
      }
      if (t.needs_grad(x)) {
        Tensor& gx = t.gbuf(x);
        for (int n = 0; n < N; ++n)
          for (int f = 0; f < F; ++f) {
            const double* wr = &W2.v[static_cast<size_t>(f) * K];
            const double* gr = &g.v[(static_cast<size_t>(n) * F + f) * T];
            double* gxr = &gx.v[(static_cast<size_t>(n) * F + f) * T];
            for (int tt = 0; tt < T; ++tt) {
              const double gv = gr[tt];
              if (gv == 0.0) continue;
              const int k0 = std::max(0, pad - tt), k1 = std::min(K, T + pad - tt);
              for (int k = k0; k < k1; ++k) gxr[tt + k - pad] += gv * wr[k];
            }
          }
      }
    };
  }
  return id;
}

int Tape::pointwise(int x, int w) {
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  check(X.ndim() == 3 && W.ndim() == 2 && W.dim(1) == X.dim(1),
        "pointwise: expects [N,F,T] and [G,F]");
  const int N = X.dim(0), F = X.dim(1), T = X.dim(2), G = W.dim(0);
  Tensor y({N, G, T});
  for (int n = 0; n < N; ++n)
    gemm_nn(W.data(), &X.v[static_cast<size_t>(n) * F * T], &y.v[static_cast<size_t>(n) * G * T],
            G, F, T, false);
  const bool needs = needs_grad(x) || needs_grad(w);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, w, N, F, T, G](Tape& t) {
      const Tensor& g = t.grad(id);
      if (t.needs_grad(w)) {
        Tensor& gw = t.gbuf(w);
        for (int n = 0; n < N; ++n)
          gemm_nt(&g.v[static_cast<size_t>(n) * G * T], &t.val(x).v[static_cast<size_t>(n) * F * T],
                  gw.data(), G, T, F, true);
      }
      if (t.needs_grad(x)) {
        Tensor& gx = t.gbuf(x);
        for (int n = 0; n < N; ++n)
          gemm_tn(t.val(w).data(), &g.v[static_cast<size_t>(n) * G * T],
                  &gx.v[static_cast<size_t>(n) * F * T], G, F, T, true);
      }
    };
  }
  return id;
}

int Tape::avgpool_time(int x, int k) {
  const Tensor& X = val(x);
  check(X.ndim() == 3 && k >= 1, "avgpool_time: expects [N,F,T]");
  const int N = X.dim(0), F = X.dim(1), T = X.dim(2), To = T / k;
  check(To >= 1, "avgpool_time: pool width exceeds length");
  Tensor y({N, F, To});
  const double inv = 1.0 / k;
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int t = 0; t < To; ++t) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += X.at(n, f, t * k + j);
        y.at(n, f, t) = s * inv;
      }
  const bool needs = needs_grad(x);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, N, F, To, k, inv](Tape& t) {
      const Tensor& g = t.grad(id);
      Tensor& gx = t.gbuf(x);
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f)
          for (int tt = 0; tt < To; ++tt) {
            const double gv = g.at(n, f, tt) * inv;
            for (int j = 0; j < k; ++j) gx.at(n, f, tt * k + j) += gv;
          }
    };
  }
  return id;
}

// ---------------------------------------------------------------------------
// normalization / regularization

int Tape::batchnorm(int x, int gamma, int beta, BnState* state, Mode mode) {
  const Tensor& X = val(x);
  check(X.ndim() == 3, "batchnorm: expects [N,F,R]");
  const int N = X.dim(0), F = X.dim(1), R = X.dim(2);
  check(val(gamma).numel() == static_cast<size_t>(F) && val(beta).numel() == static_cast<size_t>(F),
        "batchnorm: gamma/beta must have one entry per feature");
  check(state != nullptr && state->mean.numel() == static_cast<size_t>(F), "batchnorm: bad state");

  const double eps = state->eps;
  Tensor xhat({N, F, R});
  std::vector<double> mean_used(static_cast<size_t>(F)), var_used(static_cast<size_t>(F));

  if (mode == Mode::train) {
    const double m = static_cast<double>(N) * R;
    for (int f = 0; f < F; ++f) {
      double mu = 0.0;
      for (int n = 0; n < N; ++n)
        for (int r = 0; r < R; ++r) mu += X.at(n, f, r);
      mu /= m;
      double var = 0.0;
      for (int n = 0; n < N; ++n)
        for (int r = 0; r < R; ++r) {
          const double d = X.at(n, f, r) - mu;
          var += d * d;
        }
      var /= m;
      mean_used[static_cast<size_t>(f)] = mu;
      var_used[static_cast<size_t>(f)] = var;
      state->mean.at(f) = state->momentum * state->mean.at(f) + (1.0 - state->momentum) * mu;
      state->var.at(f) = state->momentum * state->var.at(f) + (1.0 - state->momentum) * var;
    }
  } else {
    for (int f = 0; f < F; ++f) {
      mean_used[static_cast<size_t>(f)] = state->mean.at(f);
      var_used[static_cast<size_t>(f)] = state->var.at(f);
    }
  }

  Tensor y({N, F, R});
  const Tensor& G = val(gamma);
  const Tensor& B = val(beta);
  for (int f = 0; f < F; ++f) {
    const double mu = mean_used[static_cast<size_t>(f)];
    const double inv = 1.0 / std::sqrt(var_used[static_cast<size_t>(f)] + eps);
    const double gv = G.at(f), bv = B.at(f);
    for (int n = 0; n < N; ++n)
      for (int r = 0; r < R; ++r) {
        const double xh = (X.at(n, f, r) - mu) * inv;
        xhat.at(n, f, r) = xh;
        y.at(n, f, r) = gv * xh + bv;
      }
  }

  const bool needs = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    auto xh_keep = std::make_shared<Tensor>(std::move(xhat));
    auto var_keep = std::make_shared<std::vector<double>>(std::move(var_used));
    nodes_.back().back = [id, x, gamma, beta, N, F, R, eps, mode, xh_keep, var_keep](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& G2 = t.val(gamma);
      const double m = static_cast<double>(N) * R;
      if (t.needs_grad(beta)) {
        Tensor& gb = t.gbuf(beta);
        for (int f = 0; f < F; ++f) {
          double s = 0.0;
          for (int n = 0; n < N; ++n)
            for (int r = 0; r < R; ++r) s += g.at(n, f, r);
          gb.at(f) += s;
        }
      }
      if (t.needs_grad(gamma)) {
        Tensor& gg = t.gbuf(gamma);
        for (int f = 0; f < F; ++f) {
          double s = 0.0;
          for (int n = 0; n < N; ++n)
            for (int r = 0; r < R; ++r) s += g.at(n, f, r) * xh_keep->at(n, f, r);
          gg.at(f) += s;
        }
      }
      if (t.needs_grad(x)) {
        Tensor& gx = t.gbuf(x);
        for (int f = 0; f < F; ++f) {
          const double inv = 1.0 / std::sqrt((*var_keep)[static_cast<size_t>(f)] + eps);
          const double gv = G2.at(f);
          if (mode == Mode::train) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int n = 0; n < N; ++n)
              for (int r = 0; r < R; ++r) {
                sum_g += g.at(n, f, r);
                sum_gx += g.at(n, f, r) * xh_keep->at(n, f, r);
              }
            for (int n = 0; n < N; ++n)
              for (int r = 0; r < R; ++r)
                gx.at(n, f, r) += gv * inv *
                                  (g.at(n, f, r) - sum_g / m - xh_keep->at(n, f, r) * sum_gx / m);
          } else {
            for (int n = 0; n < N; ++n)
              for (int r = 0; r < R; ++r) gx.at(n, f, r) += gv * inv * g.at(n, f, r);
          }
        }
      }
    };
  }
  return id;
}

int Tape::dropout(int x, double p, Rng& rng, Mode mode) {
  check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (mode == Mode::eval || p == 0.0) return x;
  const Tensor& X = val(x);
  auto mask = std::make_shared<std::vector<double>>(X.numel());
  const double keep = 1.0 - p;
  Tensor y = X;
  for (size_t i = 0; i < y.numel(); ++i) {
    const double m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    y.v[i] *= m;
  }
  const bool needs = needs_grad(x);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, mask](Tape& t) {
      const Tensor& g = t.grad(id);
      Tensor& gx = t.gbuf(x);
      for (size_t i = 0; i < g.numel(); ++i) gx.v[i] += g.v[i] * (*mask)[i];
    };
  }
  return id;
}

// ---------------------------------------------------------------------------
// recurrent helpers

int Tape::softmax_groups(int x) {
  const Tensor& X = val(x);
  check(X.ndim() == 3, "softmax_groups: expects [N,H,D]");
  const int N = X.dim(0), H = X.dim(1), D = X.dim(2);
  Tensor y({N, H, D});
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h) {
      const double* xr = &X.v[(static_cast<size_t>(n) * H + h) * D];
      double* yr = &y.v[(static_cast<size_t>(n) * H + h) * D];
      double mx = xr[0];
      for (int d = 1; d < D; ++d) mx = std::max(mx, xr[d]);
      for (int d = 0; d < D; ++d) yr[d] = xr[d] - mx;
      vexp_inplace(yr, static_cast<size_t>(D));
      double z = 0.0;
      for (int d = 0; d < D; ++d) z += yr[d];
      const double inv = 1.0 / z;
      for (int d = 0; d < D; ++d) yr[d] *= inv;
    }
  const bool needs = needs_grad(x);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, N, H, D](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& y2 = t.val(id);
      Tensor& gx = t.gbuf(x);
      for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h) {
          double dot = 0.0;
          for (int d = 0; d < D; ++d) dot += g.at(n, h, d) * y2.at(n, h, d);
          for (int d = 0; d < D; ++d)
            gx.at(n, h, d) += y2.at(n, h, d) * (g.at(n, h, d) - dot);
        }
    };
  }
  return id;
}

int Tape::dmu_gates(int x, int h, int wg, int ug, int bg, int H, int D) {
  const Tensor& X = val(x);
  const Tensor& Hh = val(h);
  const Tensor& Wg = val(wg);
  const Tensor& Ug = val(ug);
  const Tensor& Bg = val(bg);
  const int N = X.dim(0), C = X.dim(1);
  const int HD = H * D;
  check(Wg.ndim() == 2 && Wg.dim(0) == C && Wg.dim(1) == HD, "dmu_gates: wg shape");
  check(Ug.ndim() == 2 && Ug.dim(0) == Hh.dim(1) && Ug.dim(1) == HD, "dmu_gates: ug shape");
  check(Bg.numel() == static_cast<size_t>(HD), "dmu_gates: bg shape");

  // Scratch survives across steps; both gemms overwrite it fully.
  static thread_local std::vector<double> pre_scratch;
  pre_scratch.resize(static_cast<size_t>(N) * HD);
  double* pre = pre_scratch.data();
  gemm_nn(X.data(), Wg.data(), pre, N, C, HD, false);
  gemm_nn(Hh.data(), Ug.data(), pre, N, Hh.dim(1), HD, true);
  Tensor a({N, H, D});
#pragma omp parallel for schedule(static) if (1ll * N * HD > 1 << 12)
  for (int n = 0; n < N; ++n)
    for (int hh = 0; hh < H; ++hh) {
      const double* pr = pre + static_cast<size_t>(n) * HD + static_cast<size_t>(hh) * D;
      const double* br = &Bg.v[static_cast<size_t>(hh) * D];
      double mx = pr[0] + br[0];
      for (int d = 1; d < D; ++d) mx = std::max(mx, pr[d] + br[d]);
      double* ar = &a.v[(static_cast<size_t>(n) * H + hh) * D];
      for (int d = 0; d < D; ++d) ar[d] = pr[d] + br[d] - mx;
      vexp_inplace(ar, static_cast<size_t>(D));
      double z = 0.0;
      for (int d = 0; d < D; ++d) z += ar[d];
      const double inv = 1.0 / z;
      for (int d = 0; d < D; ++d) ar[d] *= inv;
    }

  const bool needs = needs_grad(x) || needs_grad(h) || needs_grad(wg) || needs_grad(ug) ||
                     needs_grad(bg);
  int id = push(std::move(a), needs, nullptr);
  if (needs) {
    nodes_.back().back = [id, x, h, wg, ug, bg, N, C, H, D, HD](Tape& t) {
      const Tensor& g = t.grad(id);
      const Tensor& a2 = t.val(id);
      static thread_local std::vector<double> dpre_scratch;
      dpre_scratch.resize(static_cast<size_t>(N) * HD);
      double* dpre = dpre_scratch.data();
#pragma omp parallel for schedule(static) if (1ll * N * HD > 1 << 12)
      for (int n = 0; n < N; ++n)
        for (int hh = 0; hh < H; ++hh) {
          const double* gr = &g.v[(static_cast<size_t>(n) * H + hh) * D];
          const double* ar = &a2.v[(static_cast<size_t>(n) * H + hh) * D];
          double dot = 0.0;
          for (int d = 0; d < D; ++d) dot += gr[d] * ar[d];
          double* dp = dpre + static_cast<size_t>(n) * HD + static_cast<size_t>(hh) * D;
          for (int d = 0; d < D; ++d) dp[d] = ar[d] * (gr[d] - dot);
        }
      if (t.needs_grad(x))
        gemm_nt(dpre, t.val(wg).data(), t.gbuf(x).data(), N, HD, C, true);
      if (t.needs_grad(h))
        gemm_nt(dpre, t.val(ug).data(), t.gbuf(h).data(), N, HD, t.val(h).dim(1), true);
      if (t.needs_grad(wg))
        gemm_tn(t.val(x).data(), dpre, t.gbuf(wg).data(), N, C, HD, true);
      if (t.needs_grad(ug))
        gemm_tn(t.val(h).data(), dpre, t.gbuf(ug).data(), N, t.val(h).dim(1), HD, true);
      if (t.needs_grad(bg)) {
        Tensor& gb = t.gbuf(bg);
        for (int n = 0; n < N; ++n)
          for (int k = 0; k < HD; ++k) gb.at(k) += dpre[static_cast<size_t>(n) * HD + k];
      }
    };
  }
  return id;
}

int Tape::delay_mix(int gates, const std::vector<int>& history) {
  const Tensor& A = val(gates);
  check(A.ndim() == 3, "delay_mix: gates must be [N,H,D]");
  const int N = A.dim(0), H = A.dim(1), D = A.dim(2);
  check(history.size() == static_cast<size_t>(D), "delay_mix: need one state per delay");
  for (int hid : history)
    check(val(hid).ndim() == 2 && val(hid).dim(0) == N && val(hid).dim(1) == H,
          "delay_mix: history state shape mismatch");
  Tensor y({N, H});
  for (int d = 0; d < D; ++d) {
    const Tensor& Hd = val(history[static_cast<size_t>(d)]);
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h) y.at(n, h) += A.at(n, h, d) * Hd.at(n, h);
  }
  bool needs = needs_grad(gates);
  for (int hid : history) needs = needs || needs_grad(hid);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    auto hist = std::make_shared<std::vector<int>>(history);
    nodes_.back().back = [id, gates, hist, N, H, D](Tape& t) {
      const Tensor& g = t.grad(id);
      if (t.needs_grad(gates)) {
        Tensor& ga = t.gbuf(gates);
        for (int d = 0; d < D; ++d) {
          const Tensor& Hd = t.val((*hist)[static_cast<size_t>(d)]);
          for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h) ga.at(n, h, d) += g.at(n, h) * Hd.at(n, h);
        }
      }
      for (int d = 0; d < D; ++d) {
        const int hid = (*hist)[static_cast<size_t>(d)];
        if (!t.needs_grad(hid)) continue;
        const Tensor& A2 = t.val(gates);
        Tensor& gh = t.gbuf(hid);
        for (int n = 0; n < N; ++n)
          for (int h = 0; h < H; ++h) gh.at(n, h) += g.at(n, h) * A2.at(n, h, d);
      }
    };
  }
  return id;
}

// ---------------------------------------------------------------------------
// losses

int Tape::mean_cross_entropy(int logits, const std::vector<int>& labels) {
  const Tensor& L = val(logits);
  check(L.ndim() == 2 && L.dim(0) == static_cast<int>(labels.size()),
        "mean_cross_entropy: logits/label count mismatch");
  const int N = L.dim(0), K = L.dim(1);
  auto probs = std::make_shared<Tensor>(Tensor({N, K}));
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    double mx = L.at(n, 0);
    for (int k = 1; k < K; ++k) mx = std::max(mx, L.at(n, k));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(L.at(n, k) - mx);
    const double lse = mx + std::log(z);
    check(labels[static_cast<size_t>(n)] >= 0 && labels[static_cast<size_t>(n)] < K,
          "mean_cross_entropy: label out of range");
    loss += lse - L.at(n, labels[static_cast<size_t>(n)]);
    for (int k = 0; k < K; ++k) probs->at(n, k) = std::exp(L.at(n, k) - lse);
  }
  loss /= N;
  Tensor y({1});
  y.v[0] = loss;
  const bool needs = needs_grad(logits);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    auto lab = std::make_shared<std::vector<int>>(labels);
    nodes_.back().back = [id, logits, probs, lab, N, K](Tape& t) {
      const double g0 = t.grad(id).v[0];
      Tensor& gl = t.gbuf(logits);
      for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
          const double onehot = (*lab)[static_cast<size_t>(n)] == k ? 1.0 : 0.0;
          gl.at(n, k) += g0 * (probs->at(n, k) - onehot) / N;
        }
    };
  }
  return id;
}

int Tape::dot_const(int x, Tensor w) {
  const Tensor& X = val(x);
  check(X.numel() == w.numel(), "dot_const: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < X.numel(); ++i) s += X.v[i] * w.v[i];
  Tensor y({1});
  y.v[0] = s;
  const bool needs = needs_grad(x);
  int id = push(std::move(y), needs, nullptr);
  if (needs) {
    auto wk = std::make_shared<Tensor>(std::move(w));
    nodes_.back().back = [id, x, wk](Tape& t) {
      const double g0 = t.grad(id).v[0];
      Tensor& gx = t.gbuf(x);
      for (size_t i = 0; i < gx.numel(); ++i) gx.v[i] += g0 * wk->v[i];
    };
  }
  return id;
}

}  // namespace eegcid
