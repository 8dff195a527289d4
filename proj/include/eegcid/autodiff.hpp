#pragma once

#include <functional>
#include <vector>

#include "eegcid/common.hpp"
#include "eegcid/tensor.hpp"

namespace eegcid {

enum class Mode { train, eval };

// Running batch-norm statistics, one value per feature map. Train-mode
// forwards update these in place; eval mode reads them.
struct BnState {
  Tensor mean;
  Tensor var;
  double momentum = 0.9;
  double eps = 1e-5;
};

// Reverse-mode tape over dense double tensors. Nodes are created in
// topological order by construction; backward() walks them in reverse.
// Gradients only flow into nodes flagged as needing them, so constant
// inputs cost nothing extra.
class Tape {
 public:
  int leaf(Tensor v, bool needs_grad);

  const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  const Tensor& grad(int id) const;
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs; }

  // Elementwise / broadcast.
  int add(int a, int b);
  int sub(int a, int b);
  int hadamard(int a, int b);
  int scale(int a, double s);
  int one_minus(int a);
  int add_rowvec(int x, int b);  // [N,D] + [D]
  int elu(int a);
  int sigmoid(int a);
  int tanh_op(int a);

  // Linear algebra.
  int matmul(int a, int b);  // [m,k] x [k,n]

  // Shape plumbing.
  int reshape(int x, std::vector<int> shape);
  int slice_time(int x, int t);                 // [N,C,T] -> [N,C]
  int slice_cols(int x, int c0, int c1);        // [N,D] -> [N,c1-c0]
  int concat_channels(int a, int b);            // [N,C1,T] + [N,C2,T]
  int tile_time(int e, int T);                  // [N,E] -> [N,E,T]

  // Convolution / pooling blocks.
  int conv_temporal(int x, int w);              // [N,C,T], [F,K] -> [N,F,C,T]
  int depthwise_spatial(int x, int w);          // [N,F,C,T], [F,M,C] -> [N,F*M,T]
  int depthwise_time(int x, int w);             // [N,F,T], [F,K] -> [N,F,T]
  int pointwise(int x, int w);                  // [N,F,T], [G,F] -> [N,G,T]
  int avgpool_time(int x, int k);               // [N,F,T] -> [N,F,T/k]

  // Normalization / regularization. x is [N,F,R]; stats are per F over N,R.
  int batchnorm(int x, int gamma, int beta, BnState* state, Mode mode);
  int dropout(int x, double p, Rng& rng, Mode mode);

  // Recurrent helpers.
  int softmax_groups(int x);                    // [N,H,D], softmax over D
  int delay_mix(int gates, const std::vector<int>& history);  // -> [N,H]
  // Fused softmax(x*wg + h*ug + bg) grouped per hidden unit; stores only the
  // softmax output, which is all the backward pass needs.
  int dmu_gates(int x, int h, int wg, int ug, int bg, int H, int D);  // -> [N,H,D]

  // Losses / reductions.
  int mean_cross_entropy(int logits, const std::vector<int>& labels);  // -> scalar
  int dot_const(int x, Tensor w);                                      // -> scalar

  void backward(int out);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&)> back;
    bool needs = false;
    bool grad_alloc = false;
  };

  int push(Tensor val, bool needs, std::function<void(Tape&)> back);
  Tensor& gbuf(int id);
  void accum_available(int id);

  std::vector<Node> nodes_;
};

}  // namespace eegcid
