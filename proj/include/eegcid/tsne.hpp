#pragma once

#include <vector>

#include "eegcid/common.hpp"
#include "eegcid/tensor.hpp"

namespace eegcid {

struct TsneConfig {
  double perplexity = 5.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  double early_exaggeration = 4.0;
  int exaggeration_iters = 100;
  double init_scale = 1e-4;
  uint64_t seed = 1;
  double bisection_log_tol = 1e-5;  // on log-perplexity (nats)
  int bisection_max_iter = 200;

  void validate() const;
};

struct TsneResult {
  Tensor Y;  // N x 2, duplicate inputs re-expanded to identical coordinates
  double kl_initial = 0.0;  // plain P, before any optimization
  double kl_final = 0.0;    // plain P, after the last iteration
  std::vector<double> achieved_perplexity;  // per distinct input row
};

// Exact (non-approximate) projection to 2-D: per-point Gaussian bandwidths by
// bisection, symmetrized P, Student-t Q with one degree of freedom, gradient
// descent with momentum and early exaggeration. Bit-identical input rows are
// collapsed before optimization and re-expanded afterward.
TsneResult tsne(const Tensor& X, const TsneConfig& cfg);

// Building blocks, exposed for verification.
// Row-normalized conditional affinities with per-row bandwidth matched to the
// perplexity; also returns the achieved perplexity per row.
Tensor tsne_conditional_p(const Tensor& X, const TsneConfig& cfg,
                          std::vector<double>* achieved_perplexity);
// Symmetric joint P (sums to 1).
Tensor tsne_joint_p(const Tensor& X, const TsneConfig& cfg,
                    std::vector<double>* achieved_perplexity = nullptr);
double tsne_kl(const Tensor& P, const Tensor& Y);
Tensor tsne_kl_grad(const Tensor& P, const Tensor& Y);

}  // namespace eegcid
