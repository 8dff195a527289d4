#include "eegcid/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace eegcid {

void TsneConfig::validate() const {
  if (perplexity < 1.0) throw ValidationError("perplexity must be >= 1");
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (learning_rate <= 0.0) throw ValidationError("learning_rate must be positive");
  if (init_scale <= 0.0) throw ValidationError("init_scale must be positive");
}

namespace {

Tensor squared_distances(const Tensor& X) {
  const int n = X.dim(0), d = X.dim(1);
  Tensor dd({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = X.at(i, k) - X.at(j, k);
        s += diff * diff;
      }
      dd.at(i, j) = s;
      dd.at(j, i) = s;
    }
  return dd;
}

}  // namespace

Tensor tsne_conditional_p(const Tensor& X, const TsneConfig& cfg,
                          std::vector<double>* achieved_perplexity) {
  cfg.validate();
  const int n = X.dim(0);
  if (n < 2) throw ValidationError("t-SNE needs at least 2 rows");
  if (!(cfg.perplexity < static_cast<double>(n)))
    throw ValidationError("perplexity " + std::to_string(cfg.perplexity) +
                          " must be below the distinct row count " + std::to_string(n));
  const Tensor dd = squared_distances(X);
  const double target_h = std::log(cfg.perplexity);  // entropy target in nats
  Tensor P({n, n});
  if (achieved_perplexity) achieved_perplexity->assign(static_cast<size_t>(n), 0.0);

  for (int i = 0; i < n; ++i) {
    double beta = 1.0;
    double beta_lo = -std::numeric_limits<double>::max();
    double beta_hi = std::numeric_limits<double>::max();
    double h = 0.0, sum_p = 0.0;
    std::vector<double> row(static_cast<size_t>(n), 0.0);

    for (int iter = 0; iter < cfg.bisection_max_iter; ++iter) {
      sum_p = 0.0;
      double hnum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) {
          row[static_cast<size_t>(j)] = 0.0;
          continue;
        }
        const double p = std::exp(-beta * dd.at(i, j));
        row[static_cast<size_t>(j)] = p;
        sum_p += p;
        hnum += beta * dd.at(i, j) * p;
      }
      if (sum_p <= 0.0) sum_p = std::numeric_limits<double>::min();
      h = hnum / sum_p + std::log(sum_p);

      const double hdiff = h - target_h;
      if (std::abs(hdiff) < cfg.bisection_log_tol) break;
      if (hdiff > 0.0) {  // entropy too high -> sharpen
        beta_lo = beta;
        beta = (beta_hi == std::numeric_limits<double>::max()) ? beta * 2.0
                                                               : (beta + beta_hi) / 2.0;
      } else {
        beta_hi = beta;
        beta = (beta_lo == -std::numeric_limits<double>::max()) ? beta / 2.0
                                                                : (beta + beta_lo) / 2.0;
      }
    }

    const double inv = 1.0 / sum_p;
    for (int j = 0; j < n; ++j) P.at(i, j) = row[static_cast<size_t>(j)] * inv;
    if (achieved_perplexity) (*achieved_perplexity)[static_cast<size_t>(i)] = std::exp(h);
  }
  return P;
}

Tensor tsne_joint_p(const Tensor& X, const TsneConfig& cfg,
                    std::vector<double>* achieved_perplexity) {
  const Tensor cond = tsne_conditional_p(X, cfg, achieved_perplexity);
  const int n = cond.dim(0);
  Tensor P({n, n});
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = (cond.at(i, j) + cond.at(j, i)) / (2.0 * n);
      P.at(i, j) = v;
      total += v;
    }
  // total is 1 up to roundoff; renormalize so the sum-to-1 contract is tight.
  const double inv = 1.0 / total;
  for (double& v : P.v) v *= inv;
  return P;
}

namespace {

// Unnormalized Student-t affinities and their normalizer.
double q_terms(const Tensor& Y, Tensor& num) {
  const int n = Y.dim(0);
  double z = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < 2; ++k) {
        const double d = Y.at(i, k) - Y.at(j, k);
        s += d * d;
      }
      const double q = 1.0 / (1.0 + s);
      num.at(i, j) = q;
      num.at(j, i) = q;
      z += 2.0 * q;
    }
  return z;
}

}  // namespace

double tsne_kl(const Tensor& P, const Tensor& Y) {
  const int n = Y.dim(0);
  Tensor num({n, n});
  const double z = q_terms(Y, num);
  double kl = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = P.at(i, j);
      if (p <= 0.0) continue;
      const double q = std::max(num.at(i, j) / z, std::numeric_limits<double>::min());
      kl += p * std::log(p / q);
    }
  return kl;
}

Tensor tsne_kl_grad(const Tensor& P, const Tensor& Y) {
  const int n = Y.dim(0);
  Tensor num({n, n});
  const double z = q_terms(Y, num);
  Tensor g({n, 2});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double q = num.at(i, j);
      const double mult = 4.0 * (P.at(i, j) - q / z) * q;
      for (int k = 0; k < 2; ++k) g.at(i, k) += mult * (Y.at(i, k) - Y.at(j, k));
    }
  return g;
}

TsneResult tsne(const Tensor& X, const TsneConfig& cfg) {
  cfg.validate();
  if (X.ndim() != 2) throw ValidationError("t-SNE input must be a matrix");
  const int n_all = X.dim(0);
  const int d = X.dim(1);

  // Collapse bit-identical rows; profile-determined embeddings make exact
  // duplicates the common case, and duplicates break the bandwidth search.
  std::map<std::vector<double>, int> row_of;
  std::vector<int> owner(static_cast<size_t>(n_all));
  std::vector<std::vector<double>> distinct;
  for (int i = 0; i < n_all; ++i) {
    std::vector<double> key(X.v.begin() + static_cast<size_t>(i) * d,
                            X.v.begin() + static_cast<size_t>(i + 1) * d);
    auto it = row_of.find(key);
    if (it == row_of.end()) {
      it = row_of.emplace(std::move(key), static_cast<int>(distinct.size())).first;
      distinct.push_back(it->first);
    }
    owner[static_cast<size_t>(i)] = it->second;
  }
  const int n = static_cast<int>(distinct.size());
  if (n < 2) throw ValidationError("all rows are identical; nothing to embed");
  if (n < 4) throw ValidationError("need at least 4 distinct rows after duplicate collapse");
  if (!(cfg.perplexity < static_cast<double>(n)))
    throw ValidationError("perplexity must be below the distinct row count (" +
                          std::to_string(n) + ")");

  Tensor Xd({n, d});
  for (int i = 0; i < n; ++i)
    std::copy(distinct[static_cast<size_t>(i)].begin(), distinct[static_cast<size_t>(i)].end(),
              Xd.v.begin() + static_cast<size_t>(i) * d);

  TsneResult res;
  Tensor P = tsne_joint_p(Xd, cfg, &res.achieved_perplexity);

  Tensor Y({n, 2});
  Rng rng = rng_for(cfg.seed, "tsne.init");
  for (double& v : Y.v) v = rng.normal() * cfg.init_scale;

  res.kl_initial = tsne_kl(P, Y);

  Tensor P_ex = P;
  for (double& v : P_ex.v) v *= cfg.early_exaggeration;
  Tensor velocity({n, 2});

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const bool exaggerate = iter < cfg.exaggeration_iters;
    const double momentum =
        iter < cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;
    const Tensor g = tsne_kl_grad(exaggerate ? P_ex : P, Y);
    for (size_t i = 0; i < Y.numel(); ++i) {
      velocity.v[i] = momentum * velocity.v[i] - cfg.learning_rate * g.v[i];
      Y.v[i] += velocity.v[i];
    }
    // Keep the embedding centered; KL is translation invariant.
    for (int k = 0; k < 2; ++k) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += Y.at(i, k);
      mean /= n;
      for (int i = 0; i < n; ++i) Y.at(i, k) -= mean;
    }
  }

  res.kl_final = tsne_kl(P, Y);

  res.Y = Tensor({n_all, 2});
  for (int i = 0; i < n_all; ++i)
    for (int k = 0; k < 2; ++k) res.Y.at(i, k) = Y.at(owner[static_cast<size_t>(i)], k);
  return res;
}

}  // namespace eegcid
