#include "eegcid/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace eegcid {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ValidationError("lr must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (early_stop_patience < 1) throw ValidationError("early_stop_patience must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ValidationError("val_fraction must be in [0, 1)");
  if (precision != "f64")
    throw ValidationError("precision '" + precision + "' is not supported; this build is f64");
}

void AdamState::step(ModelParams& params, const std::map<std::string, Tensor>& grads, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (auto& [name, g] : grads) {
    Tensor& w = params.tensors.at(name);
    auto it = moments.find(name);
    if (it == moments.end())
      it = moments.emplace(name, std::make_pair(Tensor(w.shape), Tensor(w.shape))).first;
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (size_t i = 0; i < w.numel(); ++i) {
      m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g.v[i];
      v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      w.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

BatchInput assemble_batch(const ModelSpec& spec, const Dataset& ds,
                          const std::vector<int>& indices, size_t begin, size_t end) {
  const int N = static_cast<int>(end - begin);
  const int C = spec.eeg_channels();
  BatchInput b;
  b.eeg = Tensor({N, C, spec.T});
  if (spec.use_ids)
    b.codes = Tensor({N, spec.embedder == EmbedderKind::affine ? kProfileBits : 16});
  b.labels.resize(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    const TrialEpoch& e = ds.epochs.at(static_cast<size_t>(indices[begin + static_cast<size_t>(n)]));
    if (e.channels != C || e.n_samples != spec.T)
      throw ValidationError("epoch shape " + std::to_string(e.channels) + "x" +
                            std::to_string(e.n_samples) + " does not match the model (" +
                            std::to_string(C) + "x" + std::to_string(spec.T) + ")");
    std::copy(e.data.begin(), e.data.end(),
              b.eeg.v.begin() + static_cast<size_t>(n) * C * spec.T);
    b.labels[static_cast<size_t>(n)] = static_cast<int>(e.label);
    if (spec.use_ids) {
      auto it = ds.profiles.find(e.subject_id);
      if (it == ds.profiles.end())
        throw ValidationError("missing profile for subject '" + e.subject_id + "'");
      const Tensor row = code_row(spec, it->second);
      for (int j = 0; j < b.codes.dim(1); ++j) b.codes.at(n, j) = row.at(0, j);
    }
  }
  return b;
}

std::vector<int> predict(ModelParams& params, const Dataset& ds, const std::vector<int>& indices,
                         int eval_batch) {
  std::vector<int> pred(indices.size());
  for (size_t at = 0; at < indices.size(); at += static_cast<size_t>(eval_batch)) {
    const size_t hi = std::min(indices.size(), at + static_cast<size_t>(eval_batch));
    BatchInput b = assemble_batch(params.spec, ds, indices, at, hi);
    const Tensor logits = forward_batch(params, b);
    for (size_t n = 0; n + at < hi; ++n)
      pred[at + n] = logits.at(static_cast<int>(n), 1) > logits.at(static_cast<int>(n), 0) ? 1 : 0;
  }
  return pred;
}

namespace {

double accuracy_of(const std::vector<int>& pred, const Dataset& ds,
                   const std::vector<int>& indices) {
  if (pred.empty()) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == static_cast<int>(ds.epochs[static_cast<size_t>(indices[i])].label)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

TrainResult train(const ModelSpec& spec, const Dataset& ds, const std::vector<int>& train_indices,
                  const TrainConfig& cfg, const std::set<std::string>& forbidden_subjects) {
  cfg.validate();
  validate_spec(spec);
  if (ds.stage != Stage::preprocessed)
    throw ValidationError("training expects a preprocessed dataset");
  if (train_indices.empty()) throw ValidationError("training set is empty");
  for (int i : train_indices) {
    const auto& id = ds.epochs.at(static_cast<size_t>(i)).subject_id;
    if (forbidden_subjects.count(id))
      throw ValidationError("leakage: epoch of held-out subject '" + id + "' in training set");
  }

  const auto wall_start = std::chrono::steady_clock::now();

  // Deterministic validation carve-out.
  std::vector<int> pool = train_indices;
  {
    Rng rng = rng_for(cfg.seed, "train.valsplit");
    rng.shuffle(pool);
  }
  const auto n_val = static_cast<size_t>(
      std::llround(cfg.val_fraction * static_cast<double>(pool.size())));
  std::vector<int> val_idx(pool.begin(), pool.begin() + static_cast<long>(n_val));
  std::vector<int> fit_idx(pool.begin() + static_cast<long>(n_val), pool.end());
  if (fit_idx.empty()) throw ValidationError("validation carve-out left no training instances");
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(fit_idx.begin(), fit_idx.end());

  TrainResult out;
  out.params = init_params(spec, cfg.seed);
  AdamState adam;
  Rng dropout_rng = rng_for(cfg.seed, "train.dropout");

  ModelParams best = out.params;
  int epochs_since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int> order = fit_idx;
    Rng shuffle_rng = rng_for(cfg.seed ^ static_cast<uint64_t>(epoch) * 0x9e3779b97f4a7c15ull,
                              "train.shuffle");
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t hit_sum = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      const size_t hi = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
      BatchInput batch = assemble_batch(spec, ds, order, at, hi);

      Tape tape;
      std::map<std::string, int> pvars;
      const int logits = model_forward(tape, out.params, batch, Mode::train, &dropout_rng, &pvars);
      const int loss = tape.mean_cross_entropy(logits, batch.labels);
      const double loss_val = tape.val(loss).v[0];
      ++out.history.steps;
      if (!std::isfinite(loss_val))
        throw std::runtime_error("training diverged (non-finite loss) at step " +
                                 std::to_string(out.history.steps));
      tape.backward(loss);

      std::map<std::string, Tensor> grads;
      for (const auto& [name, id] : pvars) {
        grads.emplace(name, tape.grad(id));
        if (name.rfind("embedder.", 0) == 0)
          for (double g : tape.grad(id).v)
            out.history.max_embedder_grad = std::max(out.history.max_embedder_grad, std::abs(g));
      }
      adam.step(out.params, grads, cfg.lr);
      ++out.params.step;

      loss_sum += loss_val * static_cast<double>(hi - at);
      const Tensor& lv = tape.val(logits);
      for (size_t n = 0; n < hi - at; ++n) {
        const int p = lv.at(static_cast<int>(n), 1) > lv.at(static_cast<int>(n), 0) ? 1 : 0;
        if (p == batch.labels[n]) ++hit_sum;
      }
    }

    out.history.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    out.history.train_acc.push_back(static_cast<double>(hit_sum) /
                                    static_cast<double>(order.size()));

    if (!val_idx.empty()) {
      const double vacc = accuracy_of(predict(out.params, ds, val_idx), ds, val_idx);
      out.history.val_acc.push_back(vacc);
      if (out.history.best_epoch < 0 || vacc > out.history.best_val_acc) {
        out.history.best_val_acc = vacc;
        out.history.best_epoch = epoch;
        best = out.params;
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
      }
      out.history.epochs_run = epoch;
      if (epochs_since_best >= cfg.early_stop_patience) break;
    } else {
      out.history.val_acc.push_back(std::numeric_limits<double>::quiet_NaN());
      out.history.epochs_run = epoch;
    }
  }

  if (!val_idx.empty()) out.params = best;
  out.history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return out;
}

std::string history_csv(const TrainHistory& h, uint64_t config_hash) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n",
                static_cast<unsigned long long>(config_hash));
  out += buf;
  out += "epoch,train_loss,train_acc,val_acc\n";
  for (int e = 0; e < h.epochs_run; ++e) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e + 1,
                  h.train_loss[static_cast<size_t>(e)], h.train_acc[static_cast<size_t>(e)],
                  h.val_acc[static_cast<size_t>(e)]);
    out += buf;
  }
  return out;
}

}  // namespace eegcid
