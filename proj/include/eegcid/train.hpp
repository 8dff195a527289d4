#pragma once

#include <optional>
#include <set>

#include "eegcid/models.hpp"
#include "eegcid/types.hpp"

namespace eegcid {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 128;
  int max_epochs = 100;
  int early_stop_patience = 10;  // epochs without a new best validation accuracy
  double val_fraction = 0.1;     // carved out of the training instances
  uint64_t seed = 1;
  std::string precision = "f64";

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> train_acc;
  std::vector<double> val_acc;  // NaN entries when no validation carve-out
  int epochs_run = 0;
  int best_epoch = -1;  // 1-based; -1 when no validation set
  double best_val_acc = 0.0;
  int64_t steps = 0;
  double max_embedder_grad = 0.0;  // stays 0 for models without the conditioner
  double wall_seconds = 0.0;       // reported, never written into artifacts
};

struct TrainResult {
  ModelParams params;  // best-validation checkpoint (final params without validation)
  TrainHistory history;
};

// Adam with bias correction; epsilon is added after the square root.
struct AdamState {
  std::map<std::string, std::pair<Tensor, Tensor>> moments;  // name -> (m, v)
  int64_t t = 0;

  void step(ModelParams& params, const std::map<std::string, Tensor>& grads, double lr);
};

// End-to-end supervised training of one model on the given instance indices.
// `forbidden_subjects` hard-fails the run if any training epoch belongs to a
// held-out subject.
TrainResult train(const ModelSpec& spec, const Dataset& ds, const std::vector<int>& train_indices,
                  const TrainConfig& cfg,
                  const std::set<std::string>& forbidden_subjects = {});

// Gathers a batch in the layout model_forward consumes.
BatchInput assemble_batch(const ModelSpec& spec, const Dataset& ds,
                          const std::vector<int>& indices, size_t begin, size_t end);

// argmax predictions (ties resolve to class 0) for the given epochs.
std::vector<int> predict(ModelParams& params, const Dataset& ds, const std::vector<int>& indices,
                         int eval_batch = 256);

std::string history_csv(const TrainHistory& h, uint64_t config_hash);

}  // namespace eegcid
