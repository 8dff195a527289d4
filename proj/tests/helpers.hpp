#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "eegcid/models.hpp"
#include "eegcid/preprocess.hpp"
#include "eegcid/synthetic.hpp"
#include "eegcid/train.hpp"

#include <unistd.h>

namespace testutil {

using namespace eegcid;

// Scratch directory removed on destruction.
struct TmpDir {
  std::filesystem::path path;
  explicit TmpDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("eegcid_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline std::string slurp(const std::filesystem::path& f) {
  std::ifstream in(f, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-8) return 0.0;  // both negligible
  return std::abs(a - b) / scale;
}

// Cross-entropy loss of one eval-mode forward; the scalar probed by the
// finite-difference checks.
inline double model_loss(ModelParams params, const BatchInput& batch) {
  Tape tape;
  const int logits = model_forward(tape, params, batch, Mode::eval, nullptr, nullptr);
  const int loss = tape.mean_cross_entropy(logits, batch.labels);
  return tape.val(loss).v[0];
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // tensor/coordinate of the worst error
  int coords_checked = 0;
};

// Central finite differences against the tape gradient, sampling up to
// `coords_per_tensor` evenly spaced coordinates of every trainable tensor.
// Stochastic layers must be off (eval mode keeps batch-norm on running
// statistics and disables dropout).
inline GradCheckResult grad_check(const ModelSpec& spec, uint64_t seed, const BatchInput& batch,
                                  int coords_per_tensor = 12, double h = 1e-5) {
  ModelParams params = init_params(spec, seed);

  Tape tape;
  std::map<std::string, int> pvars;
  const int logits = model_forward(tape, params, batch, Mode::eval, nullptr, &pvars);
  const int loss = tape.mean_cross_entropy(logits, batch.labels);
  tape.backward(loss);

  GradCheckResult res;
  for (const auto& [name, var] : pvars) {
    const Tensor analytic = tape.grad(var);
    Tensor& w = params.tensors.at(name);
    const size_t n = w.numel();
    const size_t step = std::max<size_t>(1, n / static_cast<size_t>(coords_per_tensor));
    for (size_t i = 0; i < n; i += step) {
      const double keep = w.v[i];
      w.v[i] = keep + h;
      const double up = model_loss(params, batch);
      w.v[i] = keep - h;
      const double dn = model_loss(params, batch);
      w.v[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double err = rel_err(analytic.v[i], fd);
      ++res.coords_checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = name + "[" + std::to_string(i) + "] ad=" + std::to_string(analytic.v[i]) +
                    " fd=" + std::to_string(fd);
      }
    }
  }
  return res;
}

// Balanced synthetic batch with a strong, profile-independent evoked
// response; small and separable, for overfit and gradient probes.
inline Dataset tiny_preprocessed(int n_subjects, int epochs_per_subject, int channels, double snr,
                                 uint64_t seed, bool null_effect = true) {
  SyntheticSpec spec;
  spec.n_subjects = n_subjects;
  spec.epochs_per_subject = epochs_per_subject;
  spec.channels = channels;
  spec.fs = 256.0;
  spec.snr = snr;
  spec.seed = seed;
  if (null_effect) spec.effect = EffectRule::null_effect();
  return preprocess_pipeline(generate_synthetic(spec), PreprocessConfig{});
}

inline std::vector<int> all_indices(const Dataset& ds) {
  std::vector<int> idx(ds.epochs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace testutil
