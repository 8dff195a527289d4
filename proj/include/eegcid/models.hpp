#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "eegcid/autodiff.hpp"
#include "eegcid/conditioning.hpp"
#include "eegcid/tensor.hpp"
#include "eegcid/types.hpp"

namespace eegcid {

enum class Backbone { eegnet, lstm, dmu };
enum class EmbedderKind { affine, table };

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

struct EegnetConfig {
  int f1 = 16;
  int depth_mult = 2;        // 16 -> 32 maps
  int f2 = 64;
  int temporal_kernel = 32;  // ~0.5 s at 64 Hz
  int separable_kernel = 16;
  int pool1 = 4;
  int pool2 = 8;
  double dropout = 0.25;
};

struct ModelSpec {
  Backbone backbone = Backbone::eegnet;
  bool use_ids = false;
  int input_channels = 0;  // EEG channels, plus 16 when use_ids
  int T = 77;
  int hidden = 64;
  EegnetConfig eegnet;
  int dmu_delays = 20;
  EmbedderKind embedder = EmbedderKind::affine;

  int eeg_channels() const { return use_ids ? input_channels - kEmbedDim : input_channels; }
  int eegnet_flat_len() const { return eegnet.f2 * ((T / eegnet.pool1) / eegnet.pool2); }
};

// Enforces the fixed architecture contract (kernel counts, hidden width).
// Tests may build nonstandard specs directly; every public entry point that
// trains or loads models calls this.
void validate_spec(const ModelSpec& spec);

struct ModelParams {
  ModelSpec spec;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, BnState> bn;
  uint64_t seed = 0;
  int64_t step = 0;
};

ModelParams init_params(const ModelSpec& spec, uint64_t seed);

size_t parameter_count(const ModelParams& p);

// One batch of inputs: EEG rows, profile codes (bits, or one-hot for the
// table embedder; empty unless use_ids), labels aligned with rows.
struct BatchInput {
  Tensor eeg;    // [N, C, T]
  Tensor codes;  // [N, 4] or [N, 16]
  std::vector<int> labels;

  int n() const { return eeg.ndim() == 3 ? eeg.dim(0) : 0; }
};

// Builds the full differentiable graph for a batch (embedding + fusion +
// backbone) and returns the logits node. Fills name -> leaf id for every
// trainable tensor when param_vars is given.
int model_forward(Tape& tape, ModelParams& params, const BatchInput& batch, Mode mode,
                  Rng* dropout_rng, std::map<std::string, int>* param_vars);

// Eval-mode logits for a whole batch; pure function of (params, input).
Tensor forward_batch(ModelParams& params, const BatchInput& batch);

// Single-epoch dispatch.
std::array<double, 2> forward(ModelParams& params, const TrialEpoch& epoch);
std::array<double, 2> forward(ModelParams& params, const FusedEpoch& fused,
                              const Tensor& codes_row);
std::array<double, 2> forward_with_profile(ModelParams& params, const TrialEpoch& epoch,
                                           const SubjectProfile& profile);

// Profile code tensor in the layout the model's embedder consumes.
Tensor code_row(const ModelSpec& spec, const SubjectProfile& profile);

// The embedder weights in the conditioning-module layout (affine kind only).
EmbedderParams extract_embedder(const ModelParams& params);

// Per-step hidden states of the delayed-memory cell, eval mode (used to
// check causality and the single-delay degeneracy).
std::vector<std::vector<double>> dmu_hidden_trace(ModelParams& params, const TrialEpoch& epoch);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& file);
ModelParams load_checkpoint(const std::filesystem::path& file);

}  // namespace eegcid
