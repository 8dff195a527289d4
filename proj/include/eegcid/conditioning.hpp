#pragma once

#include <array>
#include <functional>

#include "eegcid/tensor.hpp"
#include "eegcid/types.hpp"

namespace eegcid {

constexpr int kProfileBits = 4;
constexpr int kEmbedDim = 16;

// Bit order: (dominance, sex, music_education, active_musician),
// auditory -> 1, visual -> 0.
struct ProfileCode {
  std::array<int, kProfileBits> bits{};

  int value() const { return bits[0] * 8 + bits[1] * 4 + bits[2] * 2 + bits[3]; }
  bool operator==(const ProfileCode& o) const { return bits == o.bits; }
  bool operator<(const ProfileCode& o) const { return value() < o.value(); }
};

// Affine 4 -> 16 map. A lookup-table embedder also exists at the model level
// (one 16-vector per code); this type is the default route.
struct EmbedderParams {
  Tensor W{std::vector<int>{kEmbedDim, kProfileBits}};
  Tensor b{std::vector<int>{kEmbedDim}};
};

// EEG rows followed by 16 constant identification rows.
struct FusedEpoch {
  std::string subject_id;
  int eeg_channels = 0;
  int n_samples = 0;
  Tensor data;  // (eeg_channels + kEmbedDim) x n_samples
  Label label = Label::target;
  Condition condition = Condition::visual;
};

ProfileCode encode_profile(const SubjectProfile& p);

// e = W * bits + b. No nonlinearity; equal codes give bit-identical outputs.
std::vector<double> embed(const ProfileCode& code, const EmbedderParams& theta);

// Appends e (tiled across time) as 16 extra channels. EEG rows are copied
// verbatim.
FusedEpoch fuse(const TrialEpoch& epoch, const std::vector<double>& e);

// Streams fused epochs for the given instance indices; the embedding is
// recomputed from theta at call time, so a training loop that mutates theta
// between steps sees fresh values.
void condition_dataset(const Dataset& ds, const std::vector<int>& indices,
                       const EmbedderParams& theta,
                       const std::function<void(const FusedEpoch&)>& sink);

// True when the 16x4 weight has full column rank (distinct observed codes
// then map to distinct embeddings).
bool embedder_has_rank4(const Tensor& W, double tol = 1e-10);

}  // namespace eegcid
