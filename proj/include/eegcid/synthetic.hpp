#pragma once

#include "eegcid/common.hpp"
#include "eegcid/types.hpp"

namespace eegcid {

// Deterministic surrogate data with a known generative model. Each epoch is
//
//   e[c,t] = y * amp(profile) * sign(profile) * pattern[c] * g(t - latency(profile)) + noise[c,t]
//
// with y = +1 for targets, -1 for distractors, g a unit-amplitude Gaussian
// bump (0.1 s full width at half maximum), pattern a fixed unit-norm spatial
// vector drawn once per dataset, and unit-power pink noise per channel. The
// effect rule maps profile bits onto latency / polarity / amplitude, which is
// what makes the identification attributes informative (or not, for the null
// rule).
Dataset generate_synthetic(const SyntheticSpec& spec);

// Ground-truth evoked parameters for one profile under a given rule.
struct EvokedParams {
  double latency_s = 0.0;  // bump center relative to the trigger
  double sign = 1.0;       // spatial polarity
  double amplitude = 1.0;  // template amplitude over unit-power noise
};

EvokedParams evoked_params(const SyntheticSpec& spec, const SubjectProfile& profile);

// The fixed spatial pattern of a dataset (unit norm, depends only on
// spec.seed and channel count).
std::vector<double> synthetic_pattern(const SyntheticSpec& spec);

// Noise-free profile-conditioned target template over one raw-rate epoch
// window, row-major C x ceil(1.2 * fs). Distractors are its negation.
std::vector<double> synthetic_epoch_template(const SyntheticSpec& spec,
                                             const SubjectProfile& profile);

// Draws one raw-rate epoch (template + fresh pink noise) without building a
// whole recording; used for Monte-Carlo reference accuracies.
std::vector<double> synthetic_draw_epoch(const SyntheticSpec& spec, const SubjectProfile& profile,
                                         Label label, Rng& rng);

// The deterministic profile assignment used by the generator: subject k gets
// the k-th code of a fixed 16-entry cycle that covers all dominance/sex
// combinations within the first four entries.
SubjectProfile synthetic_profile(const SyntheticSpec& spec, int subject_index);

// Unit-power pink noise (about 1/f between fs/2^octaves and fs/2).
std::vector<double> pink_noise(int64_t n, Rng& rng, int octaves = 10);

void validate_synthetic_spec(const SyntheticSpec& spec);

}  // namespace eegcid
