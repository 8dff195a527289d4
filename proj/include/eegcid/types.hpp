#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eegcid/common.hpp"

namespace eegcid {

enum class Label : uint8_t { target = 0, distractor = 1 };
enum class Condition : uint8_t { visual = 0, rhythmic = 1, beep = 2, rhythmic_beep = 3 };
enum class Dominance : uint8_t { visual = 0, auditory = 1 };
enum class Stage : uint8_t { raw = 0, preprocessed = 1 };

std::string to_string(Label l);
std::string to_string(Condition c);
std::string to_string(Dominance d);
Label label_from_string(const std::string& s);
Condition condition_from_string(const std::string& s);
Dominance dominance_from_string(const std::string& s);

constexpr int kNumConditions = 4;

struct Event {
  int64_t sample_index = 0;
  Label label = Label::target;
  Condition condition = Condition::visual;
};

// Continuous multichannel recording in microvolts, C x N row-major.
struct RawRecording {
  std::string subject_id;
  int channels = 0;
  int64_t n_samples = 0;
  std::vector<double> samples;  // channels x n_samples
  double fs = 0.0;
  std::vector<std::string> channel_names;
  std::vector<int> mastoid_indices;
  std::vector<Event> events;

  double* row(int c) { return samples.data() + static_cast<size_t>(c) * n_samples; }
  const double* row(int c) const { return samples.data() + static_cast<size_t>(c) * n_samples; }
  double& at(int c, int64_t t) { return samples[static_cast<size_t>(c) * n_samples + t]; }
  double at(int c, int64_t t) const { return samples[static_cast<size_t>(c) * n_samples + t]; }
};

// The four per-subject identification attributes consumed by the conditioner.
struct SubjectProfile {
  std::string subject_id;
  Dominance dominance = Dominance::visual;
  int sex = 0;              // {0,1}
  int music_education = 0;  // {0,1}
  int active_musician = 0;  // {0,1}
};

// One preprocessed C x T segment, unitless after per-channel normalization.
struct TrialEpoch {
  std::string subject_id;
  int channels = 0;
  int n_samples = 0;  // T
  std::vector<double> data;  // channels x n_samples
  Label label = Label::target;
  Condition condition = Condition::visual;
  bool degenerate = false;  // set when a channel had ~zero variance

  double& at(int c, int t) { return data[static_cast<size_t>(c) * n_samples + t]; }
  double at(int c, int t) const { return data[static_cast<size_t>(c) * n_samples + t]; }
};

struct Dataset {
  Stage stage = Stage::raw;
  std::vector<RawRecording> recordings;  // raw stage
  std::vector<TrialEpoch> epochs;        // preprocessed stage
  std::map<std::string, SubjectProfile> profiles;

  std::vector<std::string> subject_ids() const;
  size_t subject_count() const { return subject_ids().size(); }
};

// Profile-bit -> evoked-response mapping used by the synthetic generator.
// The all-zero rule produces data with no profile dependence at all.
struct EffectRule {
  double dominance_latency_shift_s = 0.15;  // added to latency when auditory
  bool sex_flips_sign = true;               // sex=1 inverts the spatial pattern
  double music_amp_frac = 0.10;             // each music bit scales amplitude by (1 +/- frac)

  static EffectRule null_effect() { return EffectRule{0.0, false, 0.0}; }
  bool is_null() const {
    return dominance_latency_shift_s == 0.0 && !sex_flips_sign && music_amp_frac == 0.0;
  }
};

struct SyntheticSpec {
  int n_subjects = 14;
  int epochs_per_subject = 300;
  int channels = 8;
  double fs = 256.0;
  double snr = 1.0;  // evoked amplitude over unit-power noise; +inf means noiseless
  EffectRule effect;
  uint64_t seed = 1;
};

// Subjects held out entirely ("unseen") plus the per-instance carve-up of the
// remaining subjects' epochs into train and within-test sets.
struct SplitSpec {
  std::vector<std::string> train_ids;
  std::vector<std::string> unseen_ids;
  double within_test_fraction = 0.2;
  uint64_t seed = 0;
};

struct InstanceSplit {
  std::vector<int> train;        // epoch indices into Dataset::epochs
  std::vector<int> within_test;  // epochs of train subjects held out
  std::vector<int> unseen_test;  // every epoch of unseen subjects
};

// Epoch length of the 1.2 s window at a given rate, rounded to nearest sample.
inline int epoch_samples(double fs, double seconds = 1.2) {
  return static_cast<int>(std::llround(seconds * fs));
}

// Samples an event needs ahead of it in the source recording.
inline int64_t epoch_span_at_load(double fs, double seconds = 1.2) {
  return static_cast<int64_t>(std::ceil(seconds * fs));
}

void validate_recording(const RawRecording& rec);
void validate_profile(const SubjectProfile& p);
void validate_epoch(const TrialEpoch& e, int expected_samples);
void validate_dataset(const Dataset& ds);

}  // namespace eegcid
