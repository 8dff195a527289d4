#pragma once

#include <vector>

#include "eegcid/filter.hpp"
#include "eegcid/types.hpp"

namespace eegcid {

enum class NormScope { channel, epoch };

struct PreprocessConfig {
  double band_low_hz = 1.0;
  double band_high_hz = 30.0;
  double target_fs = 64.0;
  double epoch_seconds = 1.2;
  int filter_order = 4;          // prototype order; applied forward-backward
  double eps = 1e-12;            // variance floor for normalization
  NormScope norm_scope = NormScope::channel;

  int epoch_len() const { return epoch_samples(target_fs, epoch_seconds); }
  void validate() const;
};

// Subtracts the instantaneous mastoid mean from every channel.
RawRecording rereference(const RawRecording& rec);

// Zero-phase Butterworth band-pass, per channel.
RawRecording bandpass(const RawRecording& rec, const PreprocessConfig& cfg);

// Rate conversion to cfg.target_fs. Integer ratios decimate by stride; other
// ratios go through windowed-sinc interpolation (signal is already
// band-limited well under the new Nyquist). Event indices are rescaled by
// floor(index * target_fs / fs).
RawRecording downsample(const RawRecording& rec, const PreprocessConfig& cfg);

// Cuts one [event, event + epoch_len) window per trigger.
std::vector<TrialEpoch> epoch(const RawRecording& rec, const PreprocessConfig& cfg);

// Shifts/scales to zero mean, unit variance (population variance) per channel
// (or over the whole block when cfg.norm_scope == epoch). Rows under the
// variance floor are zeroed and the epoch marked degenerate.
TrialEpoch normalize(const TrialEpoch& e, const PreprocessConfig& cfg);

// rereference -> bandpass -> downsample -> epoch -> normalize over every
// recording; emits a preprocessed-stage dataset.
Dataset preprocess_pipeline(const Dataset& ds, const PreprocessConfig& cfg);

}  // namespace eegcid
