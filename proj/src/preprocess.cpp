#include "eegcid/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "eegcid/common.hpp"

namespace eegcid {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void PreprocessConfig::validate() const {
  if (!(0.0 < band_low_hz && band_low_hz < band_high_hz))
    throw ValidationError("band edges must satisfy 0 < low < high");
  if (!(band_high_hz < target_fs / 2.0))
    throw ValidationError("band_high must stay below the target Nyquist rate");
  if (epoch_seconds <= 0.0) throw ValidationError("epoch_seconds must be positive");
  if (eps <= 0.0) throw ValidationError("variance floor must be positive");
  if (filter_order < 2 || filter_order % 2 != 0)
    throw ValidationError("filter_order must be even and >= 2");
}

RawRecording rereference(const RawRecording& rec) {
  if (rec.mastoid_indices.empty())
    throw ValidationError("subject '" + rec.subject_id + "': mastoid index set is empty");
  RawRecording out = rec;
  const double inv = 1.0 / static_cast<double>(rec.mastoid_indices.size());
  for (int64_t t = 0; t < rec.n_samples; ++t) {
    double m = 0.0;
    for (int c : rec.mastoid_indices) m += rec.at(c, t);
    m *= inv;
    for (int c = 0; c < rec.channels; ++c) out.at(c, t) = rec.at(c, t) - m;
  }
  return out;
}

RawRecording bandpass(const RawRecording& rec, const PreprocessConfig& cfg) {
  if (rec.fs <= 2.0 * cfg.band_high_hz)
    throw ValidationError("subject '" + rec.subject_id + "': sampling rate " +
                          std::to_string(rec.fs) + " Hz too low for a " +
                          std::to_string(cfg.band_high_hz) + " Hz band edge");
  const Sos sos = butter_bandpass(cfg.filter_order, cfg.band_low_hz, cfg.band_high_hz, rec.fs);
  RawRecording out = rec;
  for (int c = 0; c < rec.channels; ++c) {
    std::vector<double> row(rec.row(c), rec.row(c) + rec.n_samples);
    row = sos_filtfilt(sos, row);
    std::copy(row.begin(), row.end(), out.row(c));
  }
  return out;
}

namespace {

// Windowed-sinc interpolation for non-integer rate ratios. The band-pass
// stage has already limited the content to < target Nyquist, so this is a
// pure resampling step.
std::vector<double> sinc_resample(const double* x, int64_t n, double fs_in, double fs_out,
                                  int64_t n_out) {
  const int half = 32;
  const double cutoff = 0.5 * std::min(fs_in, fs_out);
  const double sc = 2.0 * cutoff / fs_in;
  std::vector<double> y(static_cast<size_t>(n_out), 0.0);
  for (int64_t k = 0; k < n_out; ++k) {
    const double t = static_cast<double>(k) * fs_in / fs_out;  // position in input samples
    const auto center = static_cast<int64_t>(std::floor(t));
    double acc = 0.0;
    for (int64_t i = center - half + 1; i <= center + half; ++i) {
      if (i < 0 || i >= n) continue;
      const double d = t - static_cast<double>(i);
      const double arg = kPi * d * sc;
      const double sinc = (std::abs(arg) < 1e-12) ? 1.0 : std::sin(arg) / arg;
      const double win = 0.5 * (1.0 + std::cos(kPi * d / half));  // Hann taper
      acc += sinc * sc * win * x[i];
    }
    y[static_cast<size_t>(k)] = acc;
  }
  return y;
}

}  // namespace

RawRecording downsample(const RawRecording& rec, const PreprocessConfig& cfg) {
  const double fs_out = cfg.target_fs;
  RawRecording out;
  out.subject_id = rec.subject_id;
  out.channels = rec.channels;
  out.fs = fs_out;
  out.channel_names = rec.channel_names;
  out.mastoid_indices = rec.mastoid_indices;

  const double ratio = rec.fs / fs_out;
  const auto stride = static_cast<int64_t>(std::llround(ratio));
  const bool integer_ratio = std::abs(ratio - static_cast<double>(stride)) < 1e-9 && stride >= 1;

  if (integer_ratio) {
    const int64_t n_out = (rec.n_samples + stride - 1) / stride;  // keeps index 0
    out.n_samples = n_out;
    out.samples.resize(static_cast<size_t>(out.channels) * n_out);
    for (int c = 0; c < rec.channels; ++c)
      for (int64_t k = 0; k < n_out; ++k) out.at(c, k) = rec.at(c, k * stride);
  } else {
    const auto n_out = static_cast<int64_t>(std::floor(static_cast<double>(rec.n_samples - 1) *
                                                       fs_out / rec.fs)) + 1;
    out.n_samples = n_out;
    out.samples.resize(static_cast<size_t>(out.channels) * n_out);
    for (int c = 0; c < rec.channels; ++c) {
      auto row = sinc_resample(rec.row(c), rec.n_samples, rec.fs, fs_out, n_out);
      std::copy(row.begin(), row.end(), out.row(c));
    }
  }

  out.events.reserve(rec.events.size());
  for (const Event& ev : rec.events) {
    Event e2 = ev;
    e2.sample_index = static_cast<int64_t>(
        std::floor(static_cast<double>(ev.sample_index) * fs_out / rec.fs));
    out.events.push_back(e2);
  }
  return out;
}

std::vector<TrialEpoch> epoch(const RawRecording& rec, const PreprocessConfig& cfg) {
  const int T = cfg.epoch_len();
  std::vector<TrialEpoch> out;
  out.reserve(rec.events.size());
  for (size_t i = 0; i < rec.events.size(); ++i) {
    const Event& ev = rec.events[i];
    if (ev.sample_index < 0 || ev.sample_index + T > rec.n_samples)
      throw ValidationError("subject '" + rec.subject_id + "': event " + std::to_string(i) +
                            " at sample " + std::to_string(ev.sample_index) +
                            " does not fit a " + std::to_string(T) + "-sample epoch");
    TrialEpoch e;
    e.subject_id = rec.subject_id;
    e.channels = rec.channels;
    e.n_samples = T;
    e.data.resize(static_cast<size_t>(rec.channels) * T);
    e.label = ev.label;
    e.condition = ev.condition;
    for (int c = 0; c < rec.channels; ++c)
      for (int t = 0; t < T; ++t) e.at(c, t) = rec.at(c, ev.sample_index + t);
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

void normalize_span(double* x, size_t n, double eps, bool& degenerate) {
  double mean = 0.0;
  for (size_t t = 0; t < n; ++t) mean += x[t];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (size_t t = 0; t < n; ++t) {
    const double d = x[t] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  if (var < eps) {
    std::fill(x, x + n, 0.0);
    degenerate = true;
    return;
  }
  const double inv = 1.0 / std::sqrt(var);
  for (size_t t = 0; t < n; ++t) x[t] = (x[t] - mean) * inv;
}

}  // namespace

TrialEpoch normalize(const TrialEpoch& e, const PreprocessConfig& cfg) {
  TrialEpoch out = e;
  bool degenerate = false;
  if (cfg.norm_scope == NormScope::channel) {
    for (int c = 0; c < e.channels; ++c)
      normalize_span(out.data.data() + static_cast<size_t>(c) * e.n_samples,
                     static_cast<size_t>(e.n_samples), cfg.eps, degenerate);
  } else {
    normalize_span(out.data.data(), out.data.size(), cfg.eps, degenerate);
  }
  out.degenerate = e.degenerate || degenerate;
  return out;
}

Dataset preprocess_pipeline(const Dataset& ds, const PreprocessConfig& cfg) {
  cfg.validate();
  if (ds.stage != Stage::raw)
    throw ValidationError("preprocess expects a raw-stage dataset");
  Dataset out;
  out.stage = Stage::preprocessed;
  out.profiles = ds.profiles;
  for (const RawRecording& rec : ds.recordings) {
    RawRecording r = rereference(rec);
    r = bandpass(r, cfg);
    r = downsample(r, cfg);
    for (TrialEpoch& e : epoch(r, cfg)) out.epochs.push_back(normalize(e, cfg));
  }
  return out;
}

}  // namespace eegcid
