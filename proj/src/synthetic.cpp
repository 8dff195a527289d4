#include "eegcid/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace eegcid {

namespace {

constexpr double kBaseLatencyS = 0.30;
constexpr double kBumpFwhmS = 0.10;
constexpr double kEventSpacingS = 1.5;

// Profile codes cycled over subjects. The first four cover every
// (dominance, sex) combination; fourteen subjects produce fourteen distinct
// codes. Code layout: dominance*8 + sex*4 + music_education*2 + active_musician.
constexpr int kCodeCycle[16] = {0, 12, 4, 8, 2, 14, 6, 10, 1, 13, 5, 9, 3, 15, 7, 11};

double bump_sigma_s() { return kBumpFwhmS / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

std::string subject_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%03d", k);
  return buf;
}

}  // namespace

void validate_synthetic_spec(const SyntheticSpec& spec) {
  if (spec.n_subjects < 1) throw ValidationError("n_subjects must be >= 1");
  if (spec.epochs_per_subject < 2) throw ValidationError("epochs_per_subject must be >= 2");
  if (spec.channels < 3) throw ValidationError("channels must be >= 3 (two are mastoids)");
  if (spec.fs <= 0.0) throw ValidationError("fs must be positive");
  if (std::isnan(spec.snr) || spec.snr < 0.0) throw ValidationError("snr must be >= 0");
}

SubjectProfile synthetic_profile(const SyntheticSpec& spec, int subject_index) {
  const int code = kCodeCycle[subject_index % 16];
  SubjectProfile p;
  p.subject_id = subject_name(subject_index);
  p.dominance = (code & 8) ? Dominance::auditory : Dominance::visual;
  p.sex = (code & 4) ? 1 : 0;
  p.music_education = (code & 2) ? 1 : 0;
  p.active_musician = (code & 1) ? 1 : 0;
  (void)spec;
  return p;
}

EvokedParams evoked_params(const SyntheticSpec& spec, const SubjectProfile& profile) {
  const EffectRule& fx = spec.effect;
  EvokedParams ep;
  ep.latency_s = kBaseLatencyS +
                 (profile.dominance == Dominance::auditory ? fx.dominance_latency_shift_s : 0.0);
  ep.sign = (fx.sex_flips_sign && profile.sex == 1) ? -1.0 : 1.0;
  const double base_amp = std::isinf(spec.snr) ? 1.0 : spec.snr;
  double scale = 1.0;
  scale *= profile.music_education ? (1.0 + fx.music_amp_frac) : (1.0 - fx.music_amp_frac);
  scale *= profile.active_musician ? (1.0 + fx.music_amp_frac) : (1.0 - fx.music_amp_frac);
  ep.amplitude = base_amp * scale;
  return ep;
}

std::vector<double> synthetic_pattern(const SyntheticSpec& spec) {
  Rng rng = rng_for(spec.seed, "synthetic.pattern");
  std::vector<double> pattern(static_cast<size_t>(spec.channels));
  double norm = 0.0;
  for (double& w : pattern) {
    w = rng.normal();
    norm += w * w;
  }
  norm = std::sqrt(norm);
  for (double& w : pattern) w /= norm;
  return pattern;
}

std::vector<double> pink_noise(int64_t n, Rng& rng, int octaves) {
  // Voss-McCartney: sum of held white sources updated at octave-spaced rates,
  // plus one per-sample source. Normalized to unit power empirically so the
  // "unit power" contract is exact for the generated block.
  std::vector<double> rows(static_cast<size_t>(octaves));
  for (double& r : rows) r = rng.normal();
  std::vector<double> y(static_cast<size_t>(n));
  for (int64_t t = 0; t < n; ++t) {
    for (int o = 0; o < octaves; ++o) {
      const int64_t period = int64_t{1} << (o + 1);
      if (t % period == period / 2 || t == 0)
        rows[static_cast<size_t>(o)] = rng.normal();
    }
    double s = rng.normal();
    for (double r : rows) s += r;
    y[static_cast<size_t>(t)] = s;
  }
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (double& v : y) v = (v - mean) * inv;
  return y;
}

std::vector<double> synthetic_epoch_template(const SyntheticSpec& spec,
                                             const SubjectProfile& profile) {
  const EvokedParams ep = evoked_params(spec, profile);
  const auto pattern = synthetic_pattern(spec);
  const int64_t T = epoch_span_at_load(spec.fs);
  const double sigma = bump_sigma_s();
  std::vector<double> tpl(static_cast<size_t>(spec.channels) * T, 0.0);
  for (int c = 0; c < spec.channels; ++c) {
    const double w = ep.amplitude * ep.sign * pattern[static_cast<size_t>(c)];
    for (int64_t t = 0; t < T; ++t) {
      const double dt = static_cast<double>(t) / spec.fs - ep.latency_s;
      tpl[static_cast<size_t>(c) * T + t] = w * std::exp(-dt * dt / (2.0 * sigma * sigma));
    }
  }
  return tpl;
}

std::vector<double> synthetic_draw_epoch(const SyntheticSpec& spec, const SubjectProfile& profile,
                                         Label label, Rng& rng) {
  auto e = synthetic_epoch_template(spec, profile);
  const double y = (label == Label::target) ? 1.0 : -1.0;
  const int64_t T = epoch_span_at_load(spec.fs);
  const bool noiseless = std::isinf(spec.snr);
  for (int c = 0; c < spec.channels; ++c) {
    std::vector<double> eta;
    if (!noiseless) eta = pink_noise(T, rng);
    for (int64_t t = 0; t < T; ++t) {
      double& v = e[static_cast<size_t>(c) * T + t];
      v = y * v + (noiseless ? 0.0 : eta[static_cast<size_t>(t)]);
    }
  }
  return e;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  validate_synthetic_spec(spec);
  const auto pattern = synthetic_pattern(spec);
  const double sigma = bump_sigma_s();
  const auto spacing = static_cast<int64_t>(std::ceil(kEventSpacingS * spec.fs));
  const auto margin = static_cast<int64_t>(std::ceil(0.25 * spec.fs));
  const int64_t n_samples = margin + spacing * spec.epochs_per_subject + margin;
  const bool noiseless = std::isinf(spec.snr);

  Dataset ds;
  ds.stage = Stage::raw;
  for (int k = 0; k < spec.n_subjects; ++k) {
    const SubjectProfile profile = synthetic_profile(spec, k);
    ds.profiles[profile.subject_id] = profile;
    const EvokedParams ep = evoked_params(spec, profile);

    RawRecording rec;
    rec.subject_id = profile.subject_id;
    rec.channels = spec.channels;
    rec.n_samples = n_samples;
    rec.fs = spec.fs;
    rec.samples.assign(static_cast<size_t>(spec.channels) * n_samples, 0.0);
    for (int c = 0; c < spec.channels; ++c) {
      char name[16];
      std::snprintf(name, sizeof(name), "ch%02d", c);
      rec.channel_names.emplace_back(name);
    }
    rec.mastoid_indices = {spec.channels - 2, spec.channels - 1};

    Rng noise_rng = rng_for(spec.seed, "synthetic.noise." + profile.subject_id);
    if (!noiseless) {
      for (int c = 0; c < spec.channels; ++c) {
        auto eta = pink_noise(n_samples, noise_rng);
        std::copy(eta.begin(), eta.end(), rec.row(c));
      }
    }

    for (int i = 0; i < spec.epochs_per_subject; ++i) {
      Event ev;
      ev.sample_index = margin + spacing * i;
      ev.label = (i % 2 == 0) ? Label::target : Label::distractor;  // balanced
      ev.condition = static_cast<Condition>((i / 2) % kNumConditions);
      rec.events.push_back(ev);

      const double y = (ev.label == Label::target) ? 1.0 : -1.0;
      const double center = static_cast<double>(ev.sample_index) / spec.fs + ep.latency_s;
      const auto lo = static_cast<int64_t>(std::floor((center - 5.0 * sigma) * spec.fs));
      const auto hi = static_cast<int64_t>(std::ceil((center + 5.0 * sigma) * spec.fs));
      for (int64_t t = std::max<int64_t>(lo, 0); t <= std::min<int64_t>(hi, n_samples - 1); ++t) {
        const double dt = static_cast<double>(t) / spec.fs - center;
        const double g = std::exp(-dt * dt / (2.0 * sigma * sigma));
        const double v = y * ep.amplitude * ep.sign * g;
        for (int c = 0; c < spec.channels; ++c)
          rec.at(c, t) += v * pattern[static_cast<size_t>(c)];
      }
    }
    validate_recording(rec);
    ds.recordings.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace eegcid
