#include "eegcid/types.hpp"

#include <algorithm>
#include <set>

namespace eegcid {

std::string to_string(Label l) { return l == Label::target ? "target" : "distractor"; }

std::string to_string(Condition c) {
  switch (c) {
    case Condition::visual: return "visual";
    case Condition::rhythmic: return "rhythmic";
    case Condition::beep: return "beep";
    case Condition::rhythmic_beep: return "rhythmic+beep";
  }
  return "?";
}

std::string to_string(Dominance d) { return d == Dominance::auditory ? "auditory" : "visual"; }

Label label_from_string(const std::string& s) {
  if (s == "target") return Label::target;
  if (s == "distractor") return Label::distractor;
  throw ValidationError("unknown label '" + s + "'");
}

Condition condition_from_string(const std::string& s) {
  if (s == "visual") return Condition::visual;
  if (s == "rhythmic") return Condition::rhythmic;
  if (s == "beep") return Condition::beep;
  if (s == "rhythmic+beep") return Condition::rhythmic_beep;
  throw ValidationError("unknown condition '" + s + "'");
}

Dominance dominance_from_string(const std::string& s) {
  if (s == "auditory") return Dominance::auditory;
  if (s == "visual") return Dominance::visual;
  throw ValidationError("unknown dominance '" + s + "'");
}

std::vector<std::string> Dataset::subject_ids() const {
  std::set<std::string> ids;
  for (const auto& r : recordings) ids.insert(r.subject_id);
  for (const auto& e : epochs) ids.insert(e.subject_id);
  return {ids.begin(), ids.end()};
}

void validate_recording(const RawRecording& rec) {
  const std::string who = "subject '" + rec.subject_id + "': ";
  if (rec.channels <= 0) throw ValidationError(who + "no channels");
  if (rec.fs <= 0.0) throw ValidationError(who + "sampling rate must be positive");
  if (rec.n_samples <= 0) throw ValidationError(who + "empty recording");
  if (rec.samples.size() != static_cast<size_t>(rec.channels) * rec.n_samples)
    throw ValidationError(who + "sample buffer does not match channels x n_samples");
  if (!rec.channel_names.empty() && rec.channel_names.size() != static_cast<size_t>(rec.channels))
    throw ValidationError(who + "channel_names length mismatch");
  if (rec.mastoid_indices.empty()) throw ValidationError(who + "mastoid index set is empty");
  std::set<int> seen;
  for (int m : rec.mastoid_indices) {
    if (m < 0 || m >= rec.channels)
      throw ValidationError(who + "mastoid index " + std::to_string(m) + " out of range");
    if (!seen.insert(m).second)
      throw ValidationError(who + "duplicate mastoid index " + std::to_string(m));
  }
  const int64_t span = epoch_span_at_load(rec.fs);
  for (size_t i = 0; i < rec.events.size(); ++i) {
    const Event& ev = rec.events[i];
    if (ev.sample_index < 0 || ev.sample_index >= rec.n_samples)
      throw ValidationError(who + "event " + std::to_string(i) + " at sample " +
                            std::to_string(ev.sample_index) + " outside recording");
    if (ev.sample_index + span > rec.n_samples)
      throw ValidationError(who + "event " + std::to_string(i) + " at sample " +
                            std::to_string(ev.sample_index) + " leaves no room for a full epoch");
  }
}

void validate_profile(const SubjectProfile& p) {
  const std::string who = "profile '" + p.subject_id + "': ";
  if (p.subject_id.empty()) throw ValidationError("profile with empty subject_id");
  auto bit = [&](int v, const char* name) {
    if (v != 0 && v != 1)
      throw ValidationError(who + std::string(name) + " must be 0 or 1");
  };
  bit(p.sex, "sex");
  bit(p.music_education, "music_education");
  bit(p.active_musician, "active_musician");
}

void validate_epoch(const TrialEpoch& e, int expected_samples) {
  const std::string who = "epoch of '" + e.subject_id + "': ";
  if (e.n_samples != expected_samples)
    throw ValidationError(who + "length " + std::to_string(e.n_samples) + ", expected " +
                          std::to_string(expected_samples));
  if (e.data.size() != static_cast<size_t>(e.channels) * e.n_samples)
    throw ValidationError(who + "data buffer does not match channels x n_samples");
}

void validate_dataset(const Dataset& ds) {
  for (const auto& [id, p] : ds.profiles) {
    validate_profile(p);
    if (p.subject_id != id) throw ValidationError("profile key/id mismatch for '" + id + "'");
  }
  auto require_profile = [&](const std::string& id) {
    if (!ds.profiles.count(id))
      throw ValidationError("missing profile for subject '" + id + "'");
  };
  if (ds.stage == Stage::raw) {
    for (const auto& r : ds.recordings) {
      validate_recording(r);
      require_profile(r.subject_id);
    }
  } else {
    for (const auto& e : ds.epochs) require_profile(e.subject_id);
  }
}

}  // namespace eegcid
