#pragma once

#include <map>
#include <optional>

#include "eegcid/split.hpp"
#include "eegcid/train.hpp"

namespace eegcid {

struct GroupScore {
  size_t n = 0;
  size_t hits = 0;
  double acc() const { return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0; }
};

struct EvalReport {
  GroupScore overall;
  std::optional<GroupScore> within;
  std::optional<GroupScore> unseen;
  std::map<std::string, GroupScore> per_condition;
  std::map<std::string, GroupScore> per_subject;
  // dominance group -> split name -> score; absent groups are simply missing.
  std::map<std::string, std::map<std::string, GroupScore>> per_dominance;
  GroupScore recall_target;      // over true targets
  GroupScore recall_distractor;  // over true distractors
};

// Scores the two test sets (either may be empty, but not both). Breakdown
// keys come from epoch metadata and subject profiles.
EvalReport evaluate(ModelParams& params, const Dataset& ds, const std::vector<int>& within_idx,
                    const std::vector<int>& unseen_idx);

std::string eval_report_json(const EvalReport& r, uint64_t config_hash);
std::string eval_report_csv(const EvalReport& r, uint64_t config_hash);

struct AblationCell {
  Backbone backbone = Backbone::eegnet;
  bool use_ids = false;
  double within_acc = 0.0;
  double unseen_acc = 0.0;
};

struct AblationRun {
  std::vector<AblationCell> cells;
  std::vector<TrainResult> models;     // aligned with cells
  std::vector<EvalReport> reports;     // aligned with cells

  // delta of (+IDs - baseline) for one backbone.
  std::pair<double, double> delta(Backbone b) const;
  const AblationCell& cell(Backbone b, bool use_ids) const;
};

// Trains baseline and +IDs variants of every requested backbone on the same
// instance split with a shared seed, so tensors common to a pair start from
// identical values and the measured delta isolates the conditioning branch.
AblationRun ablation_table(const Dataset& ds, const std::vector<Backbone>& backbones,
                           const TrainConfig& cfg, const SplitSpec& split,
                           const InstanceSplit& inst, const ModelSpec& base_spec);

std::string ablation_csv(const AblationRun& run, uint64_t config_hash);
std::string ablation_json(const AblationRun& run, uint64_t config_hash);

// Accuracy by subject dominance group for each split; groups with no
// subjects are reported absent rather than zero.
std::map<std::string, std::map<std::string, GroupScore>> dominance_eval(
    ModelParams& params, const Dataset& ds, const std::vector<int>& within_idx,
    const std::vector<int>& unseen_idx);

}  // namespace eegcid
