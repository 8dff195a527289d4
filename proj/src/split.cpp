#include "eegcid/split.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "eegcid/common.hpp"

namespace eegcid {

SplitSpec split_subjects(const Dataset& ds, int n_unseen, uint64_t seed,
                         double within_test_fraction) {
  std::vector<std::string> ids = ds.subject_ids();
  if (n_unseen < 0) throw ValidationError("n_unseen must be >= 0");
  if (static_cast<size_t>(n_unseen) >= ids.size())
    throw ValidationError("n_unseen (" + std::to_string(n_unseen) +
                          ") must be smaller than the subject count (" +
                          std::to_string(ids.size()) + ")");
  if (!(within_test_fraction >= 0.0 && within_test_fraction < 1.0))
    throw ValidationError("within_test_fraction must be in [0, 1)");

  // ids are sorted (set-backed); shuffle them with the seeded stream, then
  // the first n_unseen are held out.
  Rng rng = rng_for(seed, "split.subjects");
  rng.shuffle(ids);
  SplitSpec split;
  split.seed = seed;
  split.within_test_fraction = within_test_fraction;
  split.unseen_ids.assign(ids.begin(), ids.begin() + n_unseen);
  split.train_ids.assign(ids.begin() + n_unseen, ids.end());
  std::sort(split.unseen_ids.begin(), split.unseen_ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  return split;
}

InstanceSplit partition_instances(const Dataset& ds, const SplitSpec& split) {
  if (ds.stage != Stage::preprocessed)
    throw ValidationError("instance partition expects a preprocessed dataset");
  const std::set<std::string> unseen(split.unseen_ids.begin(), split.unseen_ids.end());
  const std::set<std::string> train_subj(split.train_ids.begin(), split.train_ids.end());

  // Cell = (subject, condition); epochs keep dataset order inside each cell.
  std::map<std::pair<std::string, int>, std::vector<int>> cells;
  InstanceSplit out;
  for (size_t i = 0; i < ds.epochs.size(); ++i) {
    const TrialEpoch& e = ds.epochs[i];
    if (unseen.count(e.subject_id)) {
      out.unseen_test.push_back(static_cast<int>(i));
    } else if (train_subj.count(e.subject_id)) {
      cells[{e.subject_id, static_cast<int>(e.condition)}].push_back(static_cast<int>(i));
    } else {
      throw ValidationError("epoch subject '" + e.subject_id + "' is in neither partition");
    }
  }

  for (auto& [key, idx] : cells) {
    Rng rng = rng_for(split.seed ^ fnv1a64(key.first), "split.cell." + std::to_string(key.second));
    std::vector<int> order = idx;
    rng.shuffle(order);
    const auto n_test = static_cast<size_t>(
        std::llround(split.within_test_fraction * static_cast<double>(order.size())));
    for (size_t k = 0; k < order.size(); ++k) {
      if (k < n_test)
        out.within_test.push_back(order[k]);
      else
        out.train.push_back(order[k]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.within_test.begin(), out.within_test.end());
  std::sort(out.unseen_test.begin(), out.unseen_test.end());
  return out;
}

void audit_split(const Dataset& ds, const SplitSpec& split, const InstanceSplit& inst) {
  const std::set<std::string> unseen(split.unseen_ids.begin(), split.unseen_ids.end());
  const std::set<std::string> train_subj(split.train_ids.begin(), split.train_ids.end());
  for (const std::string& id : split.unseen_ids)
    if (train_subj.count(id))
      throw ValidationError("subject '" + id + "' appears in both partitions");

  std::set<int> seen;
  auto scan = [&](const std::vector<int>& idx, bool allow_unseen, const char* name) {
    for (int i : idx) {
      if (i < 0 || static_cast<size_t>(i) >= ds.epochs.size())
        throw ValidationError(std::string(name) + ": index out of range");
      if (!seen.insert(i).second)
        throw ValidationError(std::string(name) + ": epoch " + std::to_string(i) +
                              " assigned twice");
      const bool is_unseen = unseen.count(ds.epochs[static_cast<size_t>(i)].subject_id) > 0;
      if (is_unseen != allow_unseen)
        throw ValidationError(std::string(name) + ": epoch " + std::to_string(i) +
                              " of subject '" + ds.epochs[static_cast<size_t>(i)].subject_id +
                              "' leaks across the subject partition");
    }
  };
  scan(inst.train, false, "train");
  scan(inst.within_test, false, "within_test");
  scan(inst.unseen_test, true, "unseen_test");
  if (seen.size() != ds.epochs.size())
    throw ValidationError("instance split does not cover the dataset: " +
                          std::to_string(seen.size()) + " of " + std::to_string(ds.epochs.size()));

  // Instance-count conservation over train subjects.
  size_t train_subject_epochs = 0;
  for (const TrialEpoch& e : ds.epochs)
    if (train_subj.count(e.subject_id)) ++train_subject_epochs;
  if (inst.train.size() + inst.within_test.size() != train_subject_epochs)
    throw ValidationError("train + within_test do not conserve train-subject epochs");
}

}  // namespace eegcid
