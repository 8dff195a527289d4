#pragma once

#include "eegcid/types.hpp"

namespace eegcid {

// Holds out n_unseen whole subjects, deterministically under seed. The
// remaining subjects' epochs are later carved into train / within-test
// instances by partition_instances.
SplitSpec split_subjects(const Dataset& ds, int n_unseen, uint64_t seed,
                         double within_test_fraction = 0.2);

// Materializes the instance-level split of a preprocessed dataset:
// per (subject, condition) cell, round(fraction * n) epochs go to the
// within-test set (stratified draw, seeded); every epoch of an unseen
// subject goes to unseen-test.
InstanceSplit partition_instances(const Dataset& ds, const SplitSpec& split);

// Checks the partition invariants by scanning the dataset: unseen subjects
// unreachable from train/within indices, no index in two sets, counts
// conserved. Throws on violation.
void audit_split(const Dataset& ds, const SplitSpec& split, const InstanceSplit& inst);

}  // namespace eegcid
