#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eegcid/dataset.hpp"
#include "eegcid/preprocess.hpp"
#include "eegcid/split.hpp"
#include "eegcid/synthetic.hpp"
#include "helpers.hpp"

using namespace eegcid;
using testutil::TmpDir;

namespace {

SyntheticSpec small_spec(uint64_t seed = 7) {
  SyntheticSpec s;
  s.n_subjects = 3;
  s.epochs_per_subject = 6;
  s.channels = 4;
  s.fs = 256.0;
  s.snr = 1.5;
  s.seed = seed;
  return s;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.stage != b.stage || a.profiles.size() != b.profiles.size()) return false;
  for (const auto& [id, p] : a.profiles) {
    auto it = b.profiles.find(id);
    if (it == b.profiles.end()) return false;
    const SubjectProfile& q = it->second;
    if (p.dominance != q.dominance || p.sex != q.sex || p.music_education != q.music_education ||
        p.active_musician != q.active_musician)
      return false;
  }
  if (a.recordings.size() != b.recordings.size() || a.epochs.size() != b.epochs.size())
    return false;
  for (size_t i = 0; i < a.recordings.size(); ++i) {
    const auto& x = a.recordings[i];
    const auto& y = b.recordings[i];
    if (x.subject_id != y.subject_id || x.fs != y.fs || x.samples != y.samples ||
        x.channel_names != y.channel_names || x.mastoid_indices != y.mastoid_indices ||
        x.events.size() != y.events.size())
      return false;
    for (size_t k = 0; k < x.events.size(); ++k)
      if (x.events[k].sample_index != y.events[k].sample_index ||
          x.events[k].label != y.events[k].label ||
          x.events[k].condition != y.events[k].condition)
        return false;
  }
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    const auto& x = a.epochs[i];
    const auto& y = b.epochs[i];
    if (x.subject_id != y.subject_id || x.data != y.data || x.label != y.label ||
        x.condition != y.condition || x.degenerate != y.degenerate)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("load: missing manifest and empty dataset are rejected") {
  TmpDir tmp("ds_missing");
  CHECK_THROWS_AS(load_dataset(tmp.path), ValidationError);
  write_file_atomic(tmp.path / "manifest.json",
                    "{\"format\":\"eegcid-dataset\",\"version\":1,\"stage\":\"raw\","
                    "\"subjects\":[]}\n");
  write_file_atomic(tmp.path / "profiles.csv",
                    "subject_id,dominance,sex,music_education,active_musician\n");
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path), doctest::Contains("empty dataset"),
                       ValidationError);
}

TEST_CASE("save/load raw round trip is value-identical") {
  TmpDir tmp("ds_round");
  const Dataset ds = generate_synthetic(small_spec());
  save_dataset(ds, tmp.path / "d");
  const Dataset back = load_dataset(tmp.path / "d");
  CHECK(datasets_equal(ds, back));
  CHECK(back.recordings.size() == 3);
  CHECK(back.profiles.size() == 3);
}

TEST_CASE("save twice is byte-identical; load(save(load(x))) == load(save(x))") {
  TmpDir tmp("ds_idem");
  const Dataset ds = generate_synthetic(small_spec(7));
  save_dataset(ds, tmp.path / "a");
  save_dataset(ds, tmp.path / "b");
  for (const char* f : {"manifest.json", "profiles.csv", "eeg_s000.f64", "events_s000.csv"})
    CHECK(testutil::slurp(tmp.path / "a" / f) == testutil::slurp(tmp.path / "b" / f));

  const Dataset once = load_dataset(tmp.path / "a");
  save_dataset(once, tmp.path / "c");
  const Dataset twice = load_dataset(tmp.path / "c");
  CHECK(datasets_equal(once, twice));
}

TEST_CASE("preprocessed datasets round trip, including empty epoch sets") {
  TmpDir tmp("ds_pre");
  Dataset pre = preprocess_pipeline(generate_synthetic(small_spec()), PreprocessConfig{});
  save_dataset(pre, tmp.path / "p");
  const Dataset back = load_dataset(tmp.path / "p");
  CHECK(datasets_equal(pre, back));

  Dataset empty;
  empty.stage = Stage::preprocessed;
  SubjectProfile p;
  p.subject_id = "s000";
  empty.profiles["s000"] = p;
  save_dataset(empty, tmp.path / "e");
  const Dataset eback = load_dataset(tmp.path / "e");
  CHECK(eback.epochs.empty());
  CHECK(eback.stage == Stage::preprocessed);
}

TEST_CASE("validation: bad events and mastoids are named") {
  Dataset ds = generate_synthetic(small_spec());
  ds.recordings[0].events.push_back(
      {ds.recordings[0].n_samples - 1, Label::target, Condition::visual});
  CHECK_THROWS_WITH_AS(validate_dataset(ds), doctest::Contains("s000"), ValidationError);

  Dataset ds2 = generate_synthetic(small_spec());
  ds2.recordings[1].mastoid_indices = {99};
  CHECK_THROWS_WITH_AS(validate_dataset(ds2), doctest::Contains("out of range"), ValidationError);

  Dataset ds3 = generate_synthetic(small_spec());
  ds3.profiles.erase("s002");
  CHECK_THROWS_WITH_AS(validate_dataset(ds3), doctest::Contains("s002"), ValidationError);
}

TEST_CASE("synthetic: identical spec and seed give identical datasets") {
  const Dataset a = generate_synthetic(small_spec(42));
  const Dataset b = generate_synthetic(small_spec(42));
  CHECK(datasets_equal(a, b));
  const Dataset c = generate_synthetic(small_spec(43));
  CHECK_FALSE(datasets_equal(a, c));
  CHECK(c.recordings.size() == a.recordings.size());  // same schema
}

TEST_CASE("synthetic: noiseless data is perfectly matched-filter separable") {
  SyntheticSpec spec = small_spec(5);
  spec.snr = std::numeric_limits<double>::infinity();
  spec.epochs_per_subject = 10;
  const Dataset ds = generate_synthetic(spec);
  const int64_t span = epoch_span_at_load(spec.fs);
  size_t correct = 0, total = 0;
  for (const auto& rec : ds.recordings) {
    const auto tpl = synthetic_epoch_template(spec, ds.profiles.at(rec.subject_id));
    for (const auto& ev : rec.events) {
      double corr = 0.0;
      for (int c = 0; c < rec.channels; ++c)
        for (int64_t t = 0; t < span; ++t)
          corr += rec.at(c, ev.sample_index + t) * tpl[static_cast<size_t>(c) * span + t];
      const Label guess = corr > 0 ? Label::target : Label::distractor;
      correct += guess == ev.label;
      ++total;
    }
  }
  CHECK(correct == total);
}

TEST_CASE("synthetic: null effect rule removes profile dependence") {
  SyntheticSpec spec = small_spec(5);
  spec.effect = EffectRule::null_effect();
  SubjectProfile a = synthetic_profile(spec, 0);
  SubjectProfile b = synthetic_profile(spec, 1);
  const auto ta = synthetic_epoch_template(spec, a);
  const auto tb = synthetic_epoch_template(spec, b);
  CHECK(ta == tb);
}

TEST_CASE("synthetic: spec validation errors") {
  SyntheticSpec bad = small_spec();
  bad.snr = -0.5;
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
  bad = small_spec();
  bad.epochs_per_subject = 1;
  CHECK_THROWS_AS(generate_synthetic(bad), ValidationError);
}

TEST_CASE("split: 42 subjects, 4 unseen") {
  SyntheticSpec spec = small_spec(3);
  spec.n_subjects = 42;
  spec.epochs_per_subject = 2;
  const Dataset ds = generate_synthetic(spec);
  const SplitSpec split = split_subjects(ds, 4, 123);
  CHECK(split.train_ids.size() == 38);
  CHECK(split.unseen_ids.size() == 4);
  for (const auto& id : split.unseen_ids)
    CHECK(std::find(split.train_ids.begin(), split.train_ids.end(), id) == split.train_ids.end());

  const SplitSpec again = split_subjects(ds, 4, 123);
  CHECK(again.train_ids == split.train_ids);
  CHECK(again.unseen_ids == split.unseen_ids);
  const SplitSpec other = split_subjects(ds, 4, 124);
  CHECK(other.unseen_ids != split.unseen_ids);
}

TEST_CASE("split: n_unseen = 0 and n_unseen >= count") {
  const Dataset ds = generate_synthetic(small_spec(3));
  const SplitSpec split = split_subjects(ds, 0, 1);
  CHECK(split.unseen_ids.empty());
  CHECK(split.train_ids.size() == 3);
  CHECK_THROWS_AS(split_subjects(ds, 3, 1), ValidationError);
}

TEST_CASE("split: instance partition conserves counts and passes the audit") {
  SyntheticSpec spec = small_spec(11);
  spec.n_subjects = 5;
  spec.epochs_per_subject = 40;
  const Dataset pre = preprocess_pipeline(generate_synthetic(spec), PreprocessConfig{});
  const SplitSpec split = split_subjects(pre, 2, 9);
  const InstanceSplit inst = partition_instances(pre, split);
  audit_split(pre, split, inst);
  CHECK(inst.unseen_test.size() == 2 * 40);
  CHECK(inst.train.size() + inst.within_test.size() == 3 * 40);
  // 80/20 per (subject, condition): 40 epochs over 4 conditions -> 10 per
  // cell, 2 to test each.
  CHECK(inst.within_test.size() == 3 * 4 * 2);

  const InstanceSplit again = partition_instances(pre, split);
  CHECK(again.train == inst.train);
  CHECK(again.within_test == inst.within_test);
}

TEST_CASE("import: canonical conversion from a csv export") {
  TmpDir tmp("ds_import");
  write_file_atomic(tmp.path / "profiles.csv",
                    "subject_id,dominance,sex,music_education,active_musician\n"
                    "p01,auditory,1,0,1\n");
  std::string eeg = "c1,c2,M1,M2\n";
  for (int t = 0; t < 2600; ++t) eeg += "0.5,-0.25,0.125,0\n";
  write_file_atomic(tmp.path / "p01_eeg.csv", eeg);
  write_file_atomic(tmp.path / "p01_events.csv",
                    "sample_index,label,condition\n10,target,rhythmic+beep\n");
  import_withme(tmp.path, tmp.path / "canon", 2048.0, {"M1", "M2"});
  const Dataset ds = load_dataset(tmp.path / "canon");
  REQUIRE(ds.recordings.size() == 1);
  CHECK(ds.recordings[0].channels == 4);
  CHECK(ds.recordings[0].n_samples == 2600);
  CHECK(ds.recordings[0].mastoid_indices == std::vector<int>{2, 3});
  CHECK(ds.recordings[0].events[0].condition == Condition::rhythmic_beep);
  CHECK(ds.profiles.at("p01").dominance == Dominance::auditory);
}
