#include "eegcid/eval.hpp"

#include <cstdio>
#include <json.hpp>

namespace eegcid {

using nlohmann::json;

namespace {

void score_set(ModelParams& params, const Dataset& ds, const std::vector<int>& idx,
               const char* split_name, EvalReport& r) {
  if (idx.empty()) return;
  const std::vector<int> pred = predict(params, ds, idx);
  GroupScore split_score;
  for (size_t i = 0; i < idx.size(); ++i) {
    const TrialEpoch& e = ds.epochs[static_cast<size_t>(idx[i])];
    const int truth = static_cast<int>(e.label);
    const bool hit = pred[i] == truth;

    auto bump = [&](GroupScore& s) {
      ++s.n;
      if (hit) ++s.hits;
    };
    bump(r.overall);
    bump(split_score);
    bump(r.per_condition[to_string(e.condition)]);
    bump(r.per_subject[e.subject_id]);
    bump(truth == 0 ? r.recall_target : r.recall_distractor);

    auto pit = ds.profiles.find(e.subject_id);
    if (pit != ds.profiles.end())
      bump(r.per_dominance[to_string(pit->second.dominance)][split_name]);
  }
  if (std::string(split_name) == "within")
    r.within = split_score;
  else
    r.unseen = split_score;
}

json score_json(const GroupScore& s) {
  return json{{"n", s.n}, {"hits", s.hits}, {"accuracy", s.acc()}};
}

}  // namespace

EvalReport evaluate(ModelParams& params, const Dataset& ds, const std::vector<int>& within_idx,
                    const std::vector<int>& unseen_idx) {
  if (within_idx.empty() && unseen_idx.empty())
    throw ValidationError("evaluation set is empty");
  EvalReport r;
  score_set(params, ds, within_idx, "within", r);
  score_set(params, ds, unseen_idx, "unseen", r);
  return r;
}

std::string eval_report_json(const EvalReport& r, uint64_t config_hash) {
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash));
  json j;
  j["config_hash"] = hash;
  j["overall"] = score_json(r.overall);
  if (r.within) j["within"] = score_json(*r.within);
  if (r.unseen) j["unseen"] = score_json(*r.unseen);
  for (const auto& [k, v] : r.per_condition) j["per_condition"][k] = score_json(v);
  for (const auto& [k, v] : r.per_subject) j["per_subject"][k] = score_json(v);
  for (const auto& [dom, splits] : r.per_dominance)
    for (const auto& [split, v] : splits) j["per_dominance"][dom][split] = score_json(v);
  j["recall"]["target"] = score_json(r.recall_target);
  j["recall"]["distractor"] = score_json(r.recall_distractor);
  return j.dump(2) + "\n";
}

std::string eval_report_csv(const EvalReport& r, uint64_t config_hash) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n",
                static_cast<unsigned long long>(config_hash));
  std::string out = buf;
  out += "group,key,n,hits,accuracy\n";
  auto row = [&](const std::string& group, const std::string& key, const GroupScore& s) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%zu,%.17g\n", group.c_str(), key.c_str(), s.n,
                  s.hits, s.acc());
    out += buf;
  };
  row("overall", "all", r.overall);
  if (r.within) row("split", "within", *r.within);
  if (r.unseen) row("split", "unseen", *r.unseen);
  for (const auto& [k, v] : r.per_condition) row("condition", k, v);
  for (const auto& [k, v] : r.per_subject) row("subject", k, v);
  for (const auto& [dom, splits] : r.per_dominance)
    for (const auto& [split, v] : splits) row("dominance", dom + ":" + split, v);
  row("recall", "target", r.recall_target);
  row("recall", "distractor", r.recall_distractor);
  return out;
}

const AblationCell& AblationRun::cell(Backbone b, bool use_ids) const {
  for (const AblationCell& c : cells)
    if (c.backbone == b && c.use_ids == use_ids) return c;
  throw ValidationError("ablation run has no cell for " + to_string(b));
}

std::pair<double, double> AblationRun::delta(Backbone b) const {
  const AblationCell& base = cell(b, false);
  const AblationCell& ids = cell(b, true);
  return {ids.within_acc - base.within_acc, ids.unseen_acc - base.unseen_acc};
}

AblationRun ablation_table(const Dataset& ds, const std::vector<Backbone>& backbones,
                           const TrainConfig& cfg, const SplitSpec& split,
                           const InstanceSplit& inst, const ModelSpec& base_spec) {
  if (backbones.empty()) throw ValidationError("ablation needs at least one backbone");
  audit_split(ds, split, inst);
  const std::set<std::string> forbidden(split.unseen_ids.begin(), split.unseen_ids.end());

  AblationRun run;
  for (Backbone b : backbones) {
    for (bool use_ids : {false, true}) {
      ModelSpec spec = base_spec;
      spec.backbone = b;
      spec.use_ids = use_ids;
      spec.input_channels = base_spec.eeg_channels() + (use_ids ? kEmbedDim : 0);

      TrainResult tr = train(spec, ds, inst.train, cfg, forbidden);
      EvalReport rep = evaluate(tr.params, ds, inst.within_test, inst.unseen_test);

      AblationCell cell;
      cell.backbone = b;
      cell.use_ids = use_ids;
      cell.within_acc = rep.within ? rep.within->acc() : 0.0;
      cell.unseen_acc = rep.unseen ? rep.unseen->acc() : 0.0;
      run.cells.push_back(cell);
      run.models.push_back(std::move(tr));
      run.reports.push_back(std::move(rep));
    }
  }
  return run;
}

std::string ablation_csv(const AblationRun& run, uint64_t config_hash) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n",
                static_cast<unsigned long long>(config_hash));
  std::string out = buf;
  out += "backbone,use_ids,within_acc,unseen_acc\n";
  for (const AblationCell& c : run.cells) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g\n", to_string(c.backbone).c_str(),
                  c.use_ids ? 1 : 0, c.within_acc, c.unseen_acc);
    out += buf;
  }
  return out;
}

std::string ablation_json(const AblationRun& run, uint64_t config_hash) {
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash));
  json j;
  j["config_hash"] = hash;
  json cells = json::array();
  for (const AblationCell& c : run.cells)
    cells.push_back({{"backbone", to_string(c.backbone)},
                     {"use_ids", c.use_ids},
                     {"within_acc", c.within_acc},
                     {"unseen_acc", c.unseen_acc}});
  j["cells"] = cells;
  json deltas = json::object();
  for (const AblationCell& c : run.cells) {
    if (!c.use_ids) continue;
    const auto d = run.delta(c.backbone);
    deltas[to_string(c.backbone)] = {{"within", d.first}, {"unseen", d.second}};
  }
  j["delta_ids_minus_baseline"] = deltas;
  return j.dump(2) + "\n";
}

std::map<std::string, std::map<std::string, GroupScore>> dominance_eval(
    ModelParams& params, const Dataset& ds, const std::vector<int>& within_idx,
    const std::vector<int>& unseen_idx) {
  const EvalReport r = evaluate(params, ds, within_idx, unseen_idx);
  return r.per_dominance;
}

}  // namespace eegcid
