// Acceptance harness: one pass/fail line per criterion. Criteria 1-6 run
// self-contained on synthetic data; 7-9 need the real recordings and are
// skipped (with a notice) unless WITHME_DATASET points at a canonical-format
// dataset directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "eegcid/dataset.hpp"
#include "eegcid/embed_analysis.hpp"
#include "eegcid/eval.hpp"
#include "eegcid/preprocess.hpp"
#include "eegcid/split.hpp"
#include "eegcid/synthetic.hpp"
#include "eegcid/tsne.hpp"
#include "helpers.hpp"

using namespace eegcid;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

struct Outcome {
  enum Status { pass, fail, skip } status = fail;
  std::string detail;
};

struct Check {
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

Outcome preprocessing_battery() {
  std::string detail;
  bool ok = true;
  auto need = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += " FAILED:" + what;
    }
  };

  // Mastoid mean zero after re-referencing.
  {
    Rng rng(3);
    RawRecording r;
    r.subject_id = "a";
    r.channels = 8;
    r.n_samples = 512;
    r.fs = 256.0;
    r.samples.resize(8 * 512);
    for (auto& v : r.samples) v = rng.normal();
    r.mastoid_indices = {5, 7};
    const RawRecording out = rereference(r);
    double worst = 0.0;
    for (int64_t t = 0; t < r.n_samples; ++t)
      worst = std::max(worst, std::abs((out.at(5, t) + out.at(7, t)) / 2.0));
    need(worst <= 1e-12, "mastoid-mean " + fmt(worst, "%.2e"));
    detail += " mastoid=" + fmt(worst, "%.1e");
  }

  // Band edges via pure tones at fs=1024.
  {
    const PreprocessConfig cfg;
    auto tone = [&](double freq) {
      RawRecording r;
      r.subject_id = "t";
      r.channels = 1;
      r.n_samples = 10240;
      r.fs = 1024.0;
      r.mastoid_indices = {0};
      r.samples.resize(10240);
      for (int64_t t = 0; t < r.n_samples; ++t)
        r.samples[static_cast<size_t>(t)] =
            std::sin(2.0 * 3.14159265358979323846 * freq * static_cast<double>(t) / 1024.0);
      return bandpass(r, cfg);
    };
    auto central_peak = [](const RawRecording& r) {
      double peak = 0.0;
      for (int64_t t = r.n_samples / 4; t < 3 * r.n_samples / 4; ++t)
        peak = std::max(peak, std::abs(r.at(0, t)));
      return peak;
    };
    const double pass10 = central_peak(tone(10.0));
    need(std::abs(pass10 - 1.0) <= 0.05, "10Hz amplitude " + fmt(pass10));
    const double pass45 = central_peak(tone(45.0));
    const double atten_db = 20.0 * std::log10(pass45);
    need(atten_db <= -20.0, "45Hz attenuation " + fmt(atten_db) + " dB");
    detail += " 10Hz=" + fmt(pass10) + " 45Hz=" + fmt(atten_db, "%.1f") + "dB";

    // DC rejection on the central segment.
    Rng rng(7);
    RawRecording base;
    base.subject_id = "d";
    base.channels = 1;
    base.n_samples = 8192;
    base.fs = 1024.0;
    base.mastoid_indices = {0};
    base.samples.resize(8192);
    for (auto& v : base.samples) v = rng.normal();
    RawRecording shifted = base;
    for (auto& v : shifted.samples) v += 5.0;
    const RawRecording fa = bandpass(base, cfg);
    const RawRecording fb = bandpass(shifted, cfg);
    double dc = 0.0;
    for (int64_t t = base.n_samples / 4; t < 3 * base.n_samples / 4; ++t)
      dc = std::max(dc, std::abs(fa.at(0, t) - fb.at(0, t)));
    need(dc <= 1e-6, "DC leak " + fmt(dc, "%.2e"));
    detail += " dc=" + fmt(dc, "%.1e");
  }

  // Normalization contract and idempotence.
  {
    Rng rng(11);
    TrialEpoch e;
    e.subject_id = "n";
    e.channels = 4;
    e.n_samples = 77;
    e.data.resize(4 * 77);
    for (auto& v : e.data) v = 3.0 + 2.0 * rng.normal();
    const PreprocessConfig cfg;
    const TrialEpoch out = normalize(e, cfg);
    double worst_mean = 0.0, worst_var = 0.0;
    for (int c = 0; c < 4; ++c) {
      double mean = 0.0, var = 0.0;
      for (int t = 0; t < 77; ++t) mean += out.at(c, t);
      mean /= 77.0;
      for (int t = 0; t < 77; ++t) var += (out.at(c, t) - mean) * (out.at(c, t) - mean);
      var /= 77.0;
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_var = std::max(worst_var, std::abs(var - 1.0));
    }
    need(worst_mean <= 1e-9, "norm mean " + fmt(worst_mean, "%.2e"));
    need(worst_var <= 1e-6, "norm var " + fmt(worst_var, "%.2e"));
    const TrialEpoch twice = normalize(out, cfg);
    double drift = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i)
      drift = std::max(drift, std::abs(twice.data[i] - out.data[i]));
    need(drift <= 1e-9, "norm idempotence " + fmt(drift, "%.2e"));
    need(cfg.epoch_len() == 77, "epoch length");
    detail += " mean=" + fmt(worst_mean, "%.0e") + " var=" + fmt(worst_var, "%.0e") +
              " idem=" + fmt(drift, "%.0e") + " T=77";
  }

  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// ---------------------------------------------------------------- criterion 2

BatchInput fused_batch(const ModelSpec& spec, int n, uint64_t seed) {
  Rng rng(seed);
  BatchInput b;
  b.eeg = Tensor({n, spec.eeg_channels(), spec.T});
  for (auto& v : b.eeg.v) v = rng.normal();
  if (spec.use_ids) {
    b.codes = Tensor({n, kProfileBits});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < kProfileBits; ++j)
        b.codes.at(i, j) = static_cast<double>(rng.below(2));
  }
  b.labels.resize(static_cast<size_t>(n));
  for (auto& l : b.labels) l = static_cast<int>(rng.below(2));
  return b;
}

Outcome gradient_checks() {
  std::string detail;
  bool ok = true;

  for (Backbone b : {Backbone::eegnet, Backbone::lstm, Backbone::dmu}) {
    ModelSpec spec;
    spec.backbone = b;
    spec.use_ids = true;  // the fused path also exercises the embedder
    spec.input_channels = 8 + kEmbedDim;
    spec.T = 77;
    validate_spec(spec);
    const auto res =
        testutil::grad_check(spec, 1001 + static_cast<uint64_t>(b),
                             fused_batch(spec, 4, 2001 + static_cast<uint64_t>(b)), 8);
    detail += " " + to_string(b) + "=" + fmt(res.max_rel_err, "%.2e");
    if (res.max_rel_err >= 1e-4) {
      ok = false;
      detail += "(worst " + res.worst + ")";
    }
  }

  // Dedicated pass over every embedder coordinate.
  {
    ModelSpec spec;
    spec.backbone = Backbone::eegnet;
    spec.use_ids = true;
    spec.input_channels = 8 + kEmbedDim;
    spec.T = 77;
    ModelParams params = init_params(spec, 7777);
    BatchInput batch = fused_batch(spec, 4, 8888);
    Tape tape;
    std::map<std::string, int> pvars;
    const int logits = model_forward(tape, params, batch, Mode::eval, nullptr, &pvars);
    const int loss = tape.mean_cross_entropy(logits, batch.labels);
    tape.backward(loss);
    double max_err = 0.0;
    for (const char* name : {"embedder.w", "embedder.b"}) {
      const Tensor analytic = tape.grad(pvars.at(name));
      Tensor& w = params.tensors.at(name);
      for (size_t i = 0; i < w.numel(); ++i) {
        const double keep = w.v[i];
        const double h = 1e-5;
        w.v[i] = keep + h;
        const double up = testutil::model_loss(params, batch);
        w.v[i] = keep - h;
        const double dn = testutil::model_loss(params, batch);
        w.v[i] = keep;
        max_err = std::max(max_err, testutil::rel_err(analytic.v[i], (up - dn) / (2 * h)));
      }
    }
    detail += " embedder=" + fmt(max_err, "%.2e");
    if (max_err >= 1e-4) ok = false;
  }

  // t-SNE gradient vs finite differences of the KL objective, N <= 10.
  {
    Rng rng(5);
    Tensor X({9, 16});
    for (auto& v : X.v) v = rng.normal();
    for (int i = 0; i < 4; ++i) X.at(i, 0) += 6.0;
    TsneConfig cfg;
    const Tensor P = tsne_joint_p(X, cfg);
    Tensor Y({9, 2});
    for (auto& v : Y.v) v = 0.5 * rng.normal();
    const Tensor g = tsne_kl_grad(P, Y);
    double max_err = 0.0;
    const double h = 1e-6;
    for (size_t i = 0; i < Y.numel(); ++i) {
      Tensor up = Y, dn = Y;
      up.v[i] += h;
      dn.v[i] -= h;
      max_err = std::max(
          max_err, testutil::rel_err(g.v[i], (tsne_kl(P, up) - tsne_kl(P, dn)) / (2 * h)));
    }
    detail += " tsne=" + fmt(max_err, "%.2e");
    if (max_err >= 1e-5) ok = false;
  }

  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// ---------------------------------------------------------------- criterion 3

Outcome overfit_sanity() {
  // 128 balanced epochs, strong profile-independent response, full-size
  // backbones, Adam at the reference rate.
  SyntheticSpec sp;
  sp.n_subjects = 4;
  sp.epochs_per_subject = 32;
  sp.channels = 4;
  sp.fs = 256.0;
  sp.snr = 6.0;
  sp.seed = 2024;
  sp.effect = EffectRule::null_effect();
  const Dataset ds = preprocess_pipeline(generate_synthetic(sp), PreprocessConfig{});
  std::vector<int> idx = testutil::all_indices(ds);

  std::string detail;
  bool ok = true;
  for (Backbone b : {Backbone::eegnet, Backbone::lstm, Backbone::dmu}) {
    ModelSpec spec;
    spec.backbone = b;
    spec.use_ids = false;
    spec.input_channels = 4;
    spec.T = 77;
    validate_spec(spec);
    ModelParams params = init_params(spec, 11);
    AdamState adam;
    Rng drop_rng(3);
    int reached = -1;
    for (int step = 1; step <= 500; ++step) {
      BatchInput batch = assemble_batch(spec, ds, idx, 0, idx.size());
      Tape tape;
      std::map<std::string, int> pvars;
      const int logits = model_forward(tape, params, batch, Mode::train, &drop_rng, &pvars);
      const int loss = tape.mean_cross_entropy(logits, batch.labels);
      tape.backward(loss);
      std::map<std::string, Tensor> grads;
      for (auto& [n, id] : pvars) grads.emplace(n, tape.grad(id));
      adam.step(params, grads, 1e-4);
      if (step % 5 == 0) {
        const auto pred = predict(params, ds, idx);
        size_t hits = 0;
        for (size_t i = 0; i < idx.size(); ++i)
          if (pred[i] == static_cast<int>(ds.epochs[static_cast<size_t>(idx[i])].label)) ++hits;
        if (static_cast<double>(hits) / static_cast<double>(idx.size()) >= 0.99) {
          reached = step;
          break;
        }
      }
    }
    detail += " " + to_string(b) + "=" + (reached > 0 ? std::to_string(reached) + "steps" : "no");
    if (reached < 0) ok = false;
  }
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// ---------------------------------------------------------------- criterion 4

double bayes_reference_accuracy(const SyntheticSpec& spec, int draws) {
  // Monte-Carlo reference: fresh generative draws classified by the sign of
  // the correlation with the true profile-conditioned template.
  Rng rng = rng_for(spec.seed, "bayes.reference");
  int hits = 0;
  std::vector<std::vector<double>> templates;
  for (int k = 0; k < spec.n_subjects; ++k)
    templates.push_back(synthetic_epoch_template(spec, synthetic_profile(spec, k)));
  for (int d = 0; d < draws; ++d) {
    const int who = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_subjects)));
    const SubjectProfile prof = synthetic_profile(spec, who);
    const Label label = rng.below(2) ? Label::distractor : Label::target;
    const auto e = synthetic_draw_epoch(spec, prof, label, rng);
    double corr = 0.0;
    const auto& tpl = templates[static_cast<size_t>(who)];
    for (size_t i = 0; i < e.size(); ++i) corr += e[i] * tpl[i];
    hits += (corr > 0 ? Label::target : Label::distractor) == label;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

struct PairResult {
  double base_within = 0, base_unseen = 0, ids_within = 0, ids_unseen = 0;
};

PairResult train_pair(const SyntheticSpec& sp, uint64_t split_seed, const TrainConfig& cfg) {
  const Dataset ds = preprocess_pipeline(generate_synthetic(sp), PreprocessConfig{});
  const SplitSpec split = split_subjects(ds, 4, split_seed);
  const InstanceSplit inst = partition_instances(ds, split);
  audit_split(ds, split, inst);
  const std::set<std::string> forbidden(split.unseen_ids.begin(), split.unseen_ids.end());

  PairResult out;
  for (bool ids : {false, true}) {
    ModelSpec spec;
    spec.backbone = Backbone::eegnet;
    spec.use_ids = ids;
    spec.input_channels = sp.channels + (ids ? kEmbedDim : 0);
    validate_spec(spec);
    TrainResult tr = train(spec, ds, inst.train, cfg, forbidden);
    const EvalReport rep = evaluate(tr.params, ds, inst.within_test, inst.unseen_test);
    if (ids) {
      out.ids_within = rep.within->acc();
      out.ids_unseen = rep.unseen->acc();
    } else {
      out.base_within = rep.within->acc();
      out.base_unseen = rep.unseen->acc();
    }
  }
  return out;
}

Outcome conditioning_efficacy() {
  const auto t0 = clk::now();

  SyntheticSpec informative;  // the default effect rule is the informative one
  informative.n_subjects = 14;
  informative.epochs_per_subject = 300;
  informative.channels = 8;
  informative.fs = 256.0;
  informative.snr = 1.0;
  informative.seed = 424242;

  SyntheticSpec null_fx = informative;
  null_fx.effect = EffectRule::null_effect();
  null_fx.seed = 515151;

  // The sex->polarity rule makes conditioning an XOR-type interaction; at
  // the 1e-4 default it sits on a symmetry-breaking plateau far past this
  // criterion's runtime budget, so this experiment runs Adam at 1e-3.
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.max_epochs = 40;
  cfg.seed = 31337;

  const double oracle = bayes_reference_accuracy(informative, 100000);
  const PairResult fx = train_pair(informative, 99, cfg);
  const PairResult nx = train_pair(null_fx, 99, cfg);
  const double wall = std::chrono::duration<double>(clk::now() - t0).count();

  std::string detail = " oracle=" + fmt(oracle) + " base=" + fmt(fx.base_unseen) +
                       " ids=" + fmt(fx.ids_unseen) +
                       " margin=" + fmt(fx.ids_unseen - fx.base_unseen) +
                       " nullDelta=" + fmt(nx.ids_unseen - nx.base_unseen) +
                       " wall=" + fmt(wall, "%.0f") + "s";

  bool ok = true;
  if (fx.ids_unseen - fx.base_unseen < 0.05) ok = false;
  if (fx.ids_unseen > oracle + 0.01 || fx.base_unseen > oracle + 0.01) ok = false;
  if (std::abs(nx.ids_unseen - nx.base_unseen) > 0.02) ok = false;
  if (wall > 1800.0) ok = false;
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// ---------------------------------------------------------------- criterion 5

Outcome embedding_analysis() {
  // Train a small conditioned model so the embedder is a real artifact of
  // training, then analyze a 42-subject profile table (codes repeat, which
  // exercises the coincidence of equal profiles).
  SyntheticSpec sp;
  sp.n_subjects = 8;
  sp.epochs_per_subject = 40;
  sp.channels = 4;
  sp.fs = 256.0;
  sp.snr = 2.0;
  sp.seed = 626262;
  const Dataset ds = preprocess_pipeline(generate_synthetic(sp), PreprocessConfig{});
  ModelSpec spec;
  spec.backbone = Backbone::eegnet;
  spec.use_ids = true;
  spec.input_channels = 4 + kEmbedDim;
  validate_spec(spec);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.seed = 12;
  const TrainResult tr = train(spec, ds, testutil::all_indices(ds), cfg);

  std::map<std::string, SubjectProfile> profiles;
  std::set<std::string> unseen;
  for (int k = 0; k < 42; ++k) {
    SubjectProfile p = synthetic_profile(sp, k);
    char name[16];
    std::snprintf(name, sizeof(name), "p%02d", k);
    p.subject_id = name;
    profiles[p.subject_id] = p;
    if (k >= 38) unseen.insert(p.subject_id);
  }
  const EmbeddingMatrix E = collect_embeddings(tr.params, profiles, unseen);

  TsneConfig tcfg;
  const TsneResult res = tsne(E.rows, tcfg);

  bool ok = true;
  std::string detail;

  // Identical profiles -> exactly coincident output points.
  size_t coincident_pairs = 0;
  for (size_t i = 0; i < E.ids.size(); ++i)
    for (size_t j = i + 1; j < E.ids.size(); ++j)
      if (E.codes[i] == E.codes[j]) {
        ++coincident_pairs;
        if (res.Y.at(static_cast<int>(i), 0) != res.Y.at(static_cast<int>(j), 0) ||
            res.Y.at(static_cast<int>(i), 1) != res.Y.at(static_cast<int>(j), 1))
          ok = false;
      }
  detail += " coincident_pairs=" + std::to_string(coincident_pairs);
  if (coincident_pairs == 0) ok = false;

  const ClusterReport cr = cluster_report(E, 2);
  detail += " observed=" + std::to_string(cr.n_observed) +
            " prominent=" + std::to_string(cr.n_prominent);
  if (!(cr.n_prominent <= cr.n_observed && cr.n_observed <= 16)) ok = false;

  detail += " kl " + fmt(res.kl_initial) + "->" + fmt(res.kl_final);
  if (!(res.kl_final < res.kl_initial)) ok = false;

  double worst_perp = 0.0;
  for (double p : res.achieved_perplexity)
    worst_perp = std::max(worst_perp, std::abs(p - tcfg.perplexity) / tcfg.perplexity);
  detail += " perp_err=" + fmt(worst_perp, "%.2e");
  if (worst_perp >= 1e-3) ok = false;

  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// ---------------------------------------------------------------- criterion 6

Outcome determinism_replay() {
  const fs::path root = fs::temp_directory_path() / "eegcid_accept_replay";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg_file = root / "cfg.json";
  const fs::path run = root / "run";
  {
    std::ofstream out(cfg_file);
    out << R"({
  "seed": 17,
  "out": ")"
        << run.string() << R"(",
  "dataset": {
    "synthetic": { "n_subjects": 7, "epochs_per_subject": 16, "channels": 4, "fs": 256.0, "snr": 2.0 },
    "n_unseen": 2
  },
  "model": { "backbone": "eegnet", "use_ids": true },
  "train": { "max_epochs": 2, "batch_size": 32 },
  "analysis": { "tsne": { "iterations": 150 } }
})";
  }
  auto cli = [&](const std::string& sub) {
    const std::string cmd = std::string(EEGCID_CLI_PATH) + " " + sub + " --config " +
                            cfg_file.string() + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };

  const std::vector<std::string> artifacts = {
      "dataset/manifest.json",      "dataset/eeg_s000.f64",   "preprocessed/epochs_s000.f64",
      "checkpoint_eegnet_ids.ckpt", "history_eegnet_ids.csv", "eval_eegnet_ids.json",
      "tsne.csv",                   "clusters.json",          "report.md"};

  auto run_pipeline = [&]() -> bool {
    for (const char* sub : {"synth", "preprocess", "train", "eval", "embed", "report"})
      if (cli(sub) != 0) return false;
    return true;
  };

  if (!run_pipeline()) return {Outcome::fail, " first pipeline run failed"};
  std::map<std::string, std::string> first;
  for (const auto& a : artifacts) first[a] = testutil::slurp(run / a);

  fs::remove_all(run);
  if (!run_pipeline()) return {Outcome::fail, " second pipeline run failed"};

  std::string detail;
  bool ok = true;
  for (const auto& a : artifacts) {
    const std::string again = testutil::slurp(run / a);
    if (again.empty() || again != first[a]) {
      ok = false;
      detail += " mismatch:" + a;
    }
  }
  if (ok) detail = " " + std::to_string(artifacts.size()) + " artifacts bit-identical";
  fs::remove_all(root);
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

// ------------------------------------------------------- criteria 7-9 (gated)

const char* withme_path() { return std::getenv("WITHME_DATASET"); }

uint64_t withme_seed() {
  if (const char* s = std::getenv("WITHME_SPLIT_SEED")) return std::strtoull(s, nullptr, 10);
  return 1;
}

Dataset load_withme_preprocessed() {
  const Dataset ds = load_dataset(withme_path());
  return ds.stage == Stage::preprocessed ? ds : preprocess_pipeline(ds, PreprocessConfig{});
}

Outcome split_arithmetic_real() {
  if (!withme_path())
    return {Outcome::skip, " set WITHME_DATASET to a canonical dataset directory"};
  const Dataset pre = load_withme_preprocessed();
  const SplitSpec split = split_subjects(pre, 4, withme_seed());
  const InstanceSplit inst = partition_instances(pre, split);
  std::string detail = " subjects=" + std::to_string(split.train_ids.size()) + "/" +
                       std::to_string(split.unseen_ids.size()) +
                       " instances=" + std::to_string(inst.train.size()) + "/" +
                       std::to_string(inst.within_test.size()) + "/" +
                       std::to_string(inst.unseen_test.size());
  const bool ok = split.train_ids.size() == 38 && split.unseen_ids.size() == 4 &&
                  inst.train.size() == 18176 && inst.within_test.size() == 4580 &&
                  inst.unseen_test.size() == 2400;
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

Outcome table_direction_real() {
  if (!withme_path())
    return {Outcome::skip, " set WITHME_DATASET to a canonical dataset directory"};
  const Dataset pre = load_withme_preprocessed();
  const SplitSpec split = split_subjects(pre, 4, withme_seed());
  const InstanceSplit inst = partition_instances(pre, split);

  ModelSpec base;
  base.backbone = Backbone::eegnet;
  base.use_ids = false;
  base.input_channels = pre.epochs.front().channels;
  base.T = pre.epochs.front().n_samples;
  TrainConfig cfg;
  cfg.seed = withme_seed();
  const AblationRun run = ablation_table(pre, {Backbone::eegnet, Backbone::lstm, Backbone::dmu},
                                         cfg, split, inst, base);

  int improved = 0;
  for (Backbone b : {Backbone::eegnet, Backbone::lstm, Backbone::dmu}) {
    const auto d = run.delta(b);
    improved += d.first > 0;
    improved += d.second > 0;
  }
  const double eeg_base_within = run.cell(Backbone::eegnet, false).within_acc;
  const double eeg_ids_within = run.cell(Backbone::eegnet, true).within_acc;
  std::string detail = " improved_cells=" + std::to_string(improved) + "/6 eegnet_within=" +
                       fmt(eeg_base_within) + "/" + fmt(eeg_ids_within);
  const bool ok = improved >= 5 && std::abs(eeg_base_within - 0.8167) <= 0.03 &&
                  std::abs(eeg_ids_within - 0.8629) <= 0.03;
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

Outcome dominance_real() {
  if (!withme_path())
    return {Outcome::skip, " set WITHME_DATASET to a canonical dataset directory"};
  const Dataset pre = load_withme_preprocessed();
  const SplitSpec split = split_subjects(pre, 4, withme_seed());
  const InstanceSplit inst = partition_instances(pre, split);
  const std::set<std::string> forbidden(split.unseen_ids.begin(), split.unseen_ids.end());

  ModelSpec spec;
  spec.backbone = Backbone::eegnet;
  spec.use_ids = true;
  spec.input_channels = pre.epochs.front().channels + kEmbedDim;
  spec.T = pre.epochs.front().n_samples;
  TrainConfig cfg;
  cfg.seed = withme_seed();
  TrainResult tr = train(spec, pre, inst.train, cfg, forbidden);
  const auto groups = dominance_eval(tr.params, pre, inst.within_test, inst.unseen_test);

  bool ok = true;
  std::string detail;
  for (const char* split_name : {"within", "unseen"}) {
    const double aud = groups.at("auditory").at(split_name).acc();
    const double vis = groups.at("visual").at(split_name).acc();
    detail += std::string(" ") + split_name + ": aud=" + fmt(aud) + " vis=" + fmt(vis);
    if (!(aud > vis)) ok = false;
  }

  std::set<std::string> unseen(split.unseen_ids.begin(), split.unseen_ids.end());
  const EmbeddingMatrix E = collect_embeddings(tr.params, pre.profiles, unseen);
  const ClusterReport cr = cluster_report(E, 2);
  detail += " observed=" + std::to_string(cr.n_observed) +
            " prominent=" + std::to_string(cr.n_prominent);
  if (cr.n_observed != 14 || cr.n_prominent != 7) ok = false;
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

}  // namespace

int main() {
  const std::vector<Check> checks = {
      {"preprocessing chain numeric contract", preprocessing_battery},
      {"backbone/embedder/t-SNE gradient checks", gradient_checks},
      {"overfit sanity within 500 Adam steps", overfit_sanity},
      {"conditioning efficacy vs Bayes reference", conditioning_efficacy},
      {"embedding-space analysis", embedding_analysis},
      {"bit-identical pipeline replay", determinism_replay},
      {"real-data split arithmetic", split_arithmetic_real},
      {"real-data ablation direction", table_direction_real},
      {"real-data dominance + clusters", dominance_real},
  };

  int failures = 0;
  for (size_t i = 0; i < checks.size(); ++i) {
    const auto t0 = clk::now();
    Outcome out;
    try {
      out = checks[i].run();
    } catch (const std::exception& e) {
      out = {Outcome::fail, std::string(" exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(clk::now() - t0).count();
    const char* tag = out.status == Outcome::pass   ? "PASS"
                      : out.status == Outcome::skip ? "SKIP"
                                                    : "FAIL";
    std::printf("[%s] criterion %zu: %s —%s (%.1fs)\n", tag, i + 1, checks[i].name.c_str(),
                out.detail.c_str(), secs);
    std::fflush(stdout);
    if (out.status == Outcome::fail) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
