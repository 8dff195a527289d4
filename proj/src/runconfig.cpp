#include "eegcid/runconfig.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "eegcid/synthetic.hpp"

namespace eegcid {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ValidationError(where + ": unknown key '" + key + "'");
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

void merge_env_sections(json& root, const EnvGetter& getenv_fn) {
  // One documented variable per top-level key; section variables hold JSON
  // that replaces keys inside the section, scalar variables hold the value.
  static const std::pair<const char*, const char*> sections[] = {
      {"EEGCID_DATASET", "dataset"},     {"EEGCID_PREPROCESS", "preprocess"},
      {"EEGCID_MODEL", "model"},         {"EEGCID_TRAIN", "train"},
      {"EEGCID_ANALYSIS", "analysis"},   {"EEGCID_ABLATE", "ablate"}};
  for (const auto& [var, key] : sections) {
    const char* v = getenv_fn(var);
    if (!v) continue;
    json patch = parse_json(v, std::string("environment ") + var);
    if (!patch.is_object())
      throw ValidationError(std::string(var) + " must hold a JSON object");
    if (!root.contains(key)) root[key] = json::object();
    for (auto& [k, val] : patch.items()) root[key][k] = val;
  }
  if (const char* v = getenv_fn("EEGCID_SEED")) root["seed"] = std::stoull(v);
  if (const char* v = getenv_fn("EEGCID_OUT")) root["out"] = std::string(v);
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& file, const CliOverrides& cli,
                          const EnvGetter& getenv_fn) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open config file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  json root = parse_json(ss.str(), file.string());

  merge_env_sections(root, getenv_fn);

  check_keys(root, {"seed", "out", "dataset", "preprocess", "model", "train", "analysis",
                    "ablate"},
             "config");

  RunConfig cfg;
  take(root, "seed", cfg.seed);
  take(root, "out", cfg.out);

  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    check_keys(d, {"path", "synthetic", "n_unseen", "within_test_fraction"}, "dataset");
    if (d.contains("path")) cfg.dataset_path = d.at("path").get<std::string>();
    take(d, "n_unseen", cfg.n_unseen);
    take(d, "within_test_fraction", cfg.within_test_fraction);
    if (d.contains("synthetic")) {
      const json& s = d["synthetic"];
      check_keys(s, {"n_subjects", "epochs_per_subject", "channels", "fs", "snr", "seed",
                     "effect"},
                 "dataset.synthetic");
      SyntheticSpec spec;
      spec.seed = cfg.seed;
      take(s, "n_subjects", spec.n_subjects);
      take(s, "epochs_per_subject", spec.epochs_per_subject);
      take(s, "channels", spec.channels);
      take(s, "fs", spec.fs);
      take(s, "snr", spec.snr);
      take(s, "seed", spec.seed);
      if (s.contains("effect")) {
        const json& e = s["effect"];
        check_keys(e, {"dominance_latency_shift_s", "sex_flips_sign", "music_amp_frac"},
                   "dataset.synthetic.effect");
        take(e, "dominance_latency_shift_s", spec.effect.dominance_latency_shift_s);
        take(e, "sex_flips_sign", spec.effect.sex_flips_sign);
        take(e, "music_amp_frac", spec.effect.music_amp_frac);
      }
      validate_synthetic_spec(spec);
      cfg.synthetic = spec;
    }
    if (cfg.dataset_path && cfg.synthetic)
      throw ValidationError("dataset: give either path or synthetic, not both");
  }

  if (root.contains("preprocess")) {
    const json& p = root["preprocess"];
    check_keys(p, {"band_low_hz", "band_high_hz", "target_fs", "epoch_seconds", "filter_order",
                   "eps", "norm_scope"},
               "preprocess");
    take(p, "band_low_hz", cfg.preprocess.band_low_hz);
    take(p, "band_high_hz", cfg.preprocess.band_high_hz);
    take(p, "target_fs", cfg.preprocess.target_fs);
    take(p, "epoch_seconds", cfg.preprocess.epoch_seconds);
    take(p, "filter_order", cfg.preprocess.filter_order);
    take(p, "eps", cfg.preprocess.eps);
    if (p.contains("norm_scope")) {
      const std::string scope = p.at("norm_scope").get<std::string>();
      if (scope == "channel")
        cfg.preprocess.norm_scope = NormScope::channel;
      else if (scope == "epoch")
        cfg.preprocess.norm_scope = NormScope::epoch;
      else
        throw ValidationError("preprocess.norm_scope must be 'channel' or 'epoch'");
    }
    cfg.preprocess.validate();
  }

  if (root.contains("model")) {
    const json& m = root["model"];
    check_keys(m, {"backbone", "use_ids", "embedder", "eegnet", "hidden", "dmu_delays"}, "model");
    if (m.contains("backbone")) cfg.backbone = backbone_from_string(m.at("backbone").get<std::string>());
    take(m, "use_ids", cfg.use_ids);
    if (m.contains("embedder")) {
      const std::string kind = m.at("embedder").get<std::string>();
      if (kind == "affine")
        cfg.embedder = EmbedderKind::affine;
      else if (kind == "table")
        cfg.embedder = EmbedderKind::table;
      else
        throw ValidationError("model.embedder must be 'affine' or 'table'");
    }
    take(m, "hidden", cfg.hidden);
    take(m, "dmu_delays", cfg.dmu_delays);
    if (m.contains("eegnet")) {
      const json& e = m["eegnet"];
      check_keys(e, {"f1", "depth_mult", "f2", "temporal_kernel", "separable_kernel", "pool1",
                     "pool2", "dropout"},
                 "model.eegnet");
      take(e, "f1", cfg.eegnet.f1);
      take(e, "depth_mult", cfg.eegnet.depth_mult);
      take(e, "f2", cfg.eegnet.f2);
      take(e, "temporal_kernel", cfg.eegnet.temporal_kernel);
      take(e, "separable_kernel", cfg.eegnet.separable_kernel);
      take(e, "pool1", cfg.eegnet.pool1);
      take(e, "pool2", cfg.eegnet.pool2);
      take(e, "dropout", cfg.eegnet.dropout);
    }
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    check_keys(t, {"lr", "batch_size", "max_epochs", "early_stop_patience", "val_fraction",
                   "precision"},
               "train");
    take(t, "lr", cfg.train.lr);
    take(t, "batch_size", cfg.train.batch_size);
    take(t, "max_epochs", cfg.train.max_epochs);
    take(t, "early_stop_patience", cfg.train.early_stop_patience);
    take(t, "val_fraction", cfg.train.val_fraction);
    take(t, "precision", cfg.train.precision);
  }

  if (root.contains("analysis")) {
    const json& a = root["analysis"];
    check_keys(a, {"tsne", "min_size"}, "analysis");
    take(a, "min_size", cfg.cluster_min_size);
    if (a.contains("tsne")) {
      const json& t = a["tsne"];
      check_keys(t, {"perplexity", "iterations", "learning_rate", "momentum_initial",
                     "momentum_final", "momentum_switch_iter", "early_exaggeration",
                     "exaggeration_iters", "init_scale"},
                 "analysis.tsne");
      take(t, "perplexity", cfg.tsne.perplexity);
      take(t, "iterations", cfg.tsne.iterations);
      take(t, "learning_rate", cfg.tsne.learning_rate);
      take(t, "momentum_initial", cfg.tsne.momentum_initial);
      take(t, "momentum_final", cfg.tsne.momentum_final);
      take(t, "momentum_switch_iter", cfg.tsne.momentum_switch_iter);
      take(t, "early_exaggeration", cfg.tsne.early_exaggeration);
      take(t, "exaggeration_iters", cfg.tsne.exaggeration_iters);
      take(t, "init_scale", cfg.tsne.init_scale);
    }
  }

  if (root.contains("ablate")) {
    const json& a = root["ablate"];
    check_keys(a, {"backbones"}, "ablate");
    if (a.contains("backbones")) {
      cfg.ablate_backbones.clear();
      for (const json& b : a.at("backbones"))
        cfg.ablate_backbones.push_back(backbone_from_string(b.get<std::string>()));
      if (cfg.ablate_backbones.empty())
        throw ValidationError("ablate.backbones must not be empty");
    }
  }

  // Flags win last.
  if (cli.seed) cfg.seed = *cli.seed;
  if (cli.out) cfg.out = *cli.out;
  if (cli.backbone) cfg.backbone = backbone_from_string(*cli.backbone);
  if (cli.use_ids) cfg.use_ids = *cli.use_ids;

  if (cfg.n_unseen < 0) throw ValidationError("dataset.n_unseen must be >= 0");
  if (!(cfg.within_test_fraction >= 0.0 && cfg.within_test_fraction < 1.0))
    throw ValidationError("dataset.within_test_fraction must be in [0, 1)");
  cfg.train.seed = cfg.seed;
  cfg.tsne.seed = cfg.seed;
  cfg.tsne.validate();
  TrainConfig tc = cfg.train;
  tc.validate();

  // Canonical resolved form: every effective value, defaults included.
  json resolved;
  resolved["seed"] = cfg.seed;
  resolved["out"] = cfg.out;
  if (cfg.dataset_path) resolved["dataset"]["path"] = *cfg.dataset_path;
  if (cfg.synthetic) {
    const SyntheticSpec& s = *cfg.synthetic;
    resolved["dataset"]["synthetic"] = {
        {"n_subjects", s.n_subjects},
        {"epochs_per_subject", s.epochs_per_subject},
        {"channels", s.channels},
        {"fs", s.fs},
        {"snr", std::isinf(s.snr) ? 1e308 : s.snr},
        {"seed", s.seed},
        {"effect",
         {{"dominance_latency_shift_s", s.effect.dominance_latency_shift_s},
          {"sex_flips_sign", s.effect.sex_flips_sign},
          {"music_amp_frac", s.effect.music_amp_frac}}}};
  }
  resolved["dataset"]["n_unseen"] = cfg.n_unseen;
  resolved["dataset"]["within_test_fraction"] = cfg.within_test_fraction;
  resolved["preprocess"] = {
      {"band_low_hz", cfg.preprocess.band_low_hz},
      {"band_high_hz", cfg.preprocess.band_high_hz},
      {"target_fs", cfg.preprocess.target_fs},
      {"epoch_seconds", cfg.preprocess.epoch_seconds},
      {"filter_order", cfg.preprocess.filter_order},
      {"eps", cfg.preprocess.eps},
      {"norm_scope", cfg.preprocess.norm_scope == NormScope::channel ? "channel" : "epoch"}};
  resolved["model"] = {
      {"backbone", to_string(cfg.backbone)},
      {"use_ids", cfg.use_ids},
      {"embedder", cfg.embedder == EmbedderKind::affine ? "affine" : "table"},
      {"hidden", cfg.hidden},
      {"dmu_delays", cfg.dmu_delays},
      {"eegnet",
       {{"f1", cfg.eegnet.f1},
        {"depth_mult", cfg.eegnet.depth_mult},
        {"f2", cfg.eegnet.f2},
        {"temporal_kernel", cfg.eegnet.temporal_kernel},
        {"separable_kernel", cfg.eegnet.separable_kernel},
        {"pool1", cfg.eegnet.pool1},
        {"pool2", cfg.eegnet.pool2},
        {"dropout", cfg.eegnet.dropout}}}};
  resolved["train"] = {{"lr", cfg.train.lr},
                       {"batch_size", cfg.train.batch_size},
                       {"max_epochs", cfg.train.max_epochs},
                       {"early_stop_patience", cfg.train.early_stop_patience},
                       {"val_fraction", cfg.train.val_fraction},
                       {"precision", cfg.train.precision}};
  resolved["analysis"] = {{"min_size", cfg.cluster_min_size},
                          {"tsne",
                           {{"perplexity", cfg.tsne.perplexity},
                            {"iterations", cfg.tsne.iterations},
                            {"learning_rate", cfg.tsne.learning_rate},
                            {"momentum_initial", cfg.tsne.momentum_initial},
                            {"momentum_final", cfg.tsne.momentum_final},
                            {"momentum_switch_iter", cfg.tsne.momentum_switch_iter},
                            {"early_exaggeration", cfg.tsne.early_exaggeration},
                            {"exaggeration_iters", cfg.tsne.exaggeration_iters},
                            {"init_scale", cfg.tsne.init_scale}}}};
  json backbones = json::array();
  for (Backbone b : cfg.ablate_backbones) backbones.push_back(to_string(b));
  resolved["ablate"] = {{"backbones", backbones}};

  cfg.resolved_json = resolved.dump(2) + "\n";
  cfg.hash = fnv1a64(cfg.resolved_json);
  return cfg;
}

}  // namespace eegcid
