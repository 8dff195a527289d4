#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "eegcid/eval.hpp"
#include "eegcid/preprocess.hpp"
#include "eegcid/tsne.hpp"

namespace eegcid {

// Command-line overrides (highest precedence).
struct CliOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> backbone;
  std::optional<bool> use_ids;
};

// Fully resolved run configuration. Precedence: config file < environment
// (EEGCID_<KEY>, JSON for section keys) < command-line flags. Unknown keys
// anywhere are rejected. Defaults are the reference recipe: 1-30 Hz band,
// 64 Hz, 1.2 s epochs, Adam lr 1e-4 batch 128, 16-dim embedding.
struct RunConfig {
  uint64_t seed = 1;
  std::string out = "out";

  std::optional<std::string> dataset_path;
  std::optional<SyntheticSpec> synthetic;
  int n_unseen = 4;
  double within_test_fraction = 0.2;

  PreprocessConfig preprocess;

  Backbone backbone = Backbone::eegnet;
  bool use_ids = false;
  EmbedderKind embedder = EmbedderKind::affine;
  EegnetConfig eegnet;
  int hidden = 64;
  int dmu_delays = 20;

  TrainConfig train;

  TsneConfig tsne;
  int cluster_min_size = 2;

  std::vector<Backbone> ablate_backbones = {Backbone::eegnet, Backbone::lstm, Backbone::dmu};

  std::string resolved_json;  // canonical dump, echoed into the output dir
  uint64_t hash = 0;

  std::string model_tag() const { return to_string(backbone) + (use_ids ? "_ids" : ""); }
};

using EnvGetter = std::function<const char*(const char*)>;

RunConfig load_run_config(const std::filesystem::path& file, const CliOverrides& cli,
                          const EnvGetter& getenv_fn);

}  // namespace eegcid
