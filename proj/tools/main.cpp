// Command-line front end: synth, preprocess, train, eval, ablate, embed,
// report, import. Every subcommand is deterministic given the resolved
// config and seed; artifacts land in the configured output directory.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "eegcid/dataset.hpp"
#include "eegcid/embed_analysis.hpp"
#include "eegcid/eval.hpp"
#include "eegcid/preprocess.hpp"
#include "eegcid/runconfig.hpp"
#include "eegcid/split.hpp"
#include "eegcid/synthetic.hpp"

namespace fs = std::filesystem;
using namespace eegcid;

namespace {

struct CommonArgs {
  std::string config_path;
  long long seed_flag = -1;
  std::string out_flag, backbone_flag;
  int use_ids_flag = -1;  // -1 unset, else 0/1
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file (JSON)")->required();
  cmd->add_option("--seed", args.seed_flag, "override the global seed");
  cmd->add_option("--out", args.out_flag, "override the output directory");
  cmd->add_option("--backbone", args.backbone_flag, "override model.backbone");
  cmd->add_option("--use-ids", args.use_ids_flag, "override model.use_ids (0 or 1)")
      ->check(CLI::Range(0, 1));
}

RunConfig resolve(const CommonArgs& args) {
  CliOverrides cli;
  if (args.seed_flag >= 0) cli.seed = static_cast<uint64_t>(args.seed_flag);
  if (!args.out_flag.empty()) cli.out = args.out_flag;
  if (!args.backbone_flag.empty()) cli.backbone = args.backbone_flag;
  if (args.use_ids_flag >= 0) cli.use_ids = args.use_ids_flag == 1;
  return load_run_config(args.config_path, cli, [](const char* k) { return std::getenv(k); });
}

void prepare_out(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  write_file_atomic(fs::path(cfg.out) / "config.resolved.json", cfg.resolved_json);
}

Dataset resolve_raw_dataset(const RunConfig& cfg) {
  if (cfg.dataset_path) {
    Dataset ds = load_dataset(*cfg.dataset_path);
    if (ds.stage != Stage::raw)
      throw ValidationError("stage mismatch: expected a raw dataset at " + *cfg.dataset_path);
    return ds;
  }
  if (cfg.synthetic) return generate_synthetic(*cfg.synthetic);
  throw ValidationError("config needs dataset.path or dataset.synthetic");
}

Dataset resolve_preprocessed_dataset(const RunConfig& cfg) {
  if (cfg.dataset_path) {
    Dataset ds = load_dataset(*cfg.dataset_path);
    if (ds.stage != Stage::preprocessed)
      throw ValidationError("stage mismatch: expected a preprocessed dataset at " +
                            *cfg.dataset_path);
    return ds;
  }
  if (cfg.synthetic) {
    const fs::path cached = fs::path(cfg.out) / "preprocessed";
    if (fs::exists(cached / "manifest.json")) {
      Dataset ds = load_dataset(cached);
      if (ds.stage == Stage::preprocessed) return ds;
    }
    return preprocess_pipeline(generate_synthetic(*cfg.synthetic), cfg.preprocess);
  }
  throw ValidationError("config needs dataset.path or dataset.synthetic");
}

ModelSpec make_spec(const RunConfig& cfg, const Dataset& ds, Backbone backbone, bool use_ids) {
  if (ds.epochs.empty()) throw ValidationError("preprocessed dataset has no epochs");
  ModelSpec spec;
  spec.backbone = backbone;
  spec.use_ids = use_ids;
  spec.input_channels = ds.epochs.front().channels + (use_ids ? kEmbedDim : 0);
  spec.T = ds.epochs.front().n_samples;
  spec.hidden = cfg.hidden;
  spec.eegnet = cfg.eegnet;
  spec.dmu_delays = cfg.dmu_delays;
  spec.embedder = cfg.embedder;
  validate_spec(spec);
  return spec;
}

std::string tag_of(Backbone b, bool ids) { return to_string(b) + (ids ? "_ids" : ""); }

void write_model_artifacts(const RunConfig& cfg, const std::string& tag, const TrainResult& tr,
                           const EvalReport& rep) {
  const fs::path out(cfg.out);
  save_checkpoint(tr.params, out / ("checkpoint_" + tag + ".ckpt"));
  write_file_atomic(out / ("history_" + tag + ".csv"), history_csv(tr.history, cfg.hash));
  write_file_atomic(out / ("eval_" + tag + ".json"), eval_report_json(rep, cfg.hash));
  write_file_atomic(out / ("eval_" + tag + ".csv"), eval_report_csv(rep, cfg.hash));

  std::vector<BarGroup> groups;
  for (const char* dom : {"auditory", "visual"}) {
    auto it = rep.per_dominance.find(dom);
    if (it == rep.per_dominance.end()) continue;
    BarGroup g;
    g.label = dom;
    for (const char* split : {"within", "unseen"}) {
      auto sit = it->second.find(split);
      g.values.push_back(sit == it->second.end() ? 0.0 : sit->second.acc());
    }
    groups.push_back(g);
  }
  if (!groups.empty())
    write_file_atomic(out / ("dominance_" + tag + ".svg"),
                      bar_chart_svg({"within", "unseen"}, groups, "accuracy by dominance: " + tag));
}

int cmd_synth(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  if (!cfg.synthetic) throw ValidationError("synth requires dataset.synthetic");
  prepare_out(cfg);
  const Dataset ds = generate_synthetic(*cfg.synthetic);
  const fs::path dir = fs::path(cfg.out) / "dataset";
  save_dataset(ds, dir);
  size_t events = 0;
  for (const auto& r : ds.recordings) events += r.events.size();
  std::cout << "wrote " << dir.string() << ": " << ds.recordings.size() << " subjects, " << events
            << " events, " << ds.profiles.size() << " profiles\n";
  return 0;
}

int cmd_preprocess(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  prepare_out(cfg);
  const Dataset raw = resolve_raw_dataset(cfg);
  const Dataset pre = preprocess_pipeline(raw, cfg.preprocess);
  const fs::path dir = fs::path(cfg.out) / "preprocessed";
  save_dataset(pre, dir);
  const int C = pre.epochs.empty() ? 0 : pre.epochs.front().channels;
  const int T = pre.epochs.empty() ? 0 : pre.epochs.front().n_samples;
  std::cout << "wrote " << dir.string() << ": " << pre.epochs.size() << " epochs of shape " << C
            << "x" << T << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  prepare_out(cfg);
  Dataset ds = resolve_preprocessed_dataset(cfg);
  const SplitSpec split = split_subjects(ds, cfg.n_unseen, cfg.seed, cfg.within_test_fraction);
  const InstanceSplit inst = partition_instances(ds, split);
  audit_split(ds, split, inst);

  const ModelSpec spec = make_spec(cfg, ds, cfg.backbone, cfg.use_ids);
  const std::set<std::string> forbidden(split.unseen_ids.begin(), split.unseen_ids.end());
  TrainResult tr = train(spec, ds, inst.train, cfg.train, forbidden);
  EvalReport rep = evaluate(tr.params, ds, inst.within_test, inst.unseen_test);
  write_model_artifacts(cfg, cfg.model_tag(), tr, rep);

  std::cout << "trained " << cfg.model_tag() << ": " << tr.history.epochs_run << " epochs, "
            << tr.history.steps << " steps, wall " << tr.history.wall_seconds << " s\n"
            << "within " << (rep.within ? rep.within->acc() : 0.0) << ", unseen "
            << (rep.unseen ? rep.unseen->acc() : 0.0) << "\n";
  if (spec.use_ids)
    std::cout << "conditioning gradient " << (tr.history.max_embedder_grad > 0.0 ? "live" : "DEAD")
              << " (max |grad| " << tr.history.max_embedder_grad << ")\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  prepare_out(cfg);
  Dataset ds = resolve_preprocessed_dataset(cfg);
  const SplitSpec split = split_subjects(ds, cfg.n_unseen, cfg.seed, cfg.within_test_fraction);
  const InstanceSplit inst = partition_instances(ds, split);

  const fs::path ckpt = fs::path(cfg.out) / ("checkpoint_" + cfg.model_tag() + ".ckpt");
  ModelParams params = load_checkpoint(ckpt);
  EvalReport rep = evaluate(params, ds, inst.within_test, inst.unseen_test);
  write_file_atomic(fs::path(cfg.out) / ("eval_" + cfg.model_tag() + ".json"),
                    eval_report_json(rep, cfg.hash));
  write_file_atomic(fs::path(cfg.out) / ("eval_" + cfg.model_tag() + ".csv"),
                    eval_report_csv(rep, cfg.hash));
  std::cout << "eval " << cfg.model_tag() << ": overall " << rep.overall.acc() << " (n="
            << rep.overall.n << ")\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  prepare_out(cfg);
  Dataset ds = resolve_preprocessed_dataset(cfg);
  const SplitSpec split = split_subjects(ds, cfg.n_unseen, cfg.seed, cfg.within_test_fraction);
  const InstanceSplit inst = partition_instances(ds, split);
  const ModelSpec base = make_spec(cfg, ds, cfg.ablate_backbones.front(), false);

  const AblationRun run = ablation_table(ds, cfg.ablate_backbones, cfg.train, split, inst, base);
  const fs::path out(cfg.out);
  for (size_t i = 0; i < run.cells.size(); ++i) {
    const AblationCell& c = run.cells[i];
    write_model_artifacts(cfg, tag_of(c.backbone, c.use_ids), run.models[i], run.reports[i]);
  }
  write_file_atomic(out / "ablation.csv", ablation_csv(run, cfg.hash));
  write_file_atomic(out / "ablation.json", ablation_json(run, cfg.hash));

  std::vector<BarGroup> groups;
  for (Backbone b : cfg.ablate_backbones) {
    const AblationCell& base_cell = run.cell(b, false);
    const AblationCell& ids_cell = run.cell(b, true);
    groups.push_back({to_string(b) + " within", {base_cell.within_acc, ids_cell.within_acc}});
    groups.push_back({to_string(b) + " unseen", {base_cell.unseen_acc, ids_cell.unseen_acc}});
  }
  write_file_atomic(out / "ablation.svg",
                    bar_chart_svg({"baseline", "+ids"}, groups, "conditioning ablation"));

  std::cout << ablation_csv(run, cfg.hash);
  return 0;
}

int cmd_embed(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  prepare_out(cfg);
  Dataset ds = resolve_preprocessed_dataset(cfg);
  const SplitSpec split = split_subjects(ds, cfg.n_unseen, cfg.seed, cfg.within_test_fraction);

  const fs::path ckpt = fs::path(cfg.out) / ("checkpoint_" + cfg.model_tag() + ".ckpt");
  ModelParams params = load_checkpoint(ckpt);
  const std::set<std::string> unseen(split.unseen_ids.begin(), split.unseen_ids.end());
  const EmbeddingMatrix E = collect_embeddings(params, ds.profiles, unseen);
  ClusterReport clusters = cluster_report(E, cfg.cluster_min_size);
  if (params.spec.embedder == EmbedderKind::affine)
    clusters.embedder_full_rank = embedder_has_rank4(extract_embedder(params).W);
  const TsneResult ts = tsne(E.rows, cfg.tsne);

  const fs::path out(cfg.out);
  write_file_atomic(out / "embeddings.csv", embeddings_csv(E, cfg.hash));
  write_file_atomic(out / "tsne.csv", tsne_csv(E, ts.Y, cfg.hash));
  write_file_atomic(out / "tsne.svg", tsne_svg(E, ts.Y));
  write_file_atomic(out / "clusters.json", cluster_report_json(clusters, cfg.hash));
  std::cout << "embeddings: " << E.ids.size() << " subjects, " << clusters.n_observed
            << " observed combinations, " << clusters.n_prominent << " prominent clusters, kl "
            << ts.kl_initial << " -> " << ts.kl_final << "\n";
  if (clusters.embedder_full_rank && !*clusters.embedder_full_rank)
    std::cout << "note: trained embedder weight is rank-deficient; distinct profiles may collide\n";
  return 0;
}

int cmd_report(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  prepare_out(cfg);
  const fs::path out(cfg.out);
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(cfg.hash));

  std::string md = "# Run report\n\nconfig hash: `" + std::string(hash) + "`\n\n";
  md += "resolved configuration: [config.resolved.json](config.resolved.json)\n";

  if (fs::exists(out / "ablation.json")) {
    std::ifstream in(out / "ablation.json");
    const auto j = nlohmann::json::parse(in);
    md += "\n## Conditioning ablation\n\n";
    md += "| backbone | variant | within | unseen |\n|---|---|---|---|\n";
    for (const auto& c : j.at("cells")) {
      char row[160];
      std::snprintf(row, sizeof(row), "| %s | %s | %.4f | %.4f |\n",
                    c.at("backbone").get<std::string>().c_str(),
                    c.at("use_ids").get<bool>() ? "+ids" : "baseline",
                    c.at("within_acc").get<double>(), c.at("unseen_acc").get<double>());
      md += row;
    }
    if (fs::exists(out / "ablation.svg")) md += "\n![ablation](ablation.svg)\n";
  }

  std::vector<std::string> eval_files;
  for (const auto& entry : fs::directory_iterator(out)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("eval_", 0) == 0 && entry.path().extension() == ".json")
      eval_files.push_back(name);
  }
  std::sort(eval_files.begin(), eval_files.end());
  for (const std::string& name : eval_files) {
    std::ifstream in(out / name);
    const auto j = nlohmann::json::parse(in);
    if (!j.contains("per_dominance")) continue;
    md += "\n## Dominance split: " + name.substr(5, name.size() - 10) + "\n\n";
    md += "| group | split | n | accuracy |\n|---|---|---|---|\n";
    for (const auto& [dom, splits] : j.at("per_dominance").items())
      for (const auto& [split, score] : splits.items()) {
        char row[160];
        std::snprintf(row, sizeof(row), "| %s | %s | %zu | %.4f |\n", dom.c_str(), split.c_str(),
                      score.at("n").get<size_t>(), score.at("accuracy").get<double>());
        md += row;
      }
  }

  if (fs::exists(out / "clusters.json")) {
    std::ifstream in(out / "clusters.json");
    const auto j = nlohmann::json::parse(in);
    md += "\n## Embedding clusters\n\n";
    md += "- possible combinations: " + std::to_string(j.at("n_possible").get<int>()) + "\n";
    md += "- observed combinations: " + std::to_string(j.at("n_observed").get<int>()) + "\n";
    md += "- prominent clusters: " + std::to_string(j.at("n_prominent").get<int>()) + "\n";
    if (fs::exists(out / "tsne.svg")) md += "\n![tsne](tsne.svg)\n";
  }

  write_file_atomic(out / "report.md", md);
  std::cout << "wrote " << (out / "report.md").string() << "\n";
  return 0;
}

struct ImportArgs {
  std::string src, dst;
  double fs = 1024.0;
  std::vector<std::string> mastoids = {"M1", "M2"};
};

int cmd_import(const ImportArgs& args) {
  import_withme(args.src, args.dst, args.fs, args.mastoids);
  std::cout << "imported " << args.src << " -> " << args.dst << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subject-conditioned EEG target/distractor decoding toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, pre_args, train_args, eval_args, ablate_args, embed_args, report_args;
  ImportArgs import_args;

  add_common(app.add_subcommand("synth", "generate a synthetic dataset"), synth_args);
  add_common(app.add_subcommand("preprocess", "run the signal chain"), pre_args);
  add_common(app.add_subcommand("train", "train one model"), train_args);
  add_common(app.add_subcommand("eval", "evaluate a checkpoint"), eval_args);
  add_common(app.add_subcommand("ablate", "train the baseline/+ids grid"), ablate_args);
  add_common(app.add_subcommand("embed", "embedding-space analysis"), embed_args);
  add_common(app.add_subcommand("report", "assemble a markdown report"), report_args);

  CLI::App* import_cmd =
      app.add_subcommand("import", "convert a source export to the canonical layout");
  import_cmd->add_option("--src", import_args.src, "source directory")->required();
  import_cmd->add_option("--dst", import_args.dst, "destination dataset directory")->required();
  import_cmd->add_option("--fs", import_args.fs, "sampling rate of the source recordings");
  import_cmd->add_option("--mastoid", import_args.mastoids, "mastoid channel names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("synth")) return cmd_synth(synth_args);
    if (app.got_subcommand("preprocess")) return cmd_preprocess(pre_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
    if (app.got_subcommand("embed")) return cmd_embed(embed_args);
    if (app.got_subcommand("report")) return cmd_report(report_args);
    if (app.got_subcommand("import")) return cmd_import(import_args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
