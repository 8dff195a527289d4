#pragma once

#include <map>
#include <set>

#include "eegcid/models.hpp"
#include "eegcid/tsne.hpp"

namespace eegcid {

struct EmbeddingMatrix {
  Tensor rows;  // N x 16
  std::vector<std::string> ids;
  std::vector<ProfileCode> codes;
  std::vector<bool> unseen;
};

// One embedding row per subject, computed from a conditioned model's
// embedder. Subjects in `unseen_ids` are flagged.
EmbeddingMatrix collect_embeddings(const ModelParams& params,
                                   const std::map<std::string, SubjectProfile>& profiles,
                                   const std::set<std::string>& unseen_ids);

struct ClusterReport {
  int n_possible = 16;
  int n_observed = 0;
  int n_prominent = 0;
  std::map<int, std::vector<std::string>> members;  // code value -> subject ids
  // Unseen subject -> code value of its nearest training centroid (embedding
  // distance; exact match expected for a profile-determined embedder).
  std::map<std::string, int> unseen_nearest;
  // Full column rank of the trained affine embedder guarantees distinct codes
  // map to distinct embeddings; false is reported, not fatal.
  std::optional<bool> embedder_full_rank;
};

ClusterReport cluster_report(const EmbeddingMatrix& E, int min_size = 2);

std::string embeddings_csv(const EmbeddingMatrix& E, uint64_t config_hash);
std::string tsne_csv(const EmbeddingMatrix& E, const Tensor& Y, uint64_t config_hash);
std::string cluster_report_json(const ClusterReport& r, uint64_t config_hash);

// Static scatter of the 2-D projection, colored by profile code, unseen
// subjects drawn as open markers.
std::string tsne_svg(const EmbeddingMatrix& E, const Tensor& Y);

// Grouped bar chart for accuracy tables (ablation, dominance).
struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series
};
std::string bar_chart_svg(const std::vector<std::string>& series,
                          const std::vector<BarGroup>& groups, const std::string& title);

}  // namespace eegcid
