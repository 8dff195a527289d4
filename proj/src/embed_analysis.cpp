#include "eegcid/embed_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <optional>

namespace eegcid {

using nlohmann::json;

EmbeddingMatrix collect_embeddings(const ModelParams& params,
                                   const std::map<std::string, SubjectProfile>& profiles,
                                   const std::set<std::string>& unseen_ids) {
  if (!params.spec.use_ids)
    throw ValidationError("model was trained without identification inputs");
  if (profiles.empty()) throw ValidationError("no profiles to embed");

  EmbeddingMatrix E;
  const int n = static_cast<int>(profiles.size());
  E.rows = Tensor({n, kEmbedDim});
  int i = 0;
  for (const auto& [id, profile] : profiles) {
    const ProfileCode code = encode_profile(profile);
    std::vector<double> e;
    if (params.spec.embedder == EmbedderKind::affine) {
      e = embed(code, extract_embedder(params));
    } else {
      const Tensor& table = params.tensors.at("embedder.table");
      e.resize(kEmbedDim);
      for (int k = 0; k < kEmbedDim; ++k) e[static_cast<size_t>(k)] = table.at(code.value(), k);
    }
    for (int k = 0; k < kEmbedDim; ++k) E.rows.at(i, k) = e[static_cast<size_t>(k)];
    E.ids.push_back(id);
    E.codes.push_back(code);
    E.unseen.push_back(unseen_ids.count(id) > 0);
    ++i;
  }
  return E;
}

ClusterReport cluster_report(const EmbeddingMatrix& E, int min_size) {
  ClusterReport r;
  std::map<int, std::vector<std::string>> train_members;
  for (size_t i = 0; i < E.ids.size(); ++i) {
    r.members[E.codes[i].value()].push_back(E.ids[i]);
    if (!E.unseen[i]) train_members[E.codes[i].value()].push_back(E.ids[i]);
  }
  r.n_observed = static_cast<int>(r.members.size());
  for (const auto& [code, ids] : r.members)
    if (static_cast<int>(ids.size()) >= min_size) ++r.n_prominent;

  // Map each unseen subject to the nearest training centroid in embedding
  // space (centroid of each training code's identical rows is just the row).
  std::map<int, std::vector<double>> centroid;
  for (size_t i = 0; i < E.ids.size(); ++i) {
    if (E.unseen[i]) continue;
    auto& c = centroid[E.codes[i].value()];
    if (c.empty()) {
      c.resize(kEmbedDim);
      for (int k = 0; k < kEmbedDim; ++k) c[static_cast<size_t>(k)] = E.rows.at(static_cast<int>(i), k);
    }
  }
  for (size_t i = 0; i < E.ids.size(); ++i) {
    if (!E.unseen[i] || centroid.empty()) continue;
    int best_code = -1;
    double best_d = std::numeric_limits<double>::max();
    for (const auto& [code, c] : centroid) {
      double d = 0.0;
      for (int k = 0; k < kEmbedDim; ++k) {
        const double diff = E.rows.at(static_cast<int>(i), k) - c[static_cast<size_t>(k)];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best_code = code;
      }
    }
    r.unseen_nearest[E.ids[i]] = best_code;
  }
  return r;
}

std::string embeddings_csv(const EmbeddingMatrix& E, uint64_t config_hash) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n",
                static_cast<unsigned long long>(config_hash));
  std::string out = buf;
  out += "subject_id,profile_code,unseen";
  for (int k = 0; k < kEmbedDim; ++k) out += ",e" + std::to_string(k);
  out += "\n";
  for (size_t i = 0; i < E.ids.size(); ++i) {
    out += E.ids[i] + "," + std::to_string(E.codes[i].value()) + "," + (E.unseen[i] ? "1" : "0");
    for (int k = 0; k < kEmbedDim; ++k) {
      std::snprintf(buf, sizeof(buf), ",%.17g", E.rows.at(static_cast<int>(i), k));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string tsne_csv(const EmbeddingMatrix& E, const Tensor& Y, uint64_t config_hash) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n",
                static_cast<unsigned long long>(config_hash));
  std::string out = buf;
  out += "subject_id,x,y,profile_code,unseen\n";
  for (size_t i = 0; i < E.ids.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%d,%d\n", E.ids[i].c_str(),
                  Y.at(static_cast<int>(i), 0), Y.at(static_cast<int>(i), 1),
                  E.codes[i].value(), E.unseen[i] ? 1 : 0);
    out += buf;
  }
  return out;
}

std::string cluster_report_json(const ClusterReport& r, uint64_t config_hash) {
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash));
  json j;
  j["config_hash"] = hash;
  j["n_possible"] = r.n_possible;
  j["n_observed"] = r.n_observed;
  j["n_prominent"] = r.n_prominent;
  json members = json::object();
  for (const auto& [code, ids] : r.members) members[std::to_string(code)] = ids;
  j["members"] = members;
  json nearest = json::object();
  for (const auto& [id, code] : r.unseen_nearest) nearest[id] = code;
  j["unseen_nearest_centroid"] = nearest;
  if (r.embedder_full_rank) j["embedder_full_rank"] = *r.embedder_full_rank;
  return j.dump(2) + "\n";
}

namespace {

// 16 distinguishable fills, one per profile code.
const char* kPalette[16] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                            "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
                            "#98df8a", "#ff9896", "#c5b0d5", "#c49c94"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string tsne_svg(const EmbeddingMatrix& E, const Tensor& Y) {
  const int W = 640, H = 480, margin = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int i = 0; i < Y.dim(0); ++i) {
    xmin = std::min(xmin, Y.at(i, 0));
    xmax = std::max(xmax, Y.at(i, 0));
    ymin = std::min(ymin, Y.at(i, 1));
    ymax = std::max(ymax, Y.at(i, 1));
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
                  "\" height=\"" + std::to_string(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (size_t i = 0; i < E.ids.size(); ++i) {
    const double px = margin + (Y.at(static_cast<int>(i), 0) - xmin) / (xmax - xmin) * (W - 2 * margin);
    const double py = H - margin - (Y.at(static_cast<int>(i), 1) - ymin) / (ymax - ymin) * (H - 2 * margin);
    const char* color = kPalette[E.codes[i].value() & 15];
    if (E.unseen[i]) {
      s += "<circle cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) +
           "\" r=\"7\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    } else {
      s += "<circle cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) + "\" r=\"5\" fill=\"" + color +
           "\"/>\n";
    }
    s += "<text x=\"" + fmt(px + 8) + "\" y=\"" + fmt(py + 4) +
         "\" font-size=\"9\" font-family=\"sans-serif\">" + E.ids[i] + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string bar_chart_svg(const std::vector<std::string>& series,
                          const std::vector<BarGroup>& groups, const std::string& title) {
  const int W = 640, H = 400, margin = 50;
  const char* fills[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
                  "\" height=\"" + std::to_string(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
       "font-family=\"sans-serif\">" + title + "</text>\n";
  if (groups.empty()) return s + "</svg>\n";

  const double plot_w = W - 2.0 * margin;
  const double plot_h = H - 2.0 * margin;
  const double group_w = plot_w / static_cast<double>(groups.size());
  const double bar_w = group_w / (static_cast<double>(series.size()) + 1.0);

  // y axis 0..1 with gridlines every 0.25.
  for (int g = 0; g <= 4; ++g) {
    const double y = H - margin - plot_h * g / 4.0;
    s += "<line x1=\"" + std::to_string(margin) + "\" y1=\"" + fmt(y) + "\" x2=\"" +
         std::to_string(W - margin) + "\" y2=\"" + fmt(y) +
         "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    s += "<text x=\"" + std::to_string(margin - 6) + "\" y=\"" + fmt(y + 4) +
         "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">" +
         fmt(g / 4.0) + "</text>\n";
  }

  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const double gx = margin + group_w * static_cast<double>(gi);
    for (size_t si = 0; si < series.size() && si < groups[gi].values.size(); ++si) {
      const double v = std::clamp(groups[gi].values[si], 0.0, 1.0);
      const double bh = plot_h * v;
      const double bx = gx + bar_w * (static_cast<double>(si) + 0.5);
      s += "<rect x=\"" + fmt(bx) + "\" y=\"" + fmt(H - margin - bh) + "\" width=\"" +
           fmt(bar_w * 0.9) + "\" height=\"" + fmt(bh) + "\" fill=\"" + fills[si % 4] + "\"/>\n";
      s += "<text x=\"" + fmt(bx + bar_w * 0.45) + "\" y=\"" + fmt(H - margin - bh - 4) +
           "\" text-anchor=\"middle\" font-size=\"9\" font-family=\"sans-serif\">" + fmt(v) +
           "</text>\n";
    }
    s += "<text x=\"" + fmt(gx + group_w / 2) + "\" y=\"" + std::to_string(H - margin + 16) +
         "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" +
         groups[gi].label + "</text>\n";
  }
  // Legend.
  for (size_t si = 0; si < series.size(); ++si) {
    const double lx = margin + 110.0 * static_cast<double>(si);
    s += "<rect x=\"" + fmt(lx) + "\" y=\"" + std::to_string(H - 18) +
         "\" width=\"10\" height=\"10\" fill=\"" + std::string(fills[si % 4]) + "\"/>\n";
    s += "<text x=\"" + fmt(lx + 14) + "\" y=\"" + std::to_string(H - 9) +
         "\" font-size=\"11\" font-family=\"sans-serif\">" + series[si] + "</text>\n";
  }
  return s + "</svg>\n";
}

}  // namespace eegcid
