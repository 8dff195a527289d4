#include "eegcid/conditioning.hpp"

#include <cmath>

#include "eegcid/common.hpp"

namespace eegcid {

ProfileCode encode_profile(const SubjectProfile& p) {
  validate_profile(p);
  ProfileCode c;
  c.bits[0] = p.dominance == Dominance::auditory ? 1 : 0;
  c.bits[1] = p.sex;
  c.bits[2] = p.music_education;
  c.bits[3] = p.active_musician;
  return c;
}

std::vector<double> embed(const ProfileCode& code, const EmbedderParams& theta) {
  std::vector<double> e(kEmbedDim);
  for (int i = 0; i < kEmbedDim; ++i) {
    double s = theta.b.at(i);
    for (int j = 0; j < kProfileBits; ++j) s += theta.W.at(i, j) * code.bits[static_cast<size_t>(j)];
    if (!std::isfinite(s)) throw ValidationError("embedder parameters are not finite");
    e[static_cast<size_t>(i)] = s;
  }
  return e;
}

FusedEpoch fuse(const TrialEpoch& epoch, const std::vector<double>& e) {
  if (e.size() != static_cast<size_t>(kEmbedDim))
    throw ValidationError("embedding must have " + std::to_string(kEmbedDim) + " entries, got " +
                          std::to_string(e.size()));
  FusedEpoch f;
  f.subject_id = epoch.subject_id;
  f.eeg_channels = epoch.channels;
  f.n_samples = epoch.n_samples;
  f.label = epoch.label;
  f.condition = epoch.condition;
  f.data = Tensor({epoch.channels + kEmbedDim, epoch.n_samples});
  for (int c = 0; c < epoch.channels; ++c)
    for (int t = 0; t < epoch.n_samples; ++t) f.data.at(c, t) = epoch.at(c, t);
  for (int i = 0; i < kEmbedDim; ++i)
    for (int t = 0; t < epoch.n_samples; ++t)
      f.data.at(epoch.channels + i, t) = e[static_cast<size_t>(i)];
  return f;
}

void condition_dataset(const Dataset& ds, const std::vector<int>& indices,
                       const EmbedderParams& theta,
                       const std::function<void(const FusedEpoch&)>& sink) {
  if (ds.stage != Stage::preprocessed)
    throw ValidationError("condition_dataset expects a preprocessed dataset");
  for (int i : indices) {
    const TrialEpoch& ep = ds.epochs.at(static_cast<size_t>(i));
    auto it = ds.profiles.find(ep.subject_id);
    if (it == ds.profiles.end())
      throw ValidationError("missing profile for subject '" + ep.subject_id + "'");
    sink(fuse(ep, embed(encode_profile(it->second), theta)));
  }
}

bool embedder_has_rank4(const Tensor& W, double tol) {
  // Gaussian elimination with partial pivoting on a copy.
  Tensor a = W;
  const int rows = a.dim(0), cols = a.dim(1);
  int rank = 0;
  for (int col = 0; col < cols && rank < rows; ++col) {
    int pivot = -1;
    double best = tol;
    for (int r = rank; r < rows; ++r) {
      if (std::abs(a.at(r, col)) > best) {
        best = std::abs(a.at(r, col));
        pivot = r;
      }
    }
    if (pivot < 0) continue;
    for (int j = 0; j < cols; ++j) std::swap(a.at(rank, j), a.at(pivot, j));
    for (int r = 0; r < rows; ++r) {
      if (r == rank || a.at(r, col) == 0.0) continue;
      const double f = a.at(r, col) / a.at(rank, col);
      for (int j = 0; j < cols; ++j) a.at(r, j) -= f * a.at(rank, j);
    }
    ++rank;
  }
  return rank == cols;
}

}  // namespace eegcid
