#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eegcid/dataset.hpp"
#include "eegcid/models.hpp"
#include "helpers.hpp"

using namespace eegcid;

namespace {

// Small but structurally complete eegnet variant for cheap tests.
ModelSpec small_eegnet(int eeg_channels, bool use_ids = false) {
  ModelSpec s;
  s.backbone = Backbone::eegnet;
  s.use_ids = use_ids;
  s.input_channels = eeg_channels + (use_ids ? kEmbedDim : 0);
  s.T = 33;
  s.eegnet.f1 = 3;
  s.eegnet.depth_mult = 2;
  s.eegnet.f2 = 5;
  s.eegnet.temporal_kernel = 7;
  s.eegnet.separable_kernel = 5;
  s.eegnet.pool1 = 2;
  s.eegnet.pool2 = 4;
  return s;
}

ModelSpec small_recurrent(Backbone b, int eeg_channels, int hidden, int delays = 3,
                          bool use_ids = false) {
  ModelSpec s;
  s.backbone = b;
  s.use_ids = use_ids;
  s.input_channels = eeg_channels + (use_ids ? kEmbedDim : 0);
  s.T = 9;
  s.hidden = hidden;
  s.dmu_delays = delays;
  return s;
}

BatchInput random_batch(const ModelSpec& spec, int n, uint64_t seed) {
  Rng rng(seed);
  BatchInput b;
  b.eeg = Tensor({n, spec.eeg_channels(), spec.T});
  for (auto& v : b.eeg.v) v = rng.normal();
  if (spec.use_ids) {
    const int w = spec.embedder == EmbedderKind::affine ? kProfileBits : 16;
    b.codes = Tensor({n, w});
    for (int i = 0; i < n; ++i) {
      if (spec.embedder == EmbedderKind::affine) {
        for (int j = 0; j < w; ++j) b.codes.at(i, j) = static_cast<double>(rng.below(2));
      } else {
        b.codes.at(i, static_cast<int>(rng.below(16))) = 1.0;
      }
    }
  }
  b.labels.resize(static_cast<size_t>(n));
  for (auto& l : b.labels) l = static_cast<int>(rng.below(2));
  return b;
}

TrialEpoch epoch_from(const Tensor& eeg_row, const std::string& id = "s000") {
  TrialEpoch e;
  e.subject_id = id;
  e.channels = eeg_row.dim(1);
  e.n_samples = eeg_row.dim(2);
  e.data.assign(eeg_row.v.begin(), eeg_row.v.end());
  return e;
}

}  // namespace

TEST_CASE("init: deterministic per seed, different across seeds, identical shapes") {
  const ModelSpec spec = small_eegnet(6);
  const ModelParams a = init_params(spec, 5);
  const ModelParams b = init_params(spec, 5);
  const ModelParams c = init_params(spec, 6);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (const auto& [name, t] : a.tensors) {
    CHECK(t.v == b.tensors.at(name).v);
    CHECK(t.shape == c.tensors.at(name).shape);
  }
  bool any_diff = false;
  for (const auto& [name, t] : a.tensors)
    if (t.v != c.tensors.at(name).v) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("init: common tensors of a baseline/+ids pair start identical") {
  ModelSpec base;
  base.backbone = Backbone::eegnet;
  base.use_ids = false;
  base.input_channels = 8;
  ModelSpec ids = base;
  ids.use_ids = true;
  ids.input_channels = 8 + kEmbedDim;
  const ModelParams pb = init_params(base, 77);
  const ModelParams pi = init_params(ids, 77);
  for (const auto& [name, t] : pb.tensors) {
    const Tensor& other = pi.tensors.at(name);
    if (t.shape == other.shape) CHECK(t.v == other.v);
  }
  // Shapes shared by construction for everything except the spatial filter.
  CHECK(pb.tensors.at("conv1.w").v == pi.tensors.at("conv1.w").v);
  CHECK(pb.tensors.at("fc.w").v == pi.tensors.at("fc.w").v);
  CHECK(pb.tensors.at("dw.w").shape != pi.tensors.at("dw.w").shape);
}

TEST_CASE("eegnet: published-scale parameter count matches the hand count") {
  ModelSpec spec;
  spec.backbone = Backbone::eegnet;
  spec.use_ids = true;
  spec.input_channels = 24;
  const ModelParams p = init_params(spec, 1);
  // temporal 16*32; bn1 2*16; depthwise 16*2*24; bn2 2*32; separable depth
  // 32*16; pointwise 64*32; bn3 2*64; readout 128*2+2; embedder 4*16+16.
  const size_t expected = 512 + 32 + 768 + 64 + 512 + 2048 + 128 + 258 + 80;
  CHECK(parameter_count(p) == expected);
  CHECK(spec.eegnet_flat_len() == 128);
}

TEST_CASE("eegnet: all-zero input with zero readout gives (0,0) logits") {
  const ModelSpec spec = small_eegnet(4);
  ModelParams p = init_params(spec, 3);
  p.tensors.at("fc.w").fill(0.0);
  p.tensors.at("fc.b").fill(0.0);
  BatchInput b;
  b.eeg = Tensor({2, 4, spec.T});
  b.labels = {0, 1};
  const Tensor logits = forward_batch(p, b);
  for (int n = 0; n < 2; ++n) {
    CHECK(logits.at(n, 0) == 0.0);
    CHECK(logits.at(n, 1) == 0.0);
  }
}

TEST_CASE("forward dispatch: shape guard and determinism") {
  ModelSpec spec = small_eegnet(8);
  ModelParams p = init_params(spec, 4);
  BatchInput wrong;
  wrong.eeg = Tensor({1, 24, spec.T});
  wrong.labels = {0};
  CHECK_THROWS_AS(forward_batch(p, wrong), ValidationError);

  const BatchInput b = random_batch(spec, 3, 5);
  const Tensor l1 = forward_batch(p, b);
  const Tensor l2 = forward_batch(p, b);
  CHECK(l1.v == l2.v);
}

TEST_CASE("all three backbones accept the same fused input width") {
  for (Backbone bb : {Backbone::eegnet, Backbone::lstm, Backbone::dmu}) {
    ModelSpec spec;
    spec.backbone = bb;
    spec.use_ids = true;
    spec.input_channels = 24;
    spec.T = 77;
    ModelParams p = init_params(spec, 9);
    const BatchInput b = random_batch(spec, 2, 11);
    const Tensor logits = forward_batch(p, b);
    CHECK(logits.dim(0) == 2);
    CHECK(logits.dim(1) == 2);
    for (double v : logits.v) CHECK(std::isfinite(v));
  }
}

TEST_CASE("lstm: zero input and zero biases give logits equal to the readout bias") {
  ModelSpec spec = small_recurrent(Backbone::lstm, 3, 4);
  ModelParams p = init_params(spec, 8);
  p.tensors.at("lstm.b").fill(0.0);  // clears the +1 forget bias
  p.tensors.at("fc.b").at(0) = 0.7;
  p.tensors.at("fc.b").at(1) = -0.3;
  BatchInput b;
  b.eeg = Tensor({2, 3, spec.T});
  b.labels = {0, 1};
  const Tensor logits = forward_batch(p, b);
  for (int n = 0; n < 2; ++n) {
    CHECK(logits.at(n, 0) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(logits.at(n, 1) == doctest::Approx(-0.3).epsilon(1e-12));
  }
}

TEST_CASE("lstm: T=1 matches hand-computed gate equations on a 2-unit cell") {
  ModelSpec spec = small_recurrent(Backbone::lstm, 3, 2);
  spec.T = 1;
  ModelParams p = init_params(spec, 15);
  BatchInput b = random_batch(spec, 1, 21);
  const Tensor logits = forward_batch(p, b);

  // Independent recomputation with scalar math.
  const Tensor& wx = p.tensors.at("lstm.wx");
  const Tensor& wh = p.tensors.at("lstm.wh");
  const Tensor& bias = p.tensors.at("lstm.b");
  const int H = 2;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double h_out[2];
  for (int u = 0; u < H; ++u) {
    double pre[4];
    for (int gate = 0; gate < 4; ++gate) {
      const int col = gate * H + u;
      double s = bias.at(col);
      for (int c = 0; c < 3; ++c) s += b.eeg.at(0, c, 0) * wx.at(c, col);
      (void)wh;  // h_0 = 0 contributes nothing at t = 1
      pre[gate] = s;
    }
    const double i = sig(pre[0]), f = sig(pre[1]), g = std::tanh(pre[2]), o = sig(pre[3]);
    (void)f;  // c_0 = 0
    const double c1 = i * g;
    h_out[u] = o * std::tanh(c1);
  }
  const Tensor& fw = p.tensors.at("fc.w");
  const Tensor& fb = p.tensors.at("fc.b");
  for (int k = 0; k < 2; ++k) {
    const double want = fb.at(k) + h_out[0] * fw.at(0, k) + h_out[1] * fw.at(1, k);
    CHECK(logits.at(0, k) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("dmu: first step has zero delayed memory regardless of gates") {
  ModelSpec spec = small_recurrent(Backbone::dmu, 3, 4, 3);
  ModelParams p = init_params(spec, 31);
  BatchInput b = random_batch(spec, 1, 33);
  const TrialEpoch e = epoch_from(b.eeg);
  const auto trace = dmu_hidden_trace(p, e);
  REQUIRE(trace.size() == static_cast<size_t>(spec.T));

  // m_1 = 0, so h_1 = z_1 * tanh(Wc x_1 + bc) with z_1 = sigmoid(Wz x_1 + bz).
  const Tensor& wz = p.tensors.at("dmu.wz");
  const Tensor& wc = p.tensors.at("dmu.wc");
  const Tensor& bz = p.tensors.at("dmu.bz");
  const Tensor& bc = p.tensors.at("dmu.bc");
  for (int u = 0; u < 4; ++u) {
    double pz = bz.at(u), pc = bc.at(u);
    for (int c = 0; c < 3; ++c) {
      pz += b.eeg.at(0, c, 0) * wz.at(c, u);
      pc += b.eeg.at(0, c, 0) * wc.at(c, u);
    }
    const double z = 1.0 / (1.0 + std::exp(-pz));
    const double want = z * std::tanh(pc);
    CHECK(trace[0][static_cast<size_t>(u)] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("dmu: single delay degenerates to the gated single-step cell") {
  ModelSpec spec = small_recurrent(Backbone::dmu, 3, 4, 1);
  ModelParams p = init_params(spec, 41);
  BatchInput b = random_batch(spec, 1, 43);
  const auto trace = dmu_hidden_trace(p, epoch_from(b.eeg));

  // Reference: m_t = h_{t-1} (softmax over one delay is identically 1), then
  // z/c gates as written, h_t = (1-z) m + z c. Computed with plain loops.
  const Tensor& wz = p.tensors.at("dmu.wz");
  const Tensor& uz = p.tensors.at("dmu.uz");
  const Tensor& bz = p.tensors.at("dmu.bz");
  const Tensor& wc = p.tensors.at("dmu.wc");
  const Tensor& uc = p.tensors.at("dmu.uc");
  const Tensor& bc = p.tensors.at("dmu.bc");
  std::vector<double> h(4, 0.0);
  for (int t = 0; t < spec.T; ++t) {
    std::vector<double> m = h, hn(4);
    for (int u = 0; u < 4; ++u) {
      double pz = bz.at(u), pc = bc.at(u);
      for (int c = 0; c < 3; ++c) {
        pz += b.eeg.at(0, c, t) * wz.at(c, u);
        pc += b.eeg.at(0, c, t) * wc.at(c, u);
      }
      for (int v = 0; v < 4; ++v) {
        pz += m[static_cast<size_t>(v)] * uz.at(v, u);
        pc += m[static_cast<size_t>(v)] * uc.at(v, u);
      }
      const double z = 1.0 / (1.0 + std::exp(-pz));
      hn[static_cast<size_t>(u)] = (1.0 - z) * m[static_cast<size_t>(u)] + z * std::tanh(pc);
    }
    h = hn;
    for (int u = 0; u < 4; ++u)
      CHECK(std::abs(trace[static_cast<size_t>(t)][static_cast<size_t>(u)] -
                     h[static_cast<size_t>(u)]) < 1e-12);
  }
}

TEST_CASE("dmu: causality - perturbing column t leaves earlier states untouched") {
  ModelSpec spec = small_recurrent(Backbone::dmu, 3, 4, 3);
  ModelParams p = init_params(spec, 51);
  BatchInput b = random_batch(spec, 1, 53);
  const auto base = dmu_hidden_trace(p, epoch_from(b.eeg));

  const int t_perturb = 5;
  BatchInput b2 = b;
  for (int c = 0; c < 3; ++c) b2.eeg.at(0, c, t_perturb) += 2.5;
  const auto bumped = dmu_hidden_trace(p, epoch_from(b2.eeg));
  for (int t = 0; t < t_perturb; ++t) CHECK(base[static_cast<size_t>(t)] == bumped[static_cast<size_t>(t)]);
  CHECK(base[t_perturb] != bumped[t_perturb]);
}

TEST_CASE("gradient checks: small variants of every backbone incl. fused inputs") {
  {
    const ModelSpec spec = small_eegnet(4, true);
    const auto res = testutil::grad_check(spec, 61, random_batch(spec, 4, 62), 10);
    INFO(res.worst);
    CHECK(res.max_rel_err < 1e-4);
  }
  {
    const ModelSpec spec = small_recurrent(Backbone::lstm, 3, 4, 3, true);
    const auto res = testutil::grad_check(spec, 63, random_batch(spec, 4, 64), 10);
    INFO(res.worst);
    CHECK(res.max_rel_err < 1e-4);
  }
  {
    const ModelSpec spec = small_recurrent(Backbone::dmu, 3, 4, 3, true);
    const auto res = testutil::grad_check(spec, 65, random_batch(spec, 4, 66), 10);
    INFO(res.worst);
    CHECK(res.max_rel_err < 1e-4);
  }
  {
    ModelSpec spec = small_eegnet(4, true);
    spec.embedder = EmbedderKind::table;
    const auto res = testutil::grad_check(spec, 67, random_batch(spec, 4, 68), 10);
    INFO(res.worst);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("shape totality over randomized small specs") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const int backbone = static_cast<int>(rng.below(3));
    const int C = 2 + static_cast<int>(rng.below(5));
    const bool ids = rng.below(2) == 1;
    ModelSpec spec;
    if (backbone == 0) {
      spec = small_eegnet(C, ids);
      spec.T = 16 + static_cast<int>(rng.below(40));
      if (spec.eegnet_flat_len() <= 0) continue;
    } else {
      spec = small_recurrent(backbone == 1 ? Backbone::lstm : Backbone::dmu, C,
                             2 + static_cast<int>(rng.below(4)),
                             1 + static_cast<int>(rng.below(4)), ids);
      spec.T = 2 + static_cast<int>(rng.below(12));
    }
    ModelParams p = init_params(spec, 100 + static_cast<uint64_t>(trial));
    const BatchInput b = random_batch(spec, 1 + static_cast<int>(rng.below(3)),
                                      200 + static_cast<uint64_t>(trial));
    const Tensor logits = forward_batch(p, b);
    CHECK(logits.dim(0) == b.n());
    CHECK(logits.dim(1) == 2);
    for (double v : logits.v) CHECK(std::isfinite(v));
  }
}

TEST_CASE("fused graph equals conditioning-module fusion") {
  ModelSpec spec = small_eegnet(5, true);
  ModelParams p = init_params(spec, 81);
  BatchInput b = random_batch(spec, 1, 82);

  // Route A: in-graph embedding + concat.
  const Tensor la = forward_batch(p, b);

  // Route B: explicit FusedEpoch whose ID rows use the same parameters.
  SubjectProfile prof;
  prof.subject_id = "s000";
  prof.dominance = b.codes.at(0, 0) > 0.5 ? Dominance::auditory : Dominance::visual;
  prof.sex = b.codes.at(0, 1) > 0.5;
  prof.music_education = b.codes.at(0, 2) > 0.5;
  prof.active_musician = b.codes.at(0, 3) > 0.5;
  const auto emb = embed(encode_profile(prof), extract_embedder(p));
  const FusedEpoch fused = fuse(epoch_from(b.eeg), emb);
  const auto lb = forward(p, fused, b.codes);
  CHECK(la.at(0, 0) == doctest::Approx(lb[0]).epsilon(1e-12));
  CHECK(la.at(0, 1) == doctest::Approx(lb[1]).epsilon(1e-12));
}

TEST_CASE("checkpoint: bit-exact round trip") {
  testutil::TmpDir tmp("ckpt");
  ModelSpec spec;
  spec.backbone = Backbone::lstm;
  spec.use_ids = true;
  spec.input_channels = 8 + kEmbedDim;
  ModelParams p = init_params(spec, 91);
  p.step = 1234;
  save_checkpoint(p, tmp.path / "m.ckpt");
  const ModelParams q = load_checkpoint(tmp.path / "m.ckpt");
  CHECK(q.step == 1234);
  CHECK(q.seed == 91);
  CHECK(q.spec.backbone == Backbone::lstm);
  REQUIRE(q.tensors.size() == p.tensors.size());
  for (const auto& [name, t] : p.tensors) CHECK(q.tensors.at(name).v == t.v);

  save_checkpoint(q, tmp.path / "m2.ckpt");
  CHECK(testutil::slurp(tmp.path / "m.ckpt") == testutil::slurp(tmp.path / "m2.ckpt"));

  CHECK_THROWS_AS(load_checkpoint(tmp.path / "nope.ckpt"), IoError);
  write_file_atomic(tmp.path / "junk.ckpt", "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "junk.ckpt"), ValidationError);
}

TEST_CASE("plain/fused dispatch errors") {
  ModelSpec plain = small_eegnet(4, false);
  ModelParams pp = init_params(plain, 95);
  BatchInput fb = random_batch(small_eegnet(4, true), 1, 96);
  TrialEpoch e = epoch_from(fb.eeg);
  CHECK_NOTHROW(forward(pp, e));

  ModelSpec with = small_eegnet(4, true);
  ModelParams pw = init_params(with, 97);
  CHECK_THROWS_AS(forward(pw, e), ValidationError);
}
