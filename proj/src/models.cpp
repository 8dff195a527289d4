#include "eegcid/models.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <json.hpp>

namespace eegcid {

using nlohmann::json;

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::eegnet: return "eegnet";
    case Backbone::lstm: return "lstm";
    case Backbone::dmu: return "dmu";
  }
  return "?";
}

Backbone backbone_from_string(const std::string& s) {
  if (s == "eegnet") return Backbone::eegnet;
  if (s == "lstm") return Backbone::lstm;
  if (s == "dmu") return Backbone::dmu;
  throw ValidationError("unknown backbone '" + s + "'");
}

void validate_spec(const ModelSpec& spec) {
  if (spec.input_channels <= (spec.use_ids ? kEmbedDim : 0))
    throw ValidationError("input_channels must leave at least one EEG row");
  if (spec.T < 1) throw ValidationError("T must be >= 1");
  if (spec.eegnet.f1 * spec.eegnet.depth_mult != 32)
    throw ValidationError("eegnet depthwise stage must produce 32 maps");
  if (spec.eegnet.f2 != 64) throw ValidationError("eegnet separable stage must produce 64 maps");
  if (spec.hidden != 64) throw ValidationError("recurrent hidden width is fixed at 64");
  if (spec.dmu_delays < 1) throw ValidationError("dmu_delays must be >= 1");
  if (spec.backbone == Backbone::eegnet && spec.eegnet_flat_len() < spec.eegnet.f2)
    throw ValidationError("epoch too short for the eegnet pooling chain");
}

namespace {

void init_uniform(ModelParams& p, const std::string& name, std::vector<int> shape, int fan_in) {
  Rng rng = rng_for(p.seed, "init." + name);
  Tensor t(std::move(shape));
  const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : t.v) v = rng.uniform(-s, s);
  p.tensors[name] = std::move(t);
}

void init_const(ModelParams& p, const std::string& name, std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  p.tensors[name] = std::move(t);
}

void init_bn(ModelParams& p, const std::string& name, int features) {
  init_const(p, name + ".gamma", {features}, 1.0);
  init_const(p, name + ".beta", {features}, 0.0);
  BnState st;
  st.mean = Tensor({features});
  st.var = Tensor({features});
  st.var.fill(1.0);
  p.bn[name] = std::move(st);
}

void check_finite(const Tensor& t, const std::string& where) {
  for (double v : t.v)
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite activation in " + where);
}

}  // namespace

ModelParams init_params(const ModelSpec& spec, uint64_t seed) {
  ModelParams p;
  p.spec = spec;
  p.seed = seed;
  const int Cp = spec.input_channels;
  const auto& eg = spec.eegnet;
  const int H = spec.hidden;

  switch (spec.backbone) {
    case Backbone::eegnet: {
      init_uniform(p, "conv1.w", {eg.f1, eg.temporal_kernel}, eg.temporal_kernel);
      init_bn(p, "bn1", eg.f1);
      init_uniform(p, "dw.w", {eg.f1, eg.depth_mult, Cp}, Cp);
      init_bn(p, "bn2", eg.f1 * eg.depth_mult);
      init_uniform(p, "sep_dw.w", {eg.f1 * eg.depth_mult, eg.separable_kernel},
                   eg.separable_kernel);
      init_uniform(p, "sep_pw.w", {eg.f2, eg.f1 * eg.depth_mult}, eg.f1 * eg.depth_mult);
      init_bn(p, "bn3", eg.f2);
      init_uniform(p, "fc.w", {spec.eegnet_flat_len(), 2}, spec.eegnet_flat_len());
      init_const(p, "fc.b", {2}, 0.0);
      break;
    }
    case Backbone::lstm: {
      init_uniform(p, "lstm.wx", {Cp, 4 * H}, Cp);
      init_uniform(p, "lstm.wh", {H, 4 * H}, H);
      init_const(p, "lstm.b", {4 * H}, 0.0);
      // Forget-gate bias +1 keeps early memory open.
      for (int h = 0; h < H; ++h) p.tensors["lstm.b"].at(H + h) = 1.0;
      init_uniform(p, "fc.w", {H, 2}, H);
      init_const(p, "fc.b", {2}, 0.0);
      break;
    }
    case Backbone::dmu: {
      const int D = spec.dmu_delays;
      init_uniform(p, "dmu.wg", {Cp, H * D}, Cp);
      init_uniform(p, "dmu.ug", {H, H * D}, H);
      init_const(p, "dmu.bg", {H * D}, 0.0);
      init_uniform(p, "dmu.wz", {Cp, H}, Cp);
      init_uniform(p, "dmu.uz", {H, H}, H);
      init_const(p, "dmu.bz", {H}, 0.0);
      init_uniform(p, "dmu.wc", {Cp, H}, Cp);
      init_uniform(p, "dmu.uc", {H, H}, H);
      init_const(p, "dmu.bc", {H}, 0.0);
      init_uniform(p, "fc.w", {H, 2}, H);
      init_const(p, "fc.b", {2}, 0.0);
      break;
    }
  }

  if (spec.use_ids) {
    if (spec.embedder == EmbedderKind::affine) {
      init_uniform(p, "embedder.w", {kProfileBits, kEmbedDim}, kProfileBits);
      init_const(p, "embedder.b", {kEmbedDim}, 0.0);
    } else {
      init_uniform(p, "embedder.table", {16, kEmbedDim}, 16);
    }
  }
  return p;
}

size_t parameter_count(const ModelParams& p) {
  size_t n = 0;
  for (const auto& [name, t] : p.tensors) n += t.numel();
  return n;
}

Tensor code_row(const ModelSpec& spec, const SubjectProfile& profile) {
  const ProfileCode code = encode_profile(profile);
  if (spec.embedder == EmbedderKind::affine) {
    Tensor t({1, kProfileBits});
    for (int j = 0; j < kProfileBits; ++j) t.at(0, j) = code.bits[static_cast<size_t>(j)];
    return t;
  }
  Tensor t({1, 16});
  t.at(0, code.value()) = 1.0;
  return t;
}

namespace {

struct Graph {
  Tape& tape;
  ModelParams& params;
  Mode mode;
  Rng* dropout_rng;
  std::map<std::string, int>* param_vars;

  int param(const std::string& name) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end())
      throw ValidationError("model has no parameter tensor '" + name + "'");
    const int id = tape.leaf(it->second, true);
    if (param_vars) (*param_vars)[name] = id;
    return id;
  }
};

int eegnet_graph(Graph& g, int x) {
  const ModelSpec& spec = g.params.spec;
  const auto& eg = spec.eegnet;
  Tape& t = g.tape;
  const int N = t.val(x).dim(0);
  const int Cp = t.val(x).dim(1);
  const int T = t.val(x).dim(2);

  // Temporal convolution, one kernel bank applied to every row.
  int h = t.conv_temporal(x, g.param("conv1.w"));  // [N,F1,Cp,T]
  h = t.reshape(h, {N, eg.f1, Cp * T});
  h = t.batchnorm(h, g.param("bn1.gamma"), g.param("bn1.beta"), &g.params.bn["bn1"], g.mode);
  h = t.reshape(h, {N, eg.f1, Cp, T});
  check_finite(t.val(h), "eegnet temporal block");

  // Depthwise spatial convolution over all rows, depth multiplier 2.
  h = t.depthwise_spatial(h, g.param("dw.w"));  // [N,32,T]
  h = t.batchnorm(h, g.param("bn2.gamma"), g.param("bn2.beta"), &g.params.bn["bn2"], g.mode);
  h = t.elu(h);
  h = t.avgpool_time(h, eg.pool1);
  if (g.dropout_rng) h = t.dropout(h, eg.dropout, *g.dropout_rng, g.mode);
  check_finite(t.val(h), "eegnet depthwise block");

  // Separable convolution: depthwise temporal then pointwise mixing to F2.
  h = t.depthwise_time(h, g.param("sep_dw.w"));
  h = t.pointwise(h, g.param("sep_pw.w"));  // [N,64,T/4]
  h = t.batchnorm(h, g.param("bn3.gamma"), g.param("bn3.beta"), &g.params.bn["bn3"], g.mode);
  h = t.elu(h);
  h = t.avgpool_time(h, eg.pool2);
  if (g.dropout_rng) h = t.dropout(h, eg.dropout, *g.dropout_rng, g.mode);
  check_finite(t.val(h), "eegnet separable block");

  h = t.reshape(h, {N, spec.eegnet_flat_len()});
  return t.add_rowvec(t.matmul(h, g.param("fc.w")), g.param("fc.b"));
}

int lstm_graph(Graph& g, int x) {
  Tape& t = g.tape;
  const int N = t.val(x).dim(0);
  const int T = t.val(x).dim(2);
  const int H = g.params.spec.hidden;

  const int wx = g.param("lstm.wx");
  const int wh = g.param("lstm.wh");
  const int b = g.param("lstm.b");
  int h = t.leaf(Tensor({N, H}), false);
  int c = t.leaf(Tensor({N, H}), false);

  for (int step = 0; step < T; ++step) {
    const int xt = t.slice_time(x, step);
    const int pre = t.add_rowvec(t.add(t.matmul(xt, wx), t.matmul(h, wh)), b);
    const int gi = t.sigmoid(t.slice_cols(pre, 0, H));
    const int gf = t.sigmoid(t.slice_cols(pre, H, 2 * H));
    const int gg = t.tanh_op(t.slice_cols(pre, 2 * H, 3 * H));
    const int go = t.sigmoid(t.slice_cols(pre, 3 * H, 4 * H));
    c = t.add(t.hadamard(gf, c), t.hadamard(gi, gg));
    h = t.hadamard(go, t.tanh_op(c));
  }
  check_finite(t.val(h), "lstm final hidden state");
  return t.add_rowvec(t.matmul(h, g.param("fc.w")), g.param("fc.b"));
}

int dmu_graph(Graph& g, int x, std::vector<int>* state_trace = nullptr) {
  Tape& t = g.tape;
  const int N = t.val(x).dim(0);
  const int T = t.val(x).dim(2);
  const int H = g.params.spec.hidden;
  const int D = g.params.spec.dmu_delays;

  const int wg = g.param("dmu.wg");
  const int ug = g.param("dmu.ug");
  const int bg = g.param("dmu.bg");
  const int wz = g.param("dmu.wz");
  const int uz = g.param("dmu.uz");
  const int bz = g.param("dmu.bz");
  const int wc = g.param("dmu.wc");
  const int uc = g.param("dmu.uc");
  const int bc = g.param("dmu.bc");

  const int zero = t.leaf(Tensor({N, H}), false);
  std::vector<int> history(static_cast<size_t>(D), zero);  // history[d-1] = h_{t-d}
  int h_prev = zero;

  for (int step = 0; step < T; ++step) {
    const int xt = t.slice_time(x, step);
    const int a = t.dmu_gates(xt, h_prev, wg, ug, bg, H, D);  // [N,H,D]
    const int m = t.delay_mix(a, history);
    const int z = t.sigmoid(t.add_rowvec(t.add(t.matmul(xt, wz), t.matmul(m, uz)), bz));
    const int cand = t.tanh_op(t.add_rowvec(t.add(t.matmul(xt, wc), t.matmul(m, uc)), bc));
    const int h = t.add(t.hadamard(t.one_minus(z), m), t.hadamard(z, cand));

    for (int d = D - 1; d > 0; --d)
      history[static_cast<size_t>(d)] = history[static_cast<size_t>(d - 1)];
    history[0] = h;
    h_prev = h;
    if (state_trace) state_trace->push_back(h);
  }
  check_finite(t.val(h_prev), "dmu final hidden state");
  return t.add_rowvec(t.matmul(h_prev, g.param("fc.w")), g.param("fc.b"));
}

int backbone_graph(Graph& g, int x) {
  switch (g.params.spec.backbone) {
    case Backbone::eegnet: return eegnet_graph(g, x);
    case Backbone::lstm: return lstm_graph(g, x);
    case Backbone::dmu: return dmu_graph(g, x);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

int model_forward(Tape& tape, ModelParams& params, const BatchInput& batch, Mode mode,
                  Rng* dropout_rng, std::map<std::string, int>* param_vars) {
  const ModelSpec& spec = params.spec;
  if (batch.eeg.ndim() != 3 || batch.eeg.dim(2) != spec.T)
    throw ValidationError("input must be [N, C, " + std::to_string(spec.T) + "], got " +
                          batch.eeg.shape_str());
  const int N = batch.eeg.dim(0);
  if (static_cast<int>(batch.labels.size()) != N && !batch.labels.empty())
    throw ValidationError("labels/input count mismatch");

  Graph g{tape, params, mode, mode == Mode::train ? dropout_rng : nullptr, param_vars};

  int x;
  if (spec.use_ids) {
    if (batch.eeg.dim(1) != spec.eeg_channels())
      throw ValidationError("expected " + std::to_string(spec.eeg_channels()) +
                            " EEG rows before fusion, got " + std::to_string(batch.eeg.dim(1)));
    const int code_w = spec.embedder == EmbedderKind::affine ? kProfileBits : 16;
    if (batch.codes.ndim() != 2 || batch.codes.dim(0) != N || batch.codes.dim(1) != code_w)
      throw ValidationError("profile codes must be [N," + std::to_string(code_w) + "]");
    const int eeg = tape.leaf(batch.eeg, false);
    const int codes = tape.leaf(batch.codes, false);
    int e;
    if (spec.embedder == EmbedderKind::affine)
      e = tape.add_rowvec(tape.matmul(codes, g.param("embedder.w")), g.param("embedder.b"));
    else
      e = tape.matmul(codes, g.param("embedder.table"));
    x = tape.concat_channels(eeg, tape.tile_time(e, spec.T));
  } else {
    if (batch.eeg.dim(1) != spec.input_channels)
      throw ValidationError("expected " + std::to_string(spec.input_channels) +
                            " input rows, got " + std::to_string(batch.eeg.dim(1)));
    x = tape.leaf(batch.eeg, false);
  }

  const int logits = backbone_graph(g, x);
  check_finite(tape.val(logits), to_string(spec.backbone) + " logits");
  return logits;
}

Tensor forward_batch(ModelParams& params, const BatchInput& batch) {
  Tape tape;
  const int logits = model_forward(tape, params, batch, Mode::eval, nullptr, nullptr);
  return tape.val(logits);
}

std::array<double, 2> forward(ModelParams& params, const TrialEpoch& epoch) {
  if (params.spec.use_ids)
    throw ValidationError("model expects fused input (use_ids=true); give it a FusedEpoch");
  BatchInput b;
  b.eeg = Tensor({1, epoch.channels, epoch.n_samples});
  std::copy(epoch.data.begin(), epoch.data.end(), b.eeg.v.begin());
  const Tensor out = forward_batch(params, b);
  return {out.at(0, 0), out.at(0, 1)};
}

std::array<double, 2> forward(ModelParams& params, const FusedEpoch& fused,
                              const Tensor& codes_row) {
  if (!params.spec.use_ids)
    throw ValidationError("model expects plain input (use_ids=false); give it a TrialEpoch");
  // The fused EEG rows feed the graph; the embedding rows are recomputed from
  // the live parameters, which the fused input must agree with.
  BatchInput b;
  const int C = params.spec.eeg_channels();
  if (fused.data.dim(0) != C + kEmbedDim)
    throw ValidationError("fused input must have " + std::to_string(C + kEmbedDim) + " rows");
  b.eeg = Tensor({1, C, fused.n_samples});
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < fused.n_samples; ++t) b.eeg.at(0, c, t) = fused.data.at(c, t);
  b.codes = codes_row;
  const Tensor out = forward_batch(params, b);
  return {out.at(0, 0), out.at(0, 1)};
}

std::array<double, 2> forward_with_profile(ModelParams& params, const TrialEpoch& epoch,
                                           const SubjectProfile& profile) {
  BatchInput b;
  b.eeg = Tensor({1, epoch.channels, epoch.n_samples});
  std::copy(epoch.data.begin(), epoch.data.end(), b.eeg.v.begin());
  if (params.spec.use_ids) b.codes = code_row(params.spec, profile);
  const Tensor out = forward_batch(params, b);
  return {out.at(0, 0), out.at(0, 1)};
}

EmbedderParams extract_embedder(const ModelParams& params) {
  if (!params.spec.use_ids || params.spec.embedder != EmbedderKind::affine)
    throw ValidationError("model has no affine embedder");
  EmbedderParams e;
  const Tensor& w = params.tensors.at("embedder.w");  // [4,16]
  const Tensor& b = params.tensors.at("embedder.b");
  for (int i = 0; i < kEmbedDim; ++i) {
    e.b.at(i) = b.at(i);
    for (int j = 0; j < kProfileBits; ++j) e.W.at(i, j) = w.at(j, i);
  }
  return e;
}

std::vector<std::vector<double>> dmu_hidden_trace(ModelParams& params, const TrialEpoch& epoch) {
  if (params.spec.backbone != Backbone::dmu)
    throw ValidationError("hidden trace is a dmu facility");
  Tape tape;
  BatchInput b;
  b.eeg = Tensor({1, epoch.channels, epoch.n_samples});
  std::copy(epoch.data.begin(), epoch.data.end(), b.eeg.v.begin());
  Graph g{tape, params, Mode::eval, nullptr, nullptr};
  const int x = tape.leaf(b.eeg, false);
  std::vector<int> trace_ids;
  dmu_graph(g, x, &trace_ids);
  std::vector<std::vector<double>> trace;
  trace.reserve(trace_ids.size());
  for (int id : trace_ids) trace.push_back(tape.val(id).v);
  return trace;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {
constexpr char kMagic[8] = {'E', 'E', 'G', 'C', 'I', 'D', 'K', '1'};

json spec_to_json(const ModelSpec& s) {
  json j;
  j["backbone"] = to_string(s.backbone);
  j["use_ids"] = s.use_ids;
  j["input_channels"] = s.input_channels;
  j["T"] = s.T;
  j["hidden"] = s.hidden;
  j["dmu_delays"] = s.dmu_delays;
  j["embedder"] = s.embedder == EmbedderKind::affine ? "affine" : "table";
  j["eegnet"] = {{"f1", s.eegnet.f1},
                 {"depth_mult", s.eegnet.depth_mult},
                 {"f2", s.eegnet.f2},
                 {"temporal_kernel", s.eegnet.temporal_kernel},
                 {"separable_kernel", s.eegnet.separable_kernel},
                 {"pool1", s.eegnet.pool1},
                 {"pool2", s.eegnet.pool2},
                 {"dropout", s.eegnet.dropout}};
  return j;
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.backbone = backbone_from_string(j.at("backbone").get<std::string>());
  s.use_ids = j.at("use_ids").get<bool>();
  s.input_channels = j.at("input_channels").get<int>();
  s.T = j.at("T").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.dmu_delays = j.at("dmu_delays").get<int>();
  s.embedder =
      j.at("embedder").get<std::string>() == "table" ? EmbedderKind::table : EmbedderKind::affine;
  const json& e = j.at("eegnet");
  s.eegnet.f1 = e.at("f1").get<int>();
  s.eegnet.depth_mult = e.at("depth_mult").get<int>();
  s.eegnet.f2 = e.at("f2").get<int>();
  s.eegnet.temporal_kernel = e.at("temporal_kernel").get<int>();
  s.eegnet.separable_kernel = e.at("separable_kernel").get<int>();
  s.eegnet.pool1 = e.at("pool1").get<int>();
  s.eegnet.pool2 = e.at("pool2").get<int>();
  s.eegnet.dropout = e.at("dropout").get<double>();
  return s;
}

void write_raw(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& file) {
  json header;
  header["version"] = 1;
  header["spec"] = spec_to_json(params.spec);
  header["seed"] = params.seed;
  header["step"] = params.step;
  json tensors = json::array();
  for (const auto& [name, t] : params.tensors)
    tensors.push_back({{"name", name}, {"shape", t.shape}});
  header["tensors"] = tensors;
  json bns = json::array();
  for (const auto& [name, st] : params.bn)
    bns.push_back({{"name", name},
                   {"features", st.mean.dim(0)},
                   {"momentum", st.momentum},
                   {"eps", st.eps}});
  header["bn"] = bns;

  const std::string htext = header.dump();
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  write_raw(out, kMagic, sizeof(kMagic));
  const uint64_t hlen = htext.size();
  write_raw(out, &hlen, sizeof(hlen));
  write_raw(out, htext.data(), htext.size());
  for (const auto& [name, t] : params.tensors)
    write_raw(out, t.data(), t.numel() * sizeof(double));
  for (const auto& [name, st] : params.bn) {
    write_raw(out, st.mean.data(), st.mean.numel() * sizeof(double));
    write_raw(out, st.var.data(), st.var.numel() * sizeof(double));
  }
  if (!out) throw IoError("short write to " + file.string());
}

ModelParams load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError(file.string() + ": not a checkpoint file");
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ValidationError(file.string() + ": truncated header");

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": bad header: " + e.what());
  }
  if (header.at("version").get<int>() != 1)
    throw ValidationError(file.string() + ": unsupported checkpoint version");

  ModelParams p;
  p.spec = spec_from_json(header.at("spec"));
  p.seed = header.at("seed").get<uint64_t>();
  p.step = header.at("step").get<int64_t>();
  for (const json& tj : header.at("tensors")) {
    Tensor t(tj.at("shape").get<std::vector<int>>());
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    p.tensors[tj.at("name").get<std::string>()] = std::move(t);
  }
  for (const json& bj : header.at("bn")) {
    BnState st;
    const int f = bj.at("features").get<int>();
    st.momentum = bj.at("momentum").get<double>();
    st.eps = bj.at("eps").get<double>();
    st.mean = Tensor({f});
    st.var = Tensor({f});
    in.read(reinterpret_cast<char*>(st.mean.data()),
            static_cast<std::streamsize>(st.mean.numel() * sizeof(double)));
    in.read(reinterpret_cast<char*>(st.var.data()),
            static_cast<std::streamsize>(st.var.numel() * sizeof(double)));
    p.bn[bj.at("name").get<std::string>()] = std::move(st);
  }
  if (!in) throw ValidationError(file.string() + ": truncated payload");
  validate_spec(p.spec);
  return p;
}

}  // namespace eegcid
