#include "recg/model.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

namespace recg {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_bias(std::string_view name) { return name.ends_with(".bias"); }

}  // namespace

std::string_view to_string(EncoderVariant v) {
  return v == EncoderVariant::MeanPool ? "mean-pool" : "recurrent-gate";
}

EncoderVariant parse_encoder_variant(std::string_view s) {
  if (s == "mean-pool") return EncoderVariant::MeanPool;
  if (s == "recurrent-gate") return EncoderVariant::RecurrentGate;
  throw Error(ErrorCode::InvalidConfig, "unknown encoder variant '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (d_h == 0 || d_l == 0) throw Error(ErrorCode::InvalidConfig, "d_h and d_l must be positive");
  if (d_l >= d_h) throw Error(ErrorCode::InvalidConfig, "latent dim d_l must be smaller than d_h");
  if (max_seq_len == 0) throw Error(ErrorCode::InvalidConfig, "max_seq_len must be positive");
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const auto dl = config.d_l, dh = config.d_h;
  ModelParams p;
  p.config = config;
  auto& t = p.t;
  t.proj_w = Matrix(dl, dh);
  t.proj_b = Matrix(dl, 1);
  t.proj2_w = Matrix(dl, dh);
  t.proj2_b = Matrix(dl, 1);
  if (config.encoder == EncoderVariant::RecurrentGate) {
    for (Matrix* m : {&t.upd_in, &t.upd_hid, &t.rst_in, &t.rst_hid, &t.cand_in, &t.cand_hid}) {
      *m = Matrix(dl, dl);
    }
    for (Matrix* m : {&t.upd_b, &t.rst_b, &t.cand_b}) *m = Matrix(dl, 1);
  }
  t.fusion_w = Matrix(dl, 2 * dl);
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  auto p = zeros(config);
  std::mt19937_64 rng(seed);
  p.t.for_each([&](const char* name, Matrix& m) {
    if (m.empty() || is_bias(name)) return;
    if (std::string_view(name) == "fusion.weight" && config.fusion_init == FusionInit::Identity) {
      for (std::size_t i = 0; i < config.d_l; ++i) m(i, i) = 1.0f;
      return;
    }
    const float bound = 1.0f / std::sqrt(static_cast<float>(m.cols()));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (auto& v : m.flat()) v = dist(rng);
  });
  return p;
}

void ModelParams::validate() const {
  config.validate();
  const auto ref = zeros(config);
  auto ref_it = std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>{};
  ref.t.for_each([&](const char* name, const Matrix& m) {
    ref_it.push_back({name, {m.rows(), m.cols()}});
  });
  std::size_t i = 0;
  t.for_each([&](const char* name, const Matrix& m) {
    const auto& [rname, shape] = ref_it[i++];
    if (m.rows() != shape.first || m.cols() != shape.second) {
      throw Error(ErrorCode::DimensionMismatch, std::string("tensor ") + name + " has wrong shape");
    }
    if (!all_finite(m.flat())) {
      throw Error(ErrorCode::NonFinite, std::string("tensor ") + name + " has non-finite entries");
    }
  });
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config)) return false;
  bool eq = true;
  std::vector<const Matrix*> bs;
  b.t.for_each([&](const char*, const Matrix& m) { bs.push_back(&m); });
  std::size_t i = 0;
  a.t.for_each([&](const char*, const Matrix& m) {
    const auto& o = *bs[i++];
    if (!m.same_shape(o) ||
        std::memcmp(m.flat().data(), o.flat().data(), m.flat().size_bytes()) != 0) {
      eq = false;
    }
  });
  return eq;
}

GradientTape make_tape(const ModelParams& params) {
  GradientTape tape;
  std::vector<const Matrix*> src;
  params.t.for_each([&](const char*, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  tape.for_each([&](const char*, GradMatrix& g) {
    g = GradMatrix(src[i]->rows(), src[i]->cols());
    ++i;
  });
  return tape;
}

void zero_tape(GradientTape& tape) {
  tape.for_each([](const char*, GradMatrix& g) { g.zero(); });
}

// ---- projection -------------------------------------------------------------

DVec project(const ModelParams& p, std::span<const float> e_sem) {
  if (e_sem.size() != p.d_h()) {
    throw Error(ErrorCode::DimensionMismatch, "semantic embedding has length " +
                                                  std::to_string(e_sem.size()) + ", expected " +
                                                  std::to_string(p.d_h()));
  }
  DVec out(p.d_l());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = double(p.t.proj_b(i, 0)) + double(p.t.proj2_b(i, 0));
  }
  matvec_acc(p.t.proj_w, e_sem, std::span<double>(out));
  matvec_acc(p.t.proj2_w, e_sem, std::span<double>(out));
  return out;
}

std::vector<float> project_item(const ModelParams& p, std::span<const float> e_sem) {
  const auto d = project(p, e_sem);
  return {d.begin(), d.end()};
}

void project_backward(std::span<const float> e_sem, std::span<const double> grad_out,
                      GradientTape& tape) {
  // Sum merge: both layers see the same upstream gradient.
  tape.proj_w.add_outer(grad_out, e_sem);
  tape.proj2_w.add_outer(grad_out, e_sem);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    tape.proj_b(i, 0) += grad_out[i];
    tape.proj2_b(i, 0) += grad_out[i];
  }
}

Matrix project_all(const ModelParams& p, const Matrix& raw) {
  Matrix out(raw.rows(), p.d_l());
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    const auto d = project(p, raw.row(r));
    auto dst = out.row(r);
    for (std::size_t c = 0; c < d.size(); ++c) dst[c] = static_cast<float>(d[c]);
  }
  return out;
}

// ---- sequence encoders ------------------------------------------------------

namespace {

DVec gate_preact(const Matrix& w_in, const Matrix& w_hid, const Matrix& b,
                 std::span<const double> x, std::span<const double> h) {
  DVec a(b.rows());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = b(i, 0);
  matvec_acc(w_in, x, std::span<double>(a));
  matvec_acc(w_hid, h, std::span<double>(a));
  return a;
}

}  // namespace

EncoderTrace encode_trace(const ModelParams& p, std::vector<DVec> inputs) {
  const auto dl = p.d_l();
  EncoderTrace tr;
  tr.inputs = std::move(inputs);
  for (const auto& x : tr.inputs) {
    if (x.size() != dl) throw Error(ErrorCode::DimensionMismatch, "encoder input has wrong length");
  }
  tr.outputs.reserve(tr.inputs.size());
  if (p.config.encoder == EncoderVariant::MeanPool) {
    DVec sum(dl, 0.0);
    for (std::size_t t = 0; t < tr.inputs.size(); ++t) {
      DVec out(dl);
      for (std::size_t i = 0; i < dl; ++i) {
        sum[i] += tr.inputs[t][i];
        out[i] = sum[i] / double(t + 1);
      }
      tr.outputs.push_back(std::move(out));
    }
    return tr;
  }

  const auto& w = p.t;
  DVec h(dl, 0.0);
  tr.steps.reserve(tr.inputs.size());
  for (const auto& x : tr.inputs) {
    GateStep s;
    s.h_prev = h;
    s.z = gate_preact(w.upd_in, w.upd_hid, w.upd_b, x, h);
    s.r = gate_preact(w.rst_in, w.rst_hid, w.rst_b, x, h);
    for (std::size_t i = 0; i < dl; ++i) {
      s.z[i] = sigmoid(s.z[i]);
      s.r[i] = sigmoid(s.r[i]);
    }
    s.rh.resize(dl);
    for (std::size_t i = 0; i < dl; ++i) s.rh[i] = s.r[i] * h[i];
    s.n = gate_preact(w.cand_in, w.cand_hid, w.cand_b, x, s.rh);
    for (std::size_t i = 0; i < dl; ++i) {
      s.n[i] = std::tanh(s.n[i]);
      h[i] = (1.0 - s.z[i]) * h[i] + s.z[i] * s.n[i];
    }
    tr.steps.push_back(std::move(s));
    tr.outputs.push_back(h);
  }
  return tr;
}

std::vector<DVec> encode_backward(const ModelParams& p, const EncoderTrace& tr,
                                  const std::vector<DVec>& grad_outputs, GradientTape& tape) {
  const auto dl = p.d_l();
  const std::size_t T = tr.inputs.size();
  std::vector<DVec> g_in(T, DVec(dl, 0.0));
  auto g_out = [&](std::size_t t) -> const DVec* {
    return t < grad_outputs.size() && !grad_outputs[t].empty() ? &grad_outputs[t] : nullptr;
  };

  if (p.config.encoder == EncoderVariant::MeanPool) {
    DVec suffix(dl, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      if (const auto* g = g_out(t)) {
        for (std::size_t i = 0; i < dl; ++i) suffix[i] += (*g)[i] / double(t + 1);
      }
      g_in[t] = suffix;
    }
    return g_in;
  }

  const auto& w = p.t;
  DVec dh(dl, 0.0);
  DVec da_z(dl), da_r(dl), da_n(dl), drh(dl), dh_prev(dl);
  for (std::size_t t = T; t-- > 0;) {
    if (const auto* g = g_out(t)) {
      for (std::size_t i = 0; i < dl; ++i) dh[i] += (*g)[i];
    }
    const auto& s = tr.steps[t];
    const auto& x = tr.inputs[t];
    for (std::size_t i = 0; i < dl; ++i) {
      const double dn = dh[i] * s.z[i];
      const double dz = dh[i] * (s.n[i] - s.h_prev[i]);
      dh_prev[i] = dh[i] * (1.0 - s.z[i]);
      da_n[i] = dn * (1.0 - s.n[i] * s.n[i]);
      da_z[i] = dz * s.z[i] * (1.0 - s.z[i]);
    }
    // candidate
    tape.cand_in.add_outer(std::span<const double>(da_n), std::span<const double>(x));
    tape.cand_hid.add_outer(std::span<const double>(da_n), std::span<const double>(s.rh));
    std::fill(drh.begin(), drh.end(), 0.0);
    matvec_t_acc(w.cand_in, da_n, g_in[t]);
    matvec_t_acc(w.cand_hid, da_n, drh);
    for (std::size_t i = 0; i < dl; ++i) {
      tape.cand_b(i, 0) += da_n[i];
      dh_prev[i] += drh[i] * s.r[i];
      const double dr = drh[i] * s.h_prev[i];
      da_r[i] = dr * s.r[i] * (1.0 - s.r[i]);
    }
    // update gate
    tape.upd_in.add_outer(std::span<const double>(da_z), std::span<const double>(x));
    tape.upd_hid.add_outer(std::span<const double>(da_z), std::span<const double>(s.h_prev));
    matvec_t_acc(w.upd_in, da_z, g_in[t]);
    matvec_t_acc(w.upd_hid, da_z, dh_prev);
    // reset gate
    tape.rst_in.add_outer(std::span<const double>(da_r), std::span<const double>(x));
    tape.rst_hid.add_outer(std::span<const double>(da_r), std::span<const double>(s.h_prev));
    matvec_t_acc(w.rst_in, da_r, g_in[t]);
    matvec_t_acc(w.rst_hid, da_r, dh_prev);
    for (std::size_t i = 0; i < dl; ++i) {
      tape.upd_b(i, 0) += da_z[i];
      tape.rst_b(i, 0) += da_r[i];
    }
    dh = dh_prev;
  }
  return g_in;
}

DVec encode_sequence(const ModelParams& p, const std::vector<DVec>& embeddings) {
  if (embeddings.empty()) throw Error(ErrorCode::EmptyHistory, "cannot encode an empty history");
  const auto keep = std::min(embeddings.size(), p.config.max_seq_len);
  std::vector<DVec> window(embeddings.end() - static_cast<std::ptrdiff_t>(keep), embeddings.end());
  auto tr = encode_trace(p, std::move(window));
  return std::move(tr.outputs.back());
}

std::vector<float> encode_sequence(const ModelParams& p,
                                   const std::vector<std::vector<float>>& embeddings) {
  std::vector<DVec> in;
  in.reserve(embeddings.size());
  for (const auto& e : embeddings) in.emplace_back(e.begin(), e.end());
  const auto out = encode_sequence(p, in);
  return {out.begin(), out.end()};
}

double score(std::span<const double> user_repr, std::span<const double> item_emb) {
  return dot(user_repr, item_emb);
}

double score(std::span<const float> user_repr, std::span<const float> item_emb) {
  return dot(user_repr, item_emb);
}

// ---- checkpoints ------------------------------------------------------------

namespace {

std::string_view to_string(FusionInit f) { return f == FusionInit::Identity ? "identity" : "uniform"; }

}  // namespace

Bytes encode_checkpoint(const ModelParams& params, const CheckpointMeta& meta) {
  params.validate();
  const auto& c = params.config;
  nlohmann::json header = {
      {"d_h", c.d_h},
      {"d_l", c.d_l},
      {"encoder", to_string(c.encoder)},
      {"merge_mode", "sum"},
      {"max_seq_len", c.max_seq_len},
      {"fusion_init", to_string(c.fusion_init)},
      {"meta",
       {{"source_corpus_digest", meta.source_corpus_digest},
        {"source_domain", meta.source_domain},
        {"variant", meta.variant}}},
  };
  const auto text = header.dump();
  ByteWriter w;
  w.raw("ZRCG");
  w.u32(kCheckpointVersion);
  w.u64(text.size());
  w.raw(text);
  std::uint32_t n = 0;
  params.t.for_each([&](const char*, const Matrix&) { ++n; });
  w.u32(n);
  params.t.for_each([&](const char* name, const Matrix& m) {
    const std::string_view nm(name);
    w.u32(static_cast<std::uint32_t>(nm.size()));
    w.raw(nm);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.floats(m.flat());
  });
  w.seal_crc();
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> data) {
  ByteReader r(data, ErrorCode::PayloadSizeMismatch);
  if (data.size() < 8 || r.str(4) != "ZRCG") throw Error(ErrorCode::BadMagic, "not a checkpoint file");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::BadVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  check_trailing_crc(data);
  const auto header_len = r.u64();
  if (header_len > r.remaining()) throw Error(ErrorCode::PayloadSizeMismatch, "header exceeds file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(static_cast<std::size_t>(header_len)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("checkpoint header: ") + e.what());
  }
  ModelConfig cfg;
  Checkpoint ck;
  try {
    cfg.d_h = header.at("d_h").get<std::size_t>();
    cfg.d_l = header.at("d_l").get<std::size_t>();
    cfg.encoder = parse_encoder_variant(header.at("encoder").get<std::string>());
    cfg.max_seq_len = header.at("max_seq_len").get<std::size_t>();
    if (header.at("merge_mode").get<std::string>() != "sum") {
      throw Error(ErrorCode::InvalidConfig, "unsupported merge mode");
    }
    cfg.fusion_init = header.value("fusion_init", "identity") == "uniform" ? FusionInit::Uniform
                                                                            : FusionInit::Identity;
    const auto& m = header.at("meta");
    ck.meta.source_corpus_digest = m.value("source_corpus_digest", "");
    ck.meta.source_domain = m.value("source_domain", "");
    ck.meta.variant = m.value("variant", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("checkpoint header: ") + e.what());
  }
  ck.params = ModelParams::zeros(cfg);
  const auto n = r.u32();
  std::uint32_t expected = 0;
  ck.params.t.for_each([&](const char*, const Matrix&) { ++expected; });
  if (n != expected) throw Error(ErrorCode::CountMismatch, "unexpected tensor count");
  ck.params.t.for_each([&](const char* name, Matrix& m) {
    const auto len = r.u32();
    const auto got = r.str(len);
    if (got != name) throw Error(ErrorCode::Parse, "expected tensor " + std::string(name) + ", got " + got);
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (rows != m.rows() || cols != m.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "tensor " + got + " shape disagrees with header");
    }
    r.floats(m.flat());
  });
  if (r.remaining() != 4) throw Error(ErrorCode::PayloadSizeMismatch, "trailing bytes in checkpoint");
  ck.params.validate();
  return ck;
}

void checkpoint_save(const ModelParams& params, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(params, meta));
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

Checkpoint checkpoint_load(const std::filesystem::path& path, const ModelConfig& expected) {
  auto ck = checkpoint_load(path);
  const auto& got = ck.params.config;
  if (got.d_h != expected.d_h || got.d_l != expected.d_l || got.encoder != expected.encoder) {
    throw Error(ErrorCode::DimensionMismatch,
                "checkpoint has d_h=" + std::to_string(got.d_h) + " d_l=" + std::to_string(got.d_l) +
                    " but configuration expects d_h=" + std::to_string(expected.d_h) +
                    " d_l=" + std::to_string(expected.d_l));
  }
  return ck;
}

}  // namespace recg
