#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recg/binio.hpp"
#include "recg/tensor.hpp"

namespace recg {

enum class EncoderVariant { MeanPool, RecurrentGate };
enum class MergeMode { Sum };
enum class FusionInit { Identity, Uniform };

std::string_view to_string(EncoderVariant v);
EncoderVariant parse_encoder_variant(std::string_view s);

struct ModelConfig {
  std::size_t d_h = 64;
  std::size_t d_l = 32;
  EncoderVariant encoder = EncoderVariant::MeanPool;
  std::size_t max_seq_len = 50;
  MergeMode merge = MergeMode::Sum;
  FusionInit fusion_init = FusionInit::Identity;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Every trainable tensor of the model, templated on storage so the same
/// layout serves parameters (Matrix) and gradients (GradMatrix). Biases are
/// d_l x 1. Recurrent tensors are 0 x 0 for the mean-pool encoder.
template <typename T>
struct ParamSet {
  T proj_w, proj_b;    // first projection W_p, b_p
  T proj2_w, proj2_b;  // second projection, merged by sum
  T upd_in, upd_hid, upd_b;
  T rst_in, rst_hid, rst_b;
  T cand_in, cand_hid, cand_b;
  T fusion_w;  // d_l x 2d_l

  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    f("projection.weight", s.proj_w);
    f("projection.bias", s.proj_b);
    f("projection2.weight", s.proj2_w);
    f("projection2.bias", s.proj2_b);
    f("encoder.update.input", s.upd_in);
    f("encoder.update.hidden", s.upd_hid);
    f("encoder.update.bias", s.upd_b);
    f("encoder.reset.input", s.rst_in);
    f("encoder.reset.hidden", s.rst_hid);
    f("encoder.reset.bias", s.rst_b);
    f("encoder.candidate.input", s.cand_in);
    f("encoder.candidate.hidden", s.cand_hid);
    f("encoder.candidate.bias", s.cand_b);
    f("fusion.weight", s.fusion_w);
  }
};

struct ModelParams {
  ModelConfig config;
  ParamSet<Matrix> t;

  /// Zero-filled parameters with the shapes implied by `config`.
  static ModelParams zeros(const ModelConfig& config);
  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  std::size_t d_h() const noexcept { return config.d_h; }
  std::size_t d_l() const noexcept { return config.d_l; }
  void validate() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

using GradientTape = ParamSet<GradMatrix>;
GradientTape make_tape(const ModelParams& params);
void zero_tape(GradientTape& tape);

// ---- projection -------------------------------------------------------------

DVec project(const ModelParams& p, std::span<const float> e_sem);
std::vector<float> project_item(const ModelParams& p, std::span<const float> e_sem);
/// Accumulates dL/d(projection params) given dL/d(output).
void project_backward(std::span<const float> e_sem, std::span<const double> grad_out,
                      GradientTape& tape);
/// Projects every row of `raw` (n x d_h) to an n x d_l matrix.
Matrix project_all(const ModelParams& p, const Matrix& raw);

// ---- sequence encoders ------------------------------------------------------

struct GateStep {
  DVec h_prev, z, r, rh, n;
};

/// Forward record of one encoder run: outputs[t] is the representation after
/// consuming inputs[0..t].
struct EncoderTrace {
  std::vector<DVec> inputs;
  std::vector<GateStep> steps;
  std::vector<DVec> outputs;
};

EncoderTrace encode_trace(const ModelParams& p, std::vector<DVec> inputs);
/// grad_outputs[t] is dL/d outputs[t] (may be empty = zero). Accumulates
/// parameter gradients into `tape` and returns dL/d inputs[t].
std::vector<DVec> encode_backward(const ModelParams& p, const EncoderTrace& trace,
                                  const std::vector<DVec>& grad_outputs, GradientTape& tape);

/// User representation of a history (oldest first). Keeps only the last
/// max_seq_len entries. Throws EmptyHistory on an empty list.
DVec encode_sequence(const ModelParams& p, const std::vector<DVec>& embeddings);
std::vector<float> encode_sequence(const ModelParams& p,
                                   const std::vector<std::vector<float>>& embeddings);

double score(std::span<const double> user_repr, std::span<const double> item_emb);
double score(std::span<const float> user_repr, std::span<const float> item_emb);

// ---- checkpoints ------------------------------------------------------------

/// Free-form provenance stored in the checkpoint header.
struct CheckpointMeta {
  std::string source_corpus_digest;
  std::string source_domain;
  std::string variant;
  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

/// "ZRCG" | u32 version | u64 header length | JSON header | u32 tensor count |
/// per tensor: u32 name length, name, u32 rows, u32 cols, float32 data | CRC32
Bytes encode_checkpoint(const ModelParams& params, const CheckpointMeta& meta);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> data);
void checkpoint_save(const ModelParams& params, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);
/// Loads and requires the stored dimensions to match `expected`.
Checkpoint checkpoint_load(const std::filesystem::path& path, const ModelConfig& expected);

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace recg
