#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "recg/corpus.hpp"
#include "recg/evalkit.hpp"
#include "recg/model.hpp"
#include "recg/objective.hpp"
#include "recg/patterns.hpp"
#include "recg/semstore.hpp"

namespace recg {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> grad_clip;  // global max-norm
  std::size_t patience = 5;         // epochs without validation N@10 gain

  // Ablation switches. item_generalization=false is the -Sem baseline's
  // "no generalization losses"; sequence_generalization=false disables fusion.
  bool item_generalization = true;
  bool sequence_generalization = true;
  double fusion_warm_fraction = 0.2;  // trailing share of epochs that train W_f
  std::size_t n_patterns = 32;

  EvalConfig validation{{10}, 100, 1, 1, TieRule::Pessimistic};

  void validate() const;
};

/// "Sem", "RecG", or "RecG w/o ID" style labels for reports.
std::string ablation_label(const TrainConfig& train, const GenLossConfig& gen);

// ---- training data ----------------------------------------------------------

/// Source-domain interactions plus the item pool the generalization losses
/// draw from. Pool index p < n_source() is source item p; later entries are
/// other-domain items (embeddings only, never their interactions).
struct TrainData {
  Corpus source;
  Matrix source_raw;
  std::vector<Matrix> aux_raw;
  std::vector<std::string> aux_names;

  std::size_t n_source() const noexcept { return source.items.size(); }
  std::size_t pool_size() const noexcept;
  /// 0 for the source, 1 + k for auxiliary domain k.
  std::size_t pool_domain(std::size_t p) const;
  std::span<const float> pool_row(std::size_t p) const;
  std::size_t n_pool_domains() const noexcept { return 1 + aux_raw.size(); }
};

/// Builds TrainData from a multi-domain corpus. Metadata purity adds the
/// other domains' item embeddings (not their interactions) to the pool.
TrainData make_train_data(const Corpus& corpus, const BoundStore& bound, DomainIndex source,
                          GenPurity purity);

struct Batch {
  std::vector<std::vector<std::uint32_t>> seqs;  // pool indices, oldest first
  std::vector<std::vector<std::uint32_t>> negs;  // negs[u][t] pairs with seqs[u][t+1]
  std::vector<std::uint32_t> gen_extra;          // uniform per-domain extras
};

struct TrainSequence {
  std::vector<ItemIndex> items;
  UserIndex user = 0;  // negatives avoid this user's whole history
};

/// One training sequence per split entry: the training prefix, truncated to
/// the last max_seq_len+1 items. Entries shorter than 2 are skipped.
std::vector<TrainSequence> training_sequences(const Corpus& source, std::size_t max_seq_len);

Batch sample_batch(const TrainData& data, const std::vector<TrainSequence>& sequences,
                   std::span<const std::size_t> members, const GenLossConfig& gen, std::mt19937_64& rng);

struct BatchResult {
  LossTerms loss;
  std::size_t pairs = 0;
  std::size_t gen_items = 0;
};

/// Forward pass of L_total on one batch; with a tape, also the exact reverse
/// pass (tape is accumulated into, not cleared). `bank` routes every user
/// representation through attend+fuse.
BatchResult evaluate_batch(const ModelParams& params, const TrainData& data, const Batch& batch,
                           const GenLossConfig& gen, bool item_generalization, const BankView* bank,
                           GradientTape* tape);

// ---- optimizer --------------------------------------------------------------

struct AdamState {
  GradientTape m, v;
  std::size_t step = 0;
};

AdamState make_adam(const ModelParams& params);
void adam_step(ModelParams& params, const GradientTape& grad, AdamState& state, const TrainConfig& cfg);
double gradient_norm(const GradientTape& tape);
/// Rescales the tape to norm `max_norm` when above it; returns the pre-clip norm.
double clip_gradients(GradientTape& tape, double max_norm);
/// Throws NonFinite naming the first tensor holding a NaN/inf gradient.
void require_finite(const GradientTape& tape);

// ---- epoch loop -------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_rec = 0.0;
  double mean_total = 0.0;
  double val_ndcg10 = 0.0;
  bool fused = false;
};

struct TrainResult {
  ModelParams params;                // best validation parameters
  std::optional<PatternBank> bank;   // bank in force at the best epoch
  std::vector<LossTerms> steps;      // per-step loss log
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string divergence;
};

/// User representations (unfused) after each training prefix.
std::vector<DVec> source_user_reprs(const ModelParams& params, const TrainData& data);

TrainResult train(const TrainData& data, const ModelConfig& model, const GenLossConfig& gen,
                  const TrainConfig& cfg);

}  // namespace recg
