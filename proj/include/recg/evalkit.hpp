#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recg/corpus.hpp"
#include "recg/model.hpp"
#include "recg/patterns.hpp"

namespace recg {

enum class TieRule { Pessimistic, Optimistic };

struct EvalConfig {
  std::vector<std::size_t> cutoffs = {5, 10, 20};
  std::size_t n_negatives = 100;
  std::size_t n_repeats = 5;
  std::uint64_t seed = 1;
  TieRule tie_rule = TieRule::Pessimistic;

  void validate() const;
};

/// 1 + #negatives scoring above the truth (+ exact ties when pessimistic).
std::size_t rank_one(double truth_score, std::span<const double> negative_scores, TieRule rule);
std::size_t rank_one(std::span<const double> user_repr, std::span<const double> truth_emb,
                     const std::vector<DVec>& negative_embs, TieRule rule);

struct CutoffMetrics {
  std::size_t k = 0;
  double recall_pct = 0.0;
  double ndcg_pct = 0.0;
};

/// R@k and single-truth N@k (ideal DCG = 1), as percentages.
std::vector<CutoffMetrics> metrics(std::span<const std::size_t> ranks,
                                   std::span<const std::size_t> cutoffs);

struct EvalReport {
  std::string variant;
  std::string source_domain;
  std::string target_domain;
  std::vector<CutoffMetrics> cutoffs;               // mean over repeats
  std::vector<std::vector<CutoffMetrics>> repeats;  // per repeat
  std::size_t users = 0;
  std::uint64_t seed = 0;

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
  nlohmann::json to_json() const;
};

enum class EvalTarget { Validation, Test };

/// Frozen-parameter scoring pipeline over one single-domain corpus. With a
/// bank, user representations go through attend+fuse before scoring.
struct Scorer {
  const ModelParams* params = nullptr;
  const PatternBank* bank = nullptr;

  DVec user_repr(const std::vector<DVec>& item_embs, std::span<const ItemIndex> history) const;
};

/// Leave-one-out ranking against sampled negatives. Validation ranks the
/// penultimate item given the train prefix; Test ranks the last item given
/// prefix + validation item. Negatives are drawn per repeat from the
/// corpus's items, excluding everything the user interacted with.
EvalReport evaluate(const Scorer& scorer, const Corpus& corpus, const Matrix& raw_embeddings,
                    EvalTarget target, const EvalConfig& config);

/// Target-domain inference with every parameter frozen. Rejects overlapping
/// user/item ids and a bank whose fingerprint does not match the checkpoint.
EvalReport zero_shot_eval(std::span<const std::uint8_t> checkpoint_bytes, const PatternBank* bank,
                          const Corpus& source, const Corpus& target,
                          const Matrix& target_raw_embeddings, const EvalConfig& config);

/// Throws DomainOverlap if the two corpora share any user or item id.
void require_disjoint(const Corpus& source, const Corpus& target);

std::string variant_label(const ModelParams& params, bool fused);

// ---- embedding diagnostics --------------------------------------------------

struct DiagnosticsReport {
  double center_distance = 0.0;        // mean pairwise distance between domain centers
  double mean_intra_cosine = 0.0;      // mean over domains of mean pairwise cosine
  double probe_accuracy = 0.0;         // held-out linear-probe domain accuracy, in [0,1]
  std::vector<std::array<double, 2>> pca;  // per input row
  std::vector<std::string> warnings;

  std::string metrics_csv() const;
};

struct ProbeOptions {
  double train_fraction = 0.8;
  std::size_t iterations = 300;
  double l2 = 1e-4;
  std::uint64_t seed = 7;
};

/// `embeddings` rows with per-row domain labels 0..D-1 (D >= 2).
DiagnosticsReport embedding_diagnostics(const Matrix& embeddings, const std::vector<std::size_t>& domain,
                                        const ProbeOptions& probe = {});

/// Held-out accuracy of a multinomial logistic regression predicting labels.
double linear_probe_accuracy(const Matrix& x, const std::vector<std::size_t>& labels,
                             const ProbeOptions& options = {});

/// Projection onto the top-2 principal axes (sign fixed so each axis's
/// largest-magnitude loading is positive).
std::vector<std::array<double, 2>> pca_2d(const Matrix& x);

std::string pca_csv(const std::vector<std::string>& ids, const std::vector<std::string>& domains,
                    const std::vector<std::array<double, 2>>& points);

}  // namespace recg
