#pragma once

#include <optional>
#include <string>
#include <vector>

#include "recg/tensor.hpp"

namespace recg {

enum class BetaRule { DomainCubic, Manual };
enum class BetaCount { BatchItems, CorpusItems };
enum class InterMode { LiteralExcludeOwn, IncludeOwn };
/// Which domains feed the generalization losses during source training.
/// Strict: source domains only. Metadata: also embeddings (never
/// interactions) of the other corpus domains.
enum class GenPurity { Strict, Metadata };

struct GenLossConfig {
  double alpha = 0.001;
  double tau = 0.1;
  BetaRule beta_rule = BetaRule::DomainCubic;
  std::optional<double> manual_beta;
  BetaCount n_for_beta = BetaCount::BatchItems;
  bool include_self_pairs = false;
  InterMode inter_mode = InterMode::LiteralExcludeOwn;
  std::size_t sample_size = 64;
  GenPurity purity = GenPurity::Metadata;
  // Ablation switches: ID drops the intra term, IC drops the inter term.
  bool use_intra = true;
  bool use_inter = true;

  void validate() const;
};

constexpr double kCosineEps = 1e-12;

/// Cosine similarity with the denominator floored at kCosineEps.
double cosine(std::span<const double> a, std::span<const double> b);

/// Arithmetic mean per group. Throws EmptyGroup on an empty group.
std::vector<DVec> domain_centers(const std::vector<std::vector<DVec>>& groups);

/// Embeddings with a compact domain label (0..n_domains-1) per row.
struct LabeledSet {
  std::vector<DVec> rows;
  std::vector<std::size_t> domain;
  std::size_t n_domains = 0;

  void add(DVec row, std::size_t d) {
    rows.push_back(std::move(row));
    domain.push_back(d);
    n_domains = std::max(n_domains, d + 1);
  }
};

struct InterDetail {
  /// q[i][d] for every item i and every domain d in the softmax support;
  /// entries outside the support are 0.
  std::vector<DVec> q;
};

/// L_inter = sum_i sum_{d != d_i} Q_id log Q_id. The softmax support excludes
/// the item's own center in literal mode and includes it in include-own mode.
/// When `grad` is non-null, dL_inter/d rows is accumulated into it (through
/// the domain centers as well).
double inter_compactness(const LabeledSet& set, const GenLossConfig& cfg,
                         std::vector<DVec>* grad = nullptr, InterDetail* detail = nullptr);

struct IntraDetail {
  std::vector<double> row_entropy;  // per item, in input order
  std::vector<DVec> p;              // optional full rows (only when keep_rows)
  bool keep_rows = false;
  std::size_t skipped_domains = 0;  // single-item domains with self pairs excluded
};

/// L_intra = -sum_d 1/|V_d| sum_i sum_j P_ij log P_ij, a non-negative entropy.
double intra_diversity(const LabeledSet& set, const GenLossConfig& cfg,
                       std::vector<DVec>* grad = nullptr, IntraDetail* detail = nullptr);

/// Per-pair BPR loss -log sigmoid(diff), evaluated stably.
double bpr_pair_loss(double score_diff);
/// d(bpr_pair_loss)/d(diff)
double bpr_pair_grad(double score_diff);
/// Summed BPR loss over aligned (user, positive, negative) triples.
double bpr_loss(const std::vector<DVec>& user_reprs, const std::vector<DVec>& positives,
                const std::vector<DVec>& negatives);

struct LossTerms {
  double rec = 0, intra = 0, inter = 0, beta = 0, gen = 0, total = 0;
};

/// beta = alpha * |N| / |D|^3 (or the manual value).
double compute_beta(const GenLossConfig& cfg, std::size_t n_items, std::size_t n_domains);

/// L_total = L_rec - alpha*L_intra + beta*L_inter, honouring the ablation
/// switches. Throws NonFinite naming the offending term.
LossTerms combine(double rec, double intra, double inter, const GenLossConfig& cfg,
                  std::size_t n_items, std::size_t n_domains);

std::string loss_log_header();
std::string loss_log_row(std::size_t step, const LossTerms& t);

}  // namespace recg
