#include "recg/evalkit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <unordered_set>

#include "recg/objective.hpp"

namespace recg {

void EvalConfig::validate() const {
  if (cutoffs.empty()) throw Error(ErrorCode::InvalidConfig, "at least one cutoff required");
  for (auto k : cutoffs) {
    if (k == 0 || k > n_negatives + 1) {
      throw Error(ErrorCode::InvalidConfig, "cutoff " + std::to_string(k) + " outside [1, n_negatives+1]");
    }
  }
  if (n_negatives == 0) throw Error(ErrorCode::InvalidConfig, "n_negatives must be positive");
  if (n_repeats == 0) throw Error(ErrorCode::InvalidConfig, "n_repeats must be positive");
}

std::size_t rank_one(double truth, std::span<const double> negatives, TieRule rule) {
  std::size_t rank = 1;
  for (double s : negatives) {
    if (s > truth || (rule == TieRule::Pessimistic && s == truth)) ++rank;
  }
  return rank;
}

std::size_t rank_one(std::span<const double> user, std::span<const double> truth_emb,
                     const std::vector<DVec>& negative_embs, TieRule rule) {
  std::vector<double> scores;
  scores.reserve(negative_embs.size());
  for (const auto& n : negative_embs) scores.push_back(score(user, std::span<const double>(n)));
  return rank_one(score(user, truth_emb), scores, rule);
}

std::vector<CutoffMetrics> metrics(std::span<const std::size_t> ranks,
                                   std::span<const std::size_t> cutoffs) {
  std::vector<CutoffMetrics> out;
  for (auto k : cutoffs) {
    CutoffMetrics m;
    m.k = k;
    if (!ranks.empty()) {
      double hits = 0.0, gain = 0.0;
      for (auto r : ranks) {
        if (r == 0) throw Error(ErrorCode::InvalidConfig, "ranks are 1-based");
        if (r <= k) {
          hits += 1.0;
          gain += 1.0 / std::log2(double(r) + 1.0);
        }
      }
      m.recall_pct = 100.0 * hits / double(ranks.size());
      m.ndcg_pct = 100.0 * gain / double(ranks.size());
    }
    out.push_back(m);
  }
  return out;
}

double EvalReport::recall_at(std::size_t k) const {
  for (const auto& c : cutoffs)
    if (c.k == k) return c.recall_pct;
  throw Error(ErrorCode::InvalidConfig, "cutoff " + std::to_string(k) + " not evaluated");
}

double EvalReport::ndcg_at(std::size_t k) const {
  for (const auto& c : cutoffs)
    if (c.k == k) return c.ndcg_pct;
  throw Error(ErrorCode::InvalidConfig, "cutoff " + std::to_string(k) + " not evaluated");
}

nlohmann::json EvalReport::to_json() const {
  auto cut = [](const std::vector<CutoffMetrics>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : v) a.push_back({{"k", c.k}, {"recall_pct", c.recall_pct}, {"ndcg_pct", c.ndcg_pct}});
    return a;
  };
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : repeats) reps.push_back(cut(r));
  return {{"variant", variant},       {"source_domain", source_domain},
          {"target_domain", target_domain}, {"cutoffs", cut(cutoffs)},
          {"repeats", reps},          {"users", users},
          {"seed", seed}};
}

DVec Scorer::user_repr(const std::vector<DVec>& item_embs, std::span<const ItemIndex> history) const {
  std::vector<DVec> seq;
  const auto keep = std::min(history.size(), params->config.max_seq_len);
  for (std::size_t i = history.size() - keep; i < history.size(); ++i) seq.push_back(item_embs[history[i]]);
  auto y = encode_sequence(*params, seq);
  if (!bank) return y;
  const auto a = attend(y, *bank);
  return fuse(y, a.pattern, params->t.fusion_w);
}

EvalReport evaluate(const Scorer& scorer, const Corpus& corpus, const Matrix& raw,
                    EvalTarget target, const EvalConfig& cfg) {
  cfg.validate();
  if (raw.rows() != corpus.items.size()) {
    throw Error(ErrorCode::CountMismatch, "embedding rows do not match corpus items");
  }
  std::vector<DVec> embs;
  embs.reserve(raw.rows());
  for (std::size_t i = 0; i < raw.rows(); ++i) embs.push_back(project(*scorer.params, raw.row(i)));

  std::vector<std::vector<ItemIndex>> by_domain(corpus.domains.size());
  for (ItemIndex i = 0; i < corpus.items.size(); ++i) by_domain[corpus.items[i].domain].push_back(i);

  const auto spec = split(corpus);
  struct Prepared {
    DVec repr;
    ItemIndex truth;
    double truth_score;
    const std::vector<ItemIndex>* seq;
  };
  std::vector<Prepared> users;
  users.reserve(spec.users.size());
  for (const auto& s : spec.users) {
    std::vector<ItemIndex> hist = s.prefix;
    ItemIndex truth = s.val;
    if (target == EvalTarget::Test) {
      hist.push_back(s.val);
      truth = s.test;
    }
    auto repr = scorer.user_repr(embs, hist);
    const double ts = score(std::span<const double>(repr), std::span<const double>(embs[truth]));
    users.push_back({std::move(repr), truth, ts, &corpus.users[s.user].items});
  }

  EvalReport report;
  report.users = users.size();
  report.seed = cfg.seed;
  std::vector<std::uint32_t> stamp(corpus.items.size(), 0);
  std::uint32_t tick = 0;
  std::vector<double> neg_scores;
  std::vector<std::size_t> ranks(users.size());
  for (std::size_t r = 0; r < cfg.n_repeats; ++r) {
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + r + 1);
    for (std::size_t u = 0; u < users.size(); ++u) {
      const auto& pu = users[u];
      const auto& pool = by_domain[corpus.items[pu.truth].domain];
      ++tick;
      std::size_t excluded = 0;
      for (auto it : *pu.seq) {
        if (stamp[it] != tick && corpus.items[it].domain == corpus.items[pu.truth].domain) ++excluded;
        stamp[it] = tick;
      }
      const std::size_t available = pool.size() - excluded;
      const std::size_t want = std::min(cfg.n_negatives, available);
      neg_scores.clear();
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      while (neg_scores.size() < want) {
        const auto cand = pool[pick(rng)];
        if (stamp[cand] == tick) continue;
        stamp[cand] = tick;
        neg_scores.push_back(score(std::span<const double>(pu.repr), std::span<const double>(embs[cand])));
      }
      ranks[u] = rank_one(pu.truth_score, neg_scores, cfg.tie_rule);
    }
    report.repeats.push_back(metrics(ranks, cfg.cutoffs));
  }
  for (std::size_t c = 0; c < cfg.cutoffs.size(); ++c) {
    CutoffMetrics m;
    m.k = cfg.cutoffs[c];
    for (const auto& rep : report.repeats) {
      m.recall_pct += rep[c].recall_pct;
      m.ndcg_pct += rep[c].ndcg_pct;
    }
    m.recall_pct /= double(report.repeats.size());
    m.ndcg_pct /= double(report.repeats.size());
    report.cutoffs.push_back(m);
  }
  if (!corpus.domains.empty()) report.target_domain = corpus.domains[0].name;
  return report;
}

void require_disjoint(const Corpus& source, const Corpus& target) {
  std::vector<std::string> shared;
  for (const auto& item : target.items) {
    if (source.item_ids.find(item.item_id)) shared.push_back("item:" + item.item_id);
  }
  for (const auto& user : target.users) {
    if (source.user_ids.find(user.user_id)) shared.push_back("user:" + user.user_id);
  }
  if (!shared.empty()) {
    const auto msg =
        std::to_string(shared.size()) + " id(s) shared between source and target, e.g. " + shared[0];
    throw Error(ErrorCode::DomainOverlap, msg, std::move(shared));
  }
}

std::string variant_label(const ModelParams& params, bool fused) {
  return std::string(to_string(params.config.encoder)) + (fused ? "-RecG" : "-Sem");
}

EvalReport zero_shot_eval(std::span<const std::uint8_t> checkpoint_bytes, const PatternBank* bank,
                          const Corpus& source, const Corpus& target, const Matrix& target_raw,
                          const EvalConfig& cfg) {
  require_disjoint(source, target);
  const auto ck = decode_checkpoint(checkpoint_bytes);
  if (bank) {
    require_fingerprint(*bank, checkpoint_bytes);
    if (bank->dim() != ck.params.d_l()) throw Error(ErrorCode::DimensionMismatch, "bank dim != d_l");
  }
  if (!ck.meta.source_corpus_digest.empty() && ck.meta.source_corpus_digest != corpus_digest(source)) {
    throw Error(ErrorCode::FingerprintMismatch, "checkpoint was trained on a different source corpus");
  }
  Scorer scorer{&ck.params, bank};
  auto report = evaluate(scorer, target, target_raw, EvalTarget::Test, cfg);
  report.variant = variant_label(ck.params, bank != nullptr);
  report.source_domain = source.domains.empty() ? "" : source.domains[0].name;
  return report;
}

// ---- embedding diagnostics --------------------------------------------------

namespace {

using EMat = Eigen::MatrixXd;

EMat to_eigen(const Matrix& m) {
  EMat out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

}  // namespace

double linear_probe_accuracy(const Matrix& xm, const std::vector<std::size_t>& labels,
                             const ProbeOptions& opt) {
  const std::size_t n = xm.rows();
  if (labels.size() != n) throw Error(ErrorCode::CountMismatch, "labels vs rows");
  const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opt.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = std::clamp<std::size_t>(std::size_t(opt.train_fraction * double(n)), 1, n - 1);

  const EMat x = to_eigen(xm);
  const std::size_t d = x.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), sd = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < n_train; ++i) mean += x.row(order[i]).transpose();
  mean /= double(n_train);
  for (std::size_t i = 0; i < n_train; ++i) sd += (x.row(order[i]).transpose() - mean).cwiseAbs2();
  sd = (sd / double(n_train)).cwiseSqrt();
  for (std::size_t j = 0; j < d; ++j)
    if (!(sd(j) > 1e-12)) sd(j) = 1.0;

  auto features = [&](std::size_t i) {
    Eigen::VectorXd f(d + 1);
    f.head(d) = (x.row(i).transpose() - mean).cwiseQuotient(sd);
    f(d) = 1.0;
    return f;
  };
  EMat ftrain(n_train, d + 1);
  for (std::size_t i = 0; i < n_train; ++i) ftrain.row(i) = features(order[i]).transpose();

  EMat w = EMat::Zero(classes, d + 1);
  const double lr = 0.5;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    EMat logits = ftrain * w.transpose();  // n x C
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double m = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - m).exp().matrix();
      logits.row(i) /= logits.row(i).sum();
      logits(i, static_cast<Eigen::Index>(labels[order[i]])) -= 1.0;
    }
    EMat grad = logits.transpose() * ftrain / double(n_train) + opt.l2 * w;
    w -= lr * grad;
  }
  std::size_t correct = 0;
  for (std::size_t i = n_train; i < n; ++i) {
    const Eigen::VectorXd s = w * features(order[i]);
    Eigen::Index arg = 0;
    s.maxCoeff(&arg);
    if (static_cast<std::size_t>(arg) == labels[order[i]]) ++correct;
  }
  return double(correct) / double(n - n_train);
}

std::vector<std::array<double, 2>> pca_2d(const Matrix& xm) {
  EMat x = to_eigen(xm);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  std::vector<std::array<double, 2>> out(x.rows(), {0.0, 0.0});
  if (x.rows() < 2) return out;
  const EMat cov = x.transpose() * x / double(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<EMat> eig(cov);
  const auto dims = static_cast<Eigen::Index>(x.cols());
  for (int a = 0; a < 2 && a < dims; ++a) {
    Eigen::VectorXd v = eig.eigenvectors().col(dims - 1 - a);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i][a] = proj(i);
  }
  return out;
}

DiagnosticsReport embedding_diagnostics(const Matrix& emb, const std::vector<std::size_t>& domain,
                                        const ProbeOptions& probe) {
  if (domain.size() != emb.rows()) throw Error(ErrorCode::CountMismatch, "labels vs rows");
  const std::size_t D = domain.empty() ? 0 : *std::max_element(domain.begin(), domain.end()) + 1;
  if (D < 2) throw Error(ErrorCode::TooFewDomains, "diagnostics need at least 2 domains");
  DiagnosticsReport rep;
  const std::size_t dim = emb.cols();

  std::vector<std::vector<DVec>> groups(D);
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto r = emb.row(i);
    groups[domain[i]].emplace_back(r.begin(), r.end());
  }
  const auto centers = domain_centers(groups);
  double dist = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < D; ++a) {
    for (std::size_t b = a + 1; b < D; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += (centers[a][j] - centers[b][j]) * (centers[a][j] - centers[b][j]);
      dist += std::sqrt(s);
      ++pairs;
    }
  }
  rep.center_distance = dist / double(pairs);

  double cos_sum = 0.0;
  for (const auto& g : groups) {
    double s = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        s += cosine(g[i], g[j]);
        ++cnt;
      }
    }
    cos_sum += cnt ? s / double(cnt) : 1.0;
  }
  rep.mean_intra_cosine = cos_sum / double(D);

  const EMat x = to_eigen(emb);
  Eigen::FullPivLU<EMat> lu(x.rowwise() - x.colwise().mean());
  if (x.rows() == 0 || lu.rank() == 0) {
    rep.warnings.push_back("degenerate embedding matrix (rank 0)");
  }
  rep.probe_accuracy = linear_probe_accuracy(emb, domain, probe);
  rep.pca = pca_2d(emb);
  return rep;
}

std::string DiagnosticsReport::metrics_csv() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "metric,value\ncenter_distance,%.9g\nmean_intra_cosine,%.9g\nprobe_accuracy,%.9g\n",
                center_distance, mean_intra_cosine, probe_accuracy);
  std::string out = buf;
  for (const auto& w : warnings) out += "warning," + w + "\n";
  return out;
}

std::string pca_csv(const std::vector<std::string>& ids, const std::vector<std::string>& domains,
                    const std::vector<std::array<double, 2>>& points) {
  std::string out = "item_id,domain,x,y\n";
  char buf[96];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", points[i][0], points[i][1]);
    out += ids[i] + "," + domains[i] + buf;
  }
  return out;
}

}  // namespace recg
