#include "recg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace recg {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::InvalidConfig, "learning_rate must be finite and >= 0");
  }
  if (batch_size < 2) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 2");
  if (epochs == 0) throw Error(ErrorCode::InvalidConfig, "epochs must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "adam eps must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw Error(ErrorCode::InvalidConfig, "grad_clip must be positive");
  if (!(fusion_warm_fraction > 0.0 && fusion_warm_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "fusion_warm_fraction must lie in (0,1]");
  }
  if (sequence_generalization && n_patterns == 0) {
    throw Error(ErrorCode::InvalidConfig, "n_patterns must be positive");
  }
  validation.validate();
}

std::string ablation_label(const TrainConfig& train, const GenLossConfig& gen) {
  if (!train.item_generalization && !train.sequence_generalization) return "Sem";
  std::vector<std::string> off;
  if (!train.item_generalization) {
    off.push_back("IG");
  } else {
    if (!gen.use_intra) off.push_back("ID");
    if (!gen.use_inter) off.push_back("IC");
  }
  if (!train.sequence_generalization) off.push_back("SG");
  if (off.empty()) return "RecG";
  std::string s = "RecG w/o ";
  for (std::size_t i = 0; i < off.size(); ++i) s += (i ? "+" : "") + off[i];
  return s;
}

// ---- data -------------------------------------------------------------------

std::size_t TrainData::pool_size() const noexcept {
  std::size_t n = n_source();
  for (const auto& m : aux_raw) n += m.rows();
  return n;
}

std::size_t TrainData::pool_domain(std::size_t p) const {
  if (p < n_source()) return 0;
  p -= n_source();
  for (std::size_t k = 0; k < aux_raw.size(); ++k) {
    if (p < aux_raw[k].rows()) return k + 1;
    p -= aux_raw[k].rows();
  }
  throw Error(ErrorCode::DimensionMismatch, "pool index out of range");
}

std::span<const float> TrainData::pool_row(std::size_t p) const {
  if (p < n_source()) return source_raw.row(p);
  p -= n_source();
  for (const auto& m : aux_raw) {
    if (p < m.rows()) return m.row(p);
    p -= m.rows();
  }
  throw Error(ErrorCode::DimensionMismatch, "pool index out of range");
}

namespace {

Matrix gather_rows(const Matrix& all, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), all.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = all.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

TrainData make_train_data(const Corpus& corpus, const BoundStore& bound, DomainIndex source,
                          GenPurity purity) {
  if (source >= corpus.domains.size()) throw Error(ErrorCode::InvalidConfig, "unknown source domain");
  if (bound.rows.rows() != corpus.items.size()) {
    throw Error(ErrorCode::CountMismatch, "bound store does not cover the corpus");
  }
  TrainData data;
  data.source = domain_view(corpus, source);
  std::vector<std::size_t> rows;
  for (const auto& item : data.source.items) rows.push_back(*corpus.item_ids.find(item.item_id));
  data.source_raw = gather_rows(bound.rows, rows);
  if (purity == GenPurity::Metadata) {
    for (DomainIndex d = 0; d < corpus.domains.size(); ++d) {
      if (d == source) continue;
      const auto items = corpus.items_in_domain(d);
      if (items.empty()) continue;
      data.aux_raw.push_back(gather_rows(bound.rows, std::vector<std::size_t>(items.begin(), items.end())));
      data.aux_names.push_back(corpus.domains[d].name);
    }
  }
  return data;
}

std::vector<TrainSequence> training_sequences(const Corpus& source, std::size_t max_seq_len) {
  std::vector<TrainSequence> out;
  for (const auto& s : split(source).users) {
    if (s.prefix.size() < 2) continue;
    const std::size_t keep = std::min(s.prefix.size(), max_seq_len + 1);
    out.push_back({{s.prefix.end() - static_cast<std::ptrdiff_t>(keep), s.prefix.end()}, s.user});
  }
  return out;
}

Batch sample_batch(const TrainData& data, const std::vector<TrainSequence>& sequences,
                   std::span<const std::size_t> members, const GenLossConfig& gen, std::mt19937_64& rng) {
  Batch b;
  const std::size_t n_src = data.n_source();
  std::vector<std::uint32_t> stamp(n_src, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n_src - 1);
  std::uint32_t tick = 0;
  for (auto m : members) {
    const auto& seq = sequences[m].items;
    // Negatives avoid the user's whole history (validation/test included).
    ++tick;
    std::size_t excluded = 0;
    for (auto it : data.source.users[sequences[m].user].items) {
      if (stamp[it] != tick) ++excluded;
      stamp[it] = tick;
    }
    b.seqs.emplace_back(seq.begin(), seq.end());
    b.negs.emplace_back();
    if (excluded >= n_src) throw Error(ErrorCode::InvalidConfig, "no negative candidates left");
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      std::size_t cand;
      do cand = pick(rng);
      while (stamp[cand] == tick);
      b.negs.back().push_back(static_cast<std::uint32_t>(cand));
    }
  }
  std::size_t offset = 0;
  for (std::size_t d = 0; d < data.n_pool_domains(); ++d) {
    const std::size_t n = d == 0 ? n_src : data.aux_raw[d - 1].rows();
    std::uniform_int_distribution<std::size_t> u(0, n - 1);
    for (std::size_t s = 0; s < gen.sample_size; ++s) b.gen_extra.push_back(static_cast<std::uint32_t>(offset + u(rng)));
    offset += n;
  }
  return b;
}

// ---- forward / backward -----------------------------------------------------

namespace {

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace

BatchResult evaluate_batch(const ModelParams& params, const TrainData& data, const Batch& batch,
                           const GenLossConfig& gen, bool item_generalization, const BankView* bank,
                           GradientTape* tape) {
  const std::size_t dl = params.d_l();

  // Distinct items touched by the batch, in first-appearance order.
  std::unordered_map<std::uint32_t, std::size_t> local;
  std::vector<std::uint32_t> items;
  auto intern = [&](std::uint32_t p) {
    auto [it, fresh] = local.emplace(p, items.size());
    if (fresh) items.push_back(p);
    return it->second;
  };
  for (std::size_t u = 0; u < batch.seqs.size(); ++u) {
    for (auto p : batch.seqs[u]) intern(p);
    for (auto p : batch.negs[u]) intern(p);
  }
  if (item_generalization)
    for (auto p : batch.gen_extra) intern(p);

  std::vector<DVec> emb(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) emb[i] = project(params, data.pool_row(items[i]));
  std::vector<DVec> demb;
  if (tape) demb.assign(items.size(), DVec(dl, 0.0));

  BatchResult res;
  double rec = 0.0;
  for (std::size_t u = 0; u < batch.seqs.size(); ++u) {
    const auto& seq = batch.seqs[u];
    if (seq.size() < 2) continue;
    std::vector<DVec> inputs;
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) inputs.push_back(emb[local[seq[t]]]);
    const auto trace = encode_trace(params, std::move(inputs));
    const std::size_t T = trace.outputs.size();
    std::vector<FusionTrace> fused;
    if (bank) {
      for (std::size_t t = 0; t < T; ++t) fused.push_back(fuse_forward(*bank, params.t.fusion_w, trace.outputs[t]));
    }
    std::vector<DVec> dout(tape ? T : 0);
    for (std::size_t t = 0; t < T; ++t) {
      const DVec& y = bank ? fused[t].output : trace.outputs[t];
      const std::size_t ip = local[seq[t + 1]], in = local[batch.negs[u][t]];
      const double diff = dot(y, emb[ip]) - dot(y, emb[in]);
      rec += bpr_pair_loss(diff);
      ++res.pairs;
      if (!tape) continue;
      const double g = bpr_pair_grad(diff);
      DVec dy(dl);
      for (std::size_t j = 0; j < dl; ++j) dy[j] = g * (emb[ip][j] - emb[in][j]);
      axpy(g, y, demb[ip]);
      axpy(-g, y, demb[in]);
      dout[t] = bank ? fuse_backward(*bank, params.t.fusion_w, fused[t], dy, *tape) : std::move(dy);
    }
    if (!tape) continue;
    const auto dinputs = encode_backward(params, trace, dout, *tape);
    for (std::size_t t = 0; t < dinputs.size(); ++t) axpy(1.0, dinputs[t], demb[local[seq[t]]]);
  }

  double intra = 0.0, inter = 0.0;
  if (item_generalization) {
    // Compact domain labels over the domains present in this batch.
    std::vector<std::size_t> label(data.n_pool_domains(), SIZE_MAX);
    LabeledSet set;
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return data.pool_domain(items[a]) < data.pool_domain(items[b]);
    });
    std::size_t next = 0;
    for (auto i : order) {
      auto& l = label[data.pool_domain(items[i])];
      if (l == SIZE_MAX) l = next++;
    }
    for (std::size_t i = 0; i < items.size(); ++i) set.add(emb[i], label[data.pool_domain(items[i])]);
    res.gen_items = items.size();

    std::vector<DVec> g_intra, g_inter;
    if (gen.use_intra) intra = intra_diversity(set, gen, tape ? &g_intra : nullptr);
    if (gen.use_inter) inter = inter_compactness(set, gen, tape ? &g_inter : nullptr);
    res.loss = combine(rec, intra, inter, gen, set.rows.size(), set.n_domains);
    if (tape) {
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (gen.use_intra) axpy(-gen.alpha, g_intra[i], demb[i]);
        if (gen.use_inter) axpy(res.loss.beta, g_inter[i], demb[i]);
      }
    }
  } else {
    if (!std::isfinite(rec)) throw Error(ErrorCode::NonFinite, "L_rec is not finite");
    res.loss.rec = rec;
    res.loss.total = rec;
  }

  if (tape) {
    for (std::size_t i = 0; i < items.size(); ++i) project_backward(data.pool_row(items[i]), demb[i], *tape);
  }
  return res;
}

// ---- optimizer --------------------------------------------------------------

AdamState make_adam(const ModelParams& params) {
  return {make_tape(params), make_tape(params), 0};
}

void adam_step(ModelParams& params, const GradientTape& grad, AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.step));
  const double c2 = 1.0 - std::pow(b2, double(state.step));
  // Walk the four parallel tensor lists in lockstep.
  std::vector<std::span<float>> p;
  std::vector<std::span<const double>> g;
  std::vector<std::span<double>> m, v;
  params.t.for_each([&](const char*, Matrix& x) { p.push_back(x.flat()); });
  grad.for_each([&](const char*, const GradMatrix& x) { g.push_back(x.flat()); });
  state.m.for_each([&](const char*, GradMatrix& x) { m.push_back(x.flat()); });
  state.v.for_each([&](const char*, GradMatrix& x) { v.push_back(x.flat()); });
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double gi = g[k][i];
      m[k][i] = b1 * m[k][i] + (1.0 - b1) * gi;
      v[k][i] = b2 * v[k][i] + (1.0 - b2) * gi * gi;
      const double mhat = m[k][i] / c1, vhat = v[k][i] / c2;
      p[k][i] = static_cast<float>(double(p[k][i]) - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

double gradient_norm(const GradientTape& tape) {
  double s = 0.0;
  tape.for_each([&](const char*, const GradMatrix& g) {
    for (double x : g.flat()) s += x * x;
  });
  return std::sqrt(s);
}

double clip_gradients(GradientTape& tape, double max_norm) {
  const double n = gradient_norm(tape);
  if (n > max_norm) {
    const double scale = max_norm / n;
    tape.for_each([&](const char*, GradMatrix& g) {
      for (double& x : g.flat()) x *= scale;
    });
  }
  return n;
}

void require_finite(const GradientTape& tape) {
  tape.for_each([](const char* name, const GradMatrix& g) {
    for (double x : g.flat()) {
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, std::string("non-finite gradient in ") + name);
    }
  });
}

// ---- epoch loop -------------------------------------------------------------

std::vector<DVec> source_user_reprs(const ModelParams& params, const TrainData& data) {
  std::vector<DVec> emb(data.n_source());
  for (std::size_t i = 0; i < emb.size(); ++i) emb[i] = project(params, data.source_raw.row(i));
  const Scorer plain{&params, nullptr};
  std::vector<DVec> out;
  for (const auto& s : split(data.source).users) out.push_back(plain.user_repr(emb, s.prefix));
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

TrainResult train(const TrainData& data, const ModelConfig& model, const GenLossConfig& gen,
                  const TrainConfig& cfg) {
  model.validate();
  cfg.validate();
  if (cfg.item_generalization) {
    gen.validate();
    if (gen.use_inter && data.n_pool_domains() < 2) {
      throw Error(ErrorCode::TooFewDomains, "inter-domain loss needs another domain in the pool");
    }
  }
  if (data.source_raw.cols() != model.d_h) {
    throw Error(ErrorCode::DimensionMismatch, "embedding dim does not match d_h");
  }

  const auto sequences = training_sequences(data.source, model.max_seq_len);
  if (sequences.empty()) throw Error(ErrorCode::CorpusEmpty, "no trainable source sequences");

  TrainResult res;
  ModelParams params = ModelParams::init(model, cfg.seed);
  AdamState adam = make_adam(params);
  GradientTape tape = make_tape(params);

  const std::size_t fusion_epochs =
      cfg.sequence_generalization
          ? std::max<std::size_t>(1, std::size_t(std::ceil(cfg.fusion_warm_fraction * double(cfg.epochs))))
          : 0;
  const std::size_t warm_start = cfg.epochs - std::min(fusion_epochs, cfg.epochs);

  double best = -1.0;
  std::size_t since_best = 0;
  res.params = params;
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::optional<PatternBank> bank;

  std::size_t epoch = 0;
  while (epoch < cfg.epochs) {
    const bool fused = cfg.sequence_generalization && epoch >= warm_start;
    std::mt19937_64 rng(mix(cfg.seed, epoch));
    if (fused) {
      bank = extract_patterns(source_user_reprs(params, data), cfg.n_patterns, mix(cfg.seed, 1000 + epoch));
    }
    std::optional<BankView> view;
    if (fused) view.emplace(*bank);

    // Fisher-Yates, driven by this epoch's generator.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.fused = fused;
    std::size_t n_batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const auto batch = sample_batch(data, sequences, std::span(order).subspan(start, end - start), gen, rng);
        zero_tape(tape);
        const auto br = evaluate_batch(params, data, batch, gen, cfg.item_generalization,
                                       view ? &*view : nullptr, &tape);
        require_finite(tape);
        if (cfg.grad_clip) clip_gradients(tape, *cfg.grad_clip);
        adam_step(params, tape, adam, cfg);
        res.steps.push_back(br.loss);
        rec.mean_rec += br.loss.rec;
        rec.mean_total += br.loss.total;
        ++n_batches;
      }
      params.validate();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFinite && e.code() != ErrorCode::InvalidConfig) throw;
      res.diverged = true;
      res.divergence = e.what();
      break;
    }
    rec.mean_rec /= double(n_batches);
    rec.mean_total /= double(n_batches);

    const Scorer scorer{&params, fused ? &*bank : nullptr};
    rec.val_ndcg10 = evaluate(scorer, data.source, data.source_raw, EvalTarget::Validation, cfg.validation)
                         .ndcg_at(10);
    res.epochs.push_back(rec);
    if (rec.val_ndcg10 > best) {
      best = rec.val_ndcg10;
      since_best = 0;
      res.params = params;
      res.bank = fused ? bank : std::nullopt;
      res.best_epoch = epoch;
    } else {
      ++since_best;
    }
    ++epoch;
    if (since_best >= cfg.patience) {
      if (epoch >= warm_start) break;
      // Out of patience before fusion training: resume the fusion phase from
      // the best parameters so W_f still gets trained.
      params = res.params;
      adam = make_adam(params);
      epoch = warm_start;
      since_best = 0;
    }
  }
  if (cfg.sequence_generalization && !res.bank) {
    // Best epoch predates fusion (W_f still at its initial value): attach a
    // bank from the best parameters so inference follows the fused path.
    res.bank = extract_patterns(source_user_reprs(res.params, data), cfg.n_patterns, mix(cfg.seed, 999));
  }
  return res;
}

}  // namespace recg
