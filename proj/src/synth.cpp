#include "recg/synth.hpp"

#include <cmath>
#include <random>

namespace recg {

void SynthConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (n_items == 0 || n_users == 0) bad("n_items and n_users must be positive");
  if (d_h == 0) bad("d_h must be positive");
  if (!(bias_strength >= 0.0)) bad("bias_strength must be >= 0");
  if (n_latent_topics == 0 || n_latent_topics > n_items) bad("n_latent_topics must be in [1, n_items]");
  if (!(transition_sharpness > 0.0)) bad("transition_sharpness must be > 0");
  if (!(item_noise >= 0.0)) bad("item_noise must be >= 0");
  if (seq_len_min < 3 || seq_len_max < seq_len_min) bad("need 3 <= seq_len_min <= seq_len_max");
  if (source_name.empty() || target_name.empty() || source_name == target_name) {
    bad("domain names must be distinct and non-empty");
  }
}

SynthOutput synthesize(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t dh = cfg.d_h;
  const double unit = 1.0 / std::sqrt(double(dh));

  auto random_vector = [&] {
    std::vector<double> v(dh);
    for (auto& x : v) x = gauss(rng) * unit;
    return v;
  };

  std::vector<std::vector<double>> topics(cfg.n_latent_topics);
  for (auto& t : topics) t = random_vector();
  const std::vector<std::vector<double>> offsets = {random_vector(), random_vector()};

  // Row-stochastic topic transition matrix shared by both domains.
  std::vector<std::vector<double>> transition(cfg.n_latent_topics,
                                              std::vector<double>(cfg.n_latent_topics));
  for (auto& row : transition) {
    double z = 0.0;
    for (auto& p : row) {
      p = std::exp(cfg.transition_sharpness * gauss(rng));
      z += p;
    }
    for (auto& p : row) p /= z;
  }

  Corpus corpus;
  const std::string names[2] = {cfg.source_name, cfg.target_name};
  std::vector<std::string> ids;
  Matrix rows(2 * cfg.n_items, dh);
  std::vector<std::vector<std::vector<ItemIndex>>> by_topic(
      2, std::vector<std::vector<ItemIndex>>(cfg.n_latent_topics));

  for (DomainIndex d = 0; d < 2; ++d) {
    corpus.domain_ids.intern(names[d]);
    corpus.domains.push_back({names[d]});
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
      const std::size_t topic = i % cfg.n_latent_topics;
      const auto idx = static_cast<ItemIndex>(corpus.items.size());
      ItemRecord rec;
      rec.item_id = names[d] + ":item:" + std::to_string(i);
      rec.domain = d;
      rec.fields = {names[d] + " item " + std::to_string(i), "topic " + std::to_string(topic),
                    "synthetic " + names[d] + " catalogue entry"};
      rec.text = render_item_text(rec.fields);
      corpus.item_ids.intern(rec.item_id);
      ids.push_back(rec.item_id);
      auto row = rows.row(idx);
      for (std::size_t c = 0; c < dh; ++c) {
        row[c] = static_cast<float>(topics[topic][c] + cfg.item_noise * gauss(rng) * unit +
                                    cfg.bias_strength * offsets[d][c]);
      }
      corpus.items.push_back(std::move(rec));
      by_topic[d][topic].push_back(idx);
    }
  }

  std::uniform_int_distribution<std::size_t> len_dist(cfg.seq_len_min, cfg.seq_len_max);
  std::uniform_int_distribution<std::size_t> topic_dist(0, cfg.n_latent_topics - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (DomainIndex d = 0; d < 2; ++d) {
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
      UserSequence seq;
      seq.user_id = names[d] + ":user:" + std::to_string(u);
      const std::size_t len = len_dist(rng);
      std::size_t topic = topic_dist(rng);
      for (std::size_t step = 0; step < len; ++step) {
        const auto& pool = by_topic[d][topic];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        seq.items.push_back(pool[pick(rng)]);
        seq.timestamps.push_back(static_cast<std::int64_t>(1'600'000'000 + step * 60));
        const double r = unif(rng);
        double acc = 0.0;
        std::size_t next = cfg.n_latent_topics - 1;
        for (std::size_t t = 0; t < cfg.n_latent_topics; ++t) {
          acc += transition[topic][t];
          if (r < acc) {
            next = t;
            break;
          }
        }
        topic = next;
      }
      corpus.user_ids.intern(seq.user_id);
      corpus.users.push_back(std::move(seq));
    }
  }
  corpus.validate();
  return {std::move(corpus), SemanticStore(std::move(ids), std::move(rows))};
}

}  // namespace recg
