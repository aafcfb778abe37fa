#include <doctest.h>

#include <cmath>

#include "recg/synth.hpp"
#include "support.hpp"

using namespace recg;

namespace {

SynthConfig small(double bias) {
  SynthConfig cfg;
  cfg.n_items = 600;
  cfg.n_users = 50;
  cfg.d_h = 64;
  cfg.bias_strength = bias;
  cfg.seed = 11;
  return cfg;
}

struct Stats {
  double center_distance = 0.0;
  double sigma = 0.0;  // root of total variance, pooled over both domains
  std::size_t n = 0;   // items per domain
};

// Independent of evalkit: plain loops over the raw rows.
Stats domain_stats(const SynthOutput& out) {
  const auto& rows = out.store.rows();
  const std::size_t d = rows.cols();
  std::vector<double> mean[2] = {std::vector<double>(d), std::vector<double>(d)};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < out.corpus.items.size(); ++i) {
    const auto dom = out.corpus.items[i].domain;
    ++count[dom];
    for (std::size_t c = 0; c < d; ++c) mean[dom][c] += rows(i, c);
  }
  for (int k = 0; k < 2; ++k)
    for (auto& x : mean[k]) x /= double(count[k]);
  double dist2 = 0.0, var = 0.0;
  for (std::size_t c = 0; c < d; ++c) dist2 += (mean[0][c] - mean[1][c]) * (mean[0][c] - mean[1][c]);
  for (std::size_t i = 0; i < out.corpus.items.size(); ++i) {
    const auto dom = out.corpus.items[i].domain;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = rows(i, c) - mean[dom][c];
      var += x * x;
    }
  }
  var /= double(out.corpus.items.size());
  return {std::sqrt(dist2), std::sqrt(var), count[0]};
}

}  // namespace

TEST_CASE("zero bias gives matching domain means") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto cfg = small(0.0);
    cfg.seed = seed;
    const auto s = domain_stats(synthesize(cfg));
    CHECK(s.center_distance < 3.0 * s.sigma / std::sqrt(double(s.n)));
  }
}

TEST_CASE("same seed twice is byte-identical") {
  const auto a = synthesize(small(3.0));
  const auto b = synthesize(small(3.0));
  CHECK(a.store.encode() == b.store.encode());
  CHECK(format_interactions(a.corpus) == format_interactions(b.corpus));
  CHECK(format_metadata(a.corpus) == format_metadata(b.corpus));
  auto other = small(3.0);
  other.seed = 12;
  CHECK(synthesize(other).store.encode() != a.store.encode());
}

TEST_CASE("bias 5 separates centers more than 10x the unbiased case") {
  const auto d0 = domain_stats(synthesize(small(0.0))).center_distance;
  const auto d5 = domain_stats(synthesize(small(5.0))).center_distance;
  CHECK(d5 > 10.0 * d0);
}

TEST_CASE("center distance grows with bias") {
  double prev = -1.0;
  for (double bias : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const auto d = domain_stats(synthesize(small(bias))).center_distance;
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("domains are disjoint and sequences stay in-domain") {
  const auto out = synthesize(small(1.0));
  CHECK(out.corpus.domains.size() == 2);
  for (const auto& u : out.corpus.users) {
    REQUIRE(u.items.size() >= 10);
    const auto dom = out.corpus.items[u.items[0]].domain;
    for (auto i : u.items) CHECK(out.corpus.items[i].domain == dom);
  }
  CHECK(out.store.count() == out.corpus.items.size());
}

TEST_CASE("synth config validation") {
  auto cfg = small(1.0);
  cfg.seq_len_min = 2;
  CHECK_THROWS_AS(synthesize(cfg), Error);
  cfg = small(-1.0);
  CHECK_THROWS_AS(synthesize(cfg), Error);
  cfg = small(1.0);
  cfg.target_name = cfg.source_name;
  CHECK_THROWS_AS(synthesize(cfg), Error);
}
