#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "recg/binio.hpp"
#include "recg/evalkit.hpp"
#include "recg/semstore.hpp"
#include "recg/synth.hpp"
#include "support.hpp"

using namespace recg;

namespace {

std::string meta_line(const std::string& id, const std::string& domain) {
  return R"({"item_id":")" + id + R"(","domain":")" + domain + R"(","title":"t","features":"","description":""})" "\n";
}

// Identity-slice projection from d_h=3 to d_l=2.
ModelParams slice_params() {
  ModelConfig c;
  c.d_h = 3;
  c.d_l = 2;
  auto p = ModelParams::zeros(c);
  p.t.proj_w(0, 0) = 1.0f;
  p.t.proj_w(1, 1) = 1.0f;
  return p;
}

}  // namespace

TEST_CASE("rank examples") {
  CHECK(rank_one(5.0, std::vector<double>{1, 2, 3}, TieRule::Pessimistic) == 1);
  const std::vector<double> tied = {5, 5, 1, 2, 7};
  CHECK(rank_one(5.0, tied, TieRule::Pessimistic) == 4);
  CHECK(rank_one(5.0, tied, TieRule::Optimistic) == 2);
  CHECK(rank_one(5.0, std::vector<double>{5, 5, 1, 2}, TieRule::Pessimistic) == 3);
  // Vector form scores by dot product.
  CHECK(rank_one(DVec{1, 0}, DVec{2, 0}, {{3, 0}, {1, 5}}, TieRule::Pessimistic) == 2);
}

TEST_CASE("rank agrees with a full sort") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> neg(100);
    for (auto& x : neg) x = g(rng);
    const double truth = g(rng);
    auto all = neg;
    all.push_back(truth);
    std::sort(all.begin(), all.end(), std::greater<>());
    const auto pos = std::size_t(std::find(all.begin(), all.end(), truth) - all.begin()) + 1;
    CHECK(rank_one(truth, neg, TieRule::Pessimistic) == pos);
    CHECK(rank_one(truth, neg, TieRule::Optimistic) == pos);
  }
  // With ties pessimistic is never better.
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> neg(20);
    for (auto& x : neg) x = std::round(g(rng));
    const double truth = std::round(g(rng));
    CHECK(rank_one(truth, neg, TieRule::Pessimistic) >= rank_one(truth, neg, TieRule::Optimistic));
  }
}

TEST_CASE("metric examples") {
  const std::vector<std::size_t> k10 = {10};
  auto m = metrics(std::vector<std::size_t>(7, 1), k10);
  CHECK(m[0].recall_pct == 100.0);
  CHECK(m[0].ndcg_pct == 100.0);
  m = metrics(std::vector<std::size_t>{3}, k10);
  CHECK(m[0].ndcg_pct == doctest::Approx(50.0).epsilon(1e-12));
  m = metrics(std::vector<std::size_t>{1, 11}, k10);
  CHECK(m[0].recall_pct == doctest::Approx(50.0));
  CHECK(m[0].ndcg_pct == doctest::Approx(50.0));
  CHECK_THROWS_AS(metrics(std::vector<std::size_t>{0}, k10), Error);
}

TEST_CASE("metrics are monotone in the cutoff") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> d(1, 101);
  const std::vector<std::size_t> ks = {5, 10, 20};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> ranks(30);
    for (auto& r : ranks) r = d(rng);
    const auto m = metrics(ranks, ks);
    for (int i = 0; i < 3; ++i) {
      CHECK(m[i].recall_pct >= 0.0);
      CHECK(m[i].recall_pct <= 100.0);
    }
    CHECK(m[0].recall_pct <= m[1].recall_pct);
    CHECK(m[1].recall_pct <= m[2].recall_pct);
    CHECK(m[0].ndcg_pct <= m[1].ndcg_pct);
    CHECK(m[1].ndcg_pct <= m[2].ndcg_pct);
  }
}

TEST_CASE("eval config validation") {
  EvalConfig c;
  CHECK_NOTHROW(c.validate());
  c.cutoffs = {102};
  CHECK_THROWS_AS(c.validate(), Error);
  c.cutoffs = {};
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("negatives never include the user's history") {
  // History items and the truth share one embedding, so any history item
  // drawn as a negative would tie and push the truth down one place.
  std::string meta = meta_line("h1", "A") + meta_line("h2", "A") + meta_line("h3", "A") + meta_line("t", "A");
  for (int i = 0; i < 10; ++i) meta += meta_line("o" + std::to_string(i), "A");
  const auto c = ingest_text("u\th1\t1\nu\th2\t2\nu\th3\t3\nu\tt\t4\n", meta, {0, false}).corpus;
  Matrix raw(c.items.size(), 3);
  for (ItemIndex i = 0; i < c.items.size(); ++i) raw(i, 0) = c.items[i].item_id[0] == 'o' ? -1.0f : 1.0f;
  const auto p = slice_params();
  EvalConfig cfg{{1}, 10, 5, 3, TieRule::Pessimistic};
  for (auto target : {EvalTarget::Test, EvalTarget::Validation}) {
    const auto r = evaluate(Scorer{&p, nullptr}, c, raw, target, cfg);
    CHECK(r.users == 1);
    CHECK(r.recall_at(1) == 100.0);
  }
  // Sanity: a tied negative does cost a place.
  raw(c.item_ids.find("o3").value(), 0) = 1.0f;
  CHECK(evaluate(Scorer{&p, nullptr}, c, raw, EvalTarget::Test, cfg).recall_at(1) == 0.0);
}

TEST_CASE("evaluation is deterministic and repeats are averaged") {
  SynthConfig s;
  s.n_items = 200;
  s.n_users = 60;
  s.d_h = 8;
  s.n_latent_topics = 8;
  const auto out = synthesize(s);
  const auto a = domain_view(out.corpus, 0);
  const auto raw = bind(out.store, a).rows;
  ModelConfig mc;
  mc.d_h = 8;
  mc.d_l = 4;
  const auto p = ModelParams::init(mc, 1);
  EvalConfig cfg;
  const auto r1 = evaluate(Scorer{&p, nullptr}, a, raw, EvalTarget::Test, cfg);
  const auto r2 = evaluate(Scorer{&p, nullptr}, a, raw, EvalTarget::Test, cfg);
  CHECK(r1.to_json() == r2.to_json());
  REQUIRE(r1.repeats.size() == 5);
  double mean = 0;
  for (const auto& rep : r1.repeats) mean += rep[1].recall_pct / 5;
  CHECK(r1.recall_at(10) == doctest::Approx(mean).epsilon(1e-12));
  CHECK(r1.recall_at(5) <= r1.recall_at(10));
  CHECK_THROWS_AS(r1.recall_at(7), Error);
  const auto j = r1.to_json();
  CHECK(j["cutoffs"].size() == 3);
  CHECK(j.contains("repeats"));
}

TEST_CASE("zero-shot guards and read-only checkpoint") {
  SynthConfig s;
  s.n_items = 120;
  s.n_users = 40;
  s.d_h = 8;
  s.n_latent_topics = 6;
  const auto out = synthesize(s);
  const auto src = domain_view(out.corpus, 0), tgt = domain_view(out.corpus, 1);
  const auto tgt_raw = bind(out.store, tgt).rows;
  ModelConfig mc;
  mc.d_h = 8;
  mc.d_l = 4;
  const auto p = ModelParams::init(mc, 2);
  const auto path = testing::scratch_dir("zs") / "m.zrcg";
  checkpoint_save(p, {corpus_digest(src), "A", "x"}, path);
  const auto before = read_file(path);

  EvalConfig cfg;
  const auto sem = zero_shot_eval(before, nullptr, src, tgt, tgt_raw, cfg);
  CHECK(sem.variant == "mean-pool-Sem");
  CHECK(sem.source_domain == "A");
  CHECK(sem.target_domain == "B");

  std::vector<DVec> pts;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) pts.push_back(testing::random_vec(rng, 4));
  auto bank = extract_patterns(pts, 3, 1);
  bank.fingerprint = bank_fingerprint(before);
  const auto recg = zero_shot_eval(before, &bank, src, tgt, tgt_raw, cfg);
  CHECK(recg.variant == "mean-pool-RecG");
  CHECK(read_file(path) == before);

  auto code = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Parse;
  };
  CHECK(code([&] { zero_shot_eval(before, nullptr, src, src, bind(out.store, src).rows, cfg); }) ==
        ErrorCode::DomainOverlap);
  bank.fingerprint[0] ^= 1;
  CHECK(code([&] { zero_shot_eval(before, &bank, src, tgt, tgt_raw, cfg); }) == ErrorCode::FingerprintMismatch);
  CHECK(code([&] { zero_shot_eval(before, nullptr, tgt, domain_view(out.corpus, 0), bind(out.store, src).rows, cfg); }) ==
        ErrorCode::FingerprintMismatch);
}

TEST_CASE("overlap error lists shared ids") {
  std::string meta = meta_line("x", "A") + meta_line("y", "A") + meta_line("z", "A");
  const auto a = ingest_text("u\tx\t1\nu\ty\t2\nu\tz\t3\n", meta, {0, false}).corpus;
  const auto b = ingest_text("v\tx\t1\nv\ty\t2\nv\tz\t3\n", meta, {0, false}).corpus;
  try {
    require_disjoint(a, b);
    FAIL("expected overlap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainOverlap);
    CHECK(e.details().size() == 3);
    CHECK(e.details()[0] == "item:x");
  }
}

TEST_CASE("linear probe at chance for identical distributions") {
  std::mt19937_64 rng(5);
  Matrix x(2000, 6);
  std::vector<std::size_t> labels(2000);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < 2000; ++i) {
    labels[i] = i % 2;
    for (std::size_t c = 0; c < 6; ++c) x(i, c) = float(g(rng));
  }
  const double acc = linear_probe_accuracy(x, labels);
  CHECK(acc > 0.45);
  CHECK(acc < 0.55);
}

TEST_CASE("linear probe separates offset domains") {
  std::mt19937_64 rng(6);
  Matrix x(600, 6);
  std::vector<std::size_t> labels(600);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < 600; ++i) {
    labels[i] = i % 2;
    for (std::size_t c = 0; c < 6; ++c) x(i, c) = float(g(rng) + (labels[i] ? 4.0 : 0.0));
  }
  CHECK(linear_probe_accuracy(x, labels) > 0.95);
}

TEST_CASE("pca of planar points is an isometry") {
  std::mt19937_64 rng(7);
  Matrix x(40, 2);
  for (auto& v : x.flat()) v = float(std::normal_distribution<double>(0, 3)(rng));
  const auto p = pca_2d(x);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = i + 1; j < 40; ++j) {
      const double d0 = std::hypot(double(x(i, 0)) - x(j, 0), double(x(i, 1)) - x(j, 1));
      const double d1 = std::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]);
      CHECK(d1 == doctest::Approx(d0).epsilon(1e-5));
    }
}

TEST_CASE("diagnostics report and csv") {
  std::mt19937_64 rng(8);
  Matrix x(60, 4);
  std::vector<std::size_t> dom(60);
  for (std::size_t i = 0; i < 60; ++i) {
    dom[i] = i < 30 ? 0 : 1;
    for (std::size_t c = 0; c < 4; ++c) x(i, c) = float(std::normal_distribution<double>()(rng) + (dom[i] ? 3 : 0));
  }
  const auto r = embedding_diagnostics(x, dom);
  CHECK(r.center_distance == doctest::Approx(6.0).epsilon(0.25));
  CHECK(r.probe_accuracy > 0.9);
  CHECK(r.pca.size() == 60);
  CHECK(r.warnings.empty());
  CHECK(r.metrics_csv().rfind("metric,value\n", 0) == 0);

  const auto zero = embedding_diagnostics(Matrix(10, 3), {0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
  CHECK_FALSE(zero.warnings.empty());
  CHECK(std::isfinite(zero.mean_intra_cosine));
  CHECK_THROWS_AS(embedding_diagnostics(x, std::vector<std::size_t>(60, 0)), Error);

  const auto csv = pca_csv({"a", "b"}, {"A", "B"}, {{{1, 2}}, {{3, 4}}});
  CHECK(csv.rfind("item_id,domain,x,y\n", 0) == 0);
}
