#include <doctest.h>

#include <cmath>

#include "recg/patterns.hpp"
#include "support.hpp"

using namespace recg;

namespace {

PatternBank bank_of(const std::vector<DVec>& rows) {
  PatternBank b;
  b.centroids = Matrix(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) b.centroids(r, c) = float(rows[r][c]);
  return b;
}

Matrix fusion(std::size_t dl, bool left) {
  Matrix w(dl, 2 * dl);
  for (std::size_t i = 0; i < dl; ++i) w(i, left ? i : dl + i) = 1.0f;
  return w;
}

}  // namespace

TEST_CASE("two tight groups give their means") {
  std::mt19937_64 rng(1);
  std::vector<DVec> pts;
  DVec sum_a(2, 0.0), sum_b(2, 0.0);
  for (int i = 0; i < 20; ++i) {
    auto n = testing::random_vec(rng, 2, 0.01);
    DVec a = {5 + n[0], 5 + n[1]};
    n = testing::random_vec(rng, 2, 0.01);
    DVec b = {-5 + n[0], 1 + n[1]};
    for (int c = 0; c < 2; ++c) {
      sum_a[c] += a[c];
      sum_b[c] += b[c];
    }
    pts.push_back(a);
    pts.push_back(b);
  }
  const auto r = kmeans(pts, 2, 3);
  const auto& ca = r.centroids[0][0] > 0 ? r.centroids[0] : r.centroids[1];
  const auto& cb = r.centroids[0][0] > 0 ? r.centroids[1] : r.centroids[0];
  for (int c = 0; c < 2; ++c) {
    CHECK(ca[c] == doctest::Approx(sum_a[c] / 20).epsilon(1e-9));
    CHECK(cb[c] == doctest::Approx(sum_b[c] / 20).epsilon(1e-9));
  }
}

TEST_CASE("k=1 gives the global mean") {
  std::mt19937_64 rng(2);
  std::vector<DVec> pts;
  DVec sum(3, 0.0);
  for (int i = 0; i < 17; ++i) {
    pts.push_back(testing::random_vec(rng, 3));
    for (int c = 0; c < 3; ++c) sum[c] += pts.back()[c];
  }
  const auto r = kmeans(pts, 1, 1);
  for (int c = 0; c < 3; ++c) CHECK(r.centroids[0][c] == doctest::Approx(sum[c] / 17).epsilon(1e-9));
}

TEST_CASE("inertia is non-increasing across Lloyd iterations") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<DVec> pts;
    for (int i = 0; i < 50; ++i) pts.push_back(testing::random_vec(rng, 3));
    const auto r = kmeans(pts, 4, seed);
    REQUIRE(r.inertia_trace.size() >= 2);
    for (std::size_t i = 1; i < r.inertia_trace.size(); ++i)
      CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] + 1e-9);
    // Independent inertia of the final assignment.
    double inertia = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (int c = 0; c < 3; ++c) {
        const double d = pts[i][c] - r.centroids[r.assignment[i]][c];
        inertia += d * d;
      }
    CHECK(r.inertia == doctest::Approx(inertia).epsilon(1e-9));
  }
}

TEST_CASE("k-means rejects too few points") {
  CHECK_THROWS_AS(kmeans({{1, 2}, {3, 4}}, 3, 1), Error);
  CHECK_THROWS_AS(kmeans({{1, 2}, {1, 2}, {1, 2}}, 2, 1), Error);
  CHECK_NOTHROW(kmeans({{1, 2}, {1, 2}, {3, 4}}, 2, 1));
}

TEST_CASE("k-means is deterministic for a seed") {
  std::mt19937_64 rng(4);
  std::vector<DVec> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(testing::random_vec(rng, 4));
  const auto a = extract_patterns(pts, 5, 9), b = extract_patterns(pts, 5, 9);
  CHECK(a.encode() == b.encode());
}

TEST_CASE("attention examples") {
  const auto same = bank_of({{1, 2}, {1, 2}, {1, 2}});
  auto a = attend(DVec{0.3, -1}, same);
  for (double w : a.weights) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(a.pattern[0] == doctest::Approx(1.0));
  CHECK(a.pattern[1] == doctest::Approx(2.0));

  a = attend(DVec{1, 0}, bank_of({{1, 0}, {0, 1}}));
  CHECK(a.weights[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(a.weights[1] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(a.weights[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));

  a = attend(DVec{4, 4}, bank_of({{-2, 7}}));
  CHECK(a.weights == DVec{1.0});
  CHECK(a.pattern == DVec{-2, 7});

  a = attend(DVec{0, 0}, bank_of({{1, 0}, {0, 1}, {-1, -1}}));
  for (double w : a.weights) CHECK(std::isfinite(w));
}

TEST_CASE("attention weights are a distribution inside the convex hull") {
  std::mt19937_64 rng(6);
  const std::size_t k = 6, dl = 4;
  std::vector<DVec> rows;
  for (std::size_t i = 0; i < k; ++i) rows.push_back(testing::random_vec(rng, dl));
  const auto bank = bank_of(rows);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = attend(testing::random_vec(rng, dl, 3.0), bank);
    double sum = 0;
    for (double w : a.weights) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t c = 0; c < dl; ++c) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t i = 0; i < k; ++i) {
        lo = std::min(lo, double(bank.centroids(i, c)));
        hi = std::max(hi, double(bank.centroids(i, c)));
      }
      CHECK(a.pattern[c] >= lo - 1e-6);
      CHECK(a.pattern[c] <= hi + 1e-6);
    }
  }
}

TEST_CASE("fuse with identity blocks") {
  const DVec y = {1, 2, 3}, s = {-4, 5, 0.5};
  CHECK(fuse(y, s, fusion(3, true)) == y);
  CHECK(fuse(y, s, fusion(3, false)) == s);
  CHECK_THROWS_AS(fuse(y, DVec{1, 2}, fusion(3, true)), Error);
}

TEST_CASE("fuse matches a concatenation oracle") {
  std::mt19937_64 rng(7);
  const auto w = testing::random_matrix(rng, 4, 8);
  const auto y = testing::random_vec(rng, 4), s = testing::random_vec(rng, 4);
  const auto g = fuse(y, s, w);
  for (std::size_t r = 0; r < 4; ++r) {
    double want = 0;
    for (std::size_t c = 0; c < 4; ++c) want += double(w(r, c)) * y[c] + double(w(r, 4 + c)) * s[c];
    CHECK(g[r] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("fuse forward agrees with attend then fuse") {
  std::mt19937_64 rng(8);
  std::vector<DVec> rows;
  for (int i = 0; i < 3; ++i) rows.push_back(testing::random_vec(rng, 4));
  const auto bank = bank_of(rows);
  const BankView view(bank);
  const auto w = testing::random_matrix(rng, 4, 8);
  const auto y = testing::random_vec(rng, 4);
  const auto tr = fuse_forward(view, w, y);
  const auto want = fuse(y, attend(y, bank).pattern, w);
  for (int i = 0; i < 4; ++i) CHECK(tr.output[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("bank file round trip and fingerprint") {
  std::mt19937_64 rng(9);
  std::vector<DVec> pts;
  for (int i = 0; i < 30; ++i) pts.push_back(testing::random_vec(rng, 5));
  auto bank = extract_patterns(pts, 4, 2);
  const Bytes ckpt_a = {1, 2, 3, 4}, ckpt_b = {1, 2, 3, 5};
  bank.fingerprint = bank_fingerprint(ckpt_a);
  const auto path = testing::scratch_dir("ptrn") / "b.ptrn";
  bank.save(path);
  const auto back = PatternBank::load(path);
  CHECK(back.centroids == bank.centroids);
  CHECK(back.fingerprint == bank.fingerprint);
  CHECK(back.encode() == bank.encode());
  CHECK_NOTHROW(require_fingerprint(back, ckpt_a));
  try {
    require_fingerprint(back, ckpt_b);
    FAIL("expected fingerprint mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FingerprintMismatch);
  }
  auto bytes = bank.encode();
  bytes[20] ^= 1;
  CHECK_THROWS_AS(PatternBank::decode(bytes), Error);
}
