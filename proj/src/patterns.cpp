#include "recg/patterns.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "recg/objective.hpp"

namespace recg {

namespace {

const double kNormFloor = std::sqrt(kCosineEps);

double sq_dist(const DVec& a, const DVec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

DVec unit(const DVec& v, double* denom = nullptr, bool* floored = nullptr) {
  const double len = norm(v);
  const bool fl = len <= kNormFloor;
  const double den = fl ? kNormFloor : len;
  if (denom) *denom = den;
  if (floored) *floored = fl;
  DVec u(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] / den;
  return u;
}

void softmax_inplace(DVec& x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  double z = 0.0;
  for (double& v : x) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : x) v /= z;
}

}  // namespace

Bytes PatternBank::encode() const {
  if (centroids.empty()) throw Error(ErrorCode::InvalidConfig, "empty pattern bank");
  ByteWriter w;
  w.raw("PTRN");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(k()));
  w.u32(static_cast<std::uint32_t>(dim()));
  w.floats(centroids.flat());
  w.raw(fingerprint);
  w.seal_crc();
  return w.take();
}

PatternBank PatternBank::decode(std::span<const std::uint8_t> data) {
  ByteReader r(data, ErrorCode::PayloadSizeMismatch);
  if (data.size() < 4 || r.str(4) != "PTRN") throw Error(ErrorCode::BadMagic, "not a pattern bank");
  const auto version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorCode::BadVersion, "unsupported pattern bank version " + std::to_string(version));
  }
  const auto k = r.u32();
  const auto d = r.u32();
  if (k == 0 || d == 0) throw Error(ErrorCode::ZeroDim, "pattern bank has k=0 or d_l=0");
  const std::uint64_t payload = std::uint64_t(k) * d * 4 + 32 + 4;
  if (r.remaining() != payload) throw Error(ErrorCode::PayloadSizeMismatch, "pattern bank size mismatch");
  check_trailing_crc(data);
  PatternBank bank;
  bank.centroids = Matrix(k, d);
  r.floats(bank.centroids.flat());
  const auto fp = r.str(32);
  std::memcpy(bank.fingerprint.data(), fp.data(), 32);
  if (!all_finite(bank.centroids.flat())) throw Error(ErrorCode::NonFinite, "non-finite centroid");
  return bank;
}

void PatternBank::save(const std::filesystem::path& path) const { write_file(path, encode()); }

PatternBank PatternBank::load(const std::filesystem::path& path) { return decode(read_file(path)); }

Digest bank_fingerprint(std::span<const std::uint8_t> checkpoint_bytes) {
  return sha256(checkpoint_bytes);
}

void require_fingerprint(const PatternBank& bank, std::span<const std::uint8_t> checkpoint_bytes) {
  if (bank.fingerprint != bank_fingerprint(checkpoint_bytes)) {
    throw Error(ErrorCode::FingerprintMismatch, "pattern bank was not built from this checkpoint");
  }
}

KMeansResult kmeans(const std::vector<DVec>& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  if (points.size() < k) {
    throw Error(ErrorCode::TooFewPoints, "k-means needs at least k=" + std::to_string(k) +
                                             " points, got " + std::to_string(points.size()));
  }
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(ErrorCode::DimensionMismatch, "ragged k-means input");
  }

  // k-means++ seeding
  std::mt19937_64 rng(seed);
  KMeansResult res;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  res.centroids.push_back(points[first(rng)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points[i], res.centroids[0]);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (res.centroids.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) {
      throw Error(ErrorCode::TooFewPoints, "fewer than k distinct points for k-means");
    }
    const double target = unif(rng) * total;
    double acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0) --pick;  // guard against rounding at the tail
    res.centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i], res.centroids.back()));
  }

  res.assignment.assign(n, 0);
  std::vector<std::size_t> prev;
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(points[i], res.centroids[c]);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      res.assignment[i] = arg;
      d2[i] = best;
      inertia += best;
    }
    res.inertia_trace.push_back(inertia);
    res.inertia = inertia;
    res.iterations = iter + 1;
    if (res.assignment == prev) break;
    prev = res.assignment;

    std::vector<DVec> sums(k, DVec(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[res.assignment[i]];
      for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
      ++counts[res.assignment[i]];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      DVec next(dim);
      if (counts[c] == 0) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (d2[i] > d2[far]) far = i;
        next = points[far];
        d2[far] = 0.0;
        ++res.reseeded;
      } else {
        for (std::size_t j = 0; j < dim; ++j) next[j] = sums[c][j] / double(counts[c]);
      }
      max_shift = std::max(max_shift, std::sqrt(sq_dist(next, res.centroids[c])));
      res.centroids[c] = std::move(next);
    }
    if (max_shift < options.tolerance) {
      // Final assignment against the converged centroids.
      double final_inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t c = 0; c < k; ++c) {
          const double d = sq_dist(points[i], res.centroids[c]);
          if (d < best) {
            best = d;
            arg = c;
          }
        }
        res.assignment[i] = arg;
        final_inertia += best;
      }
      res.inertia_trace.push_back(final_inertia);
      res.inertia = final_inertia;
      break;
    }
  }
  return res;
}

PatternBank extract_patterns(const std::vector<DVec>& reprs, std::size_t k, std::uint64_t seed,
                             const KMeansOptions& options) {
  const auto km = kmeans(reprs, k, seed, options);
  PatternBank bank;
  bank.centroids = Matrix(k, reprs[0].size());
  for (std::size_t c = 0; c < k; ++c) {
    auto row = bank.centroids.row(c);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = static_cast<float>(km.centroids[c][j]);
  }
  bank.inertia = km.inertia;
  return bank;
}

BankView::BankView(const PatternBank& b) : bank(&b) {
  for (std::size_t c = 0; c < b.k(); ++c) {
    const auto row = b.centroids.row(c);
    centroids.emplace_back(row.begin(), row.end());
    units.push_back(unit(centroids.back()));
  }
}

Attention attend(std::span<const double> y, const PatternBank& bank) {
  if (y.size() != bank.dim()) throw Error(ErrorCode::DimensionMismatch, "user repr vs bank dim");
  const BankView view(bank);
  const auto yu = unit(DVec(y.begin(), y.end()));
  Attention a;
  a.weights.resize(bank.k());
  for (std::size_t c = 0; c < bank.k(); ++c) a.weights[c] = dot(yu, view.units[c]);
  softmax_inplace(a.weights);
  a.pattern.assign(bank.dim(), 0.0);
  for (std::size_t c = 0; c < bank.k(); ++c) {
    for (std::size_t j = 0; j < bank.dim(); ++j) a.pattern[j] += a.weights[c] * view.centroids[c][j];
  }
  return a;
}

DVec fuse(std::span<const double> y, std::span<const double> s, const Matrix& w) {
  if (y.size() != s.size() || w.rows() != y.size() || w.cols() != 2 * y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "fusion matrix must be d_l x 2d_l");
  }
  DVec f(y.begin(), y.end());
  f.insert(f.end(), s.begin(), s.end());
  DVec g(w.rows(), 0.0);
  matvec_acc(w, std::span<const double>(f), std::span<double>(g));
  return g;
}

FusionTrace fuse_forward(const BankView& bank, const Matrix& fusion_w, DVec y) {
  FusionTrace tr;
  const std::size_t k = bank.units.size();
  const std::size_t dim = y.size();
  tr.y = std::move(y);
  tr.y_unit = unit(tr.y, &tr.y_denom, &tr.y_floored);
  tr.cosines.resize(k);
  for (std::size_t c = 0; c < k; ++c) tr.cosines[c] = dot(tr.y_unit, bank.units[c]);
  tr.attn.weights = tr.cosines;
  softmax_inplace(tr.attn.weights);
  tr.attn.pattern.assign(dim, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < dim; ++j) tr.attn.pattern[j] += tr.attn.weights[c] * bank.centroids[c][j];
  }
  tr.output = fuse(tr.y, tr.attn.pattern, fusion_w);
  return tr;
}

DVec fuse_backward(const BankView& bank, const Matrix& w, const FusionTrace& tr,
                   std::span<const double> g, GradientTape& tape) {
  const std::size_t dim = tr.y.size();
  const std::size_t k = bank.units.size();
  DVec f(tr.y);
  f.insert(f.end(), tr.attn.pattern.begin(), tr.attn.pattern.end());
  tape.fusion_w.add_outer(g, std::span<const double>(f));

  DVec df(2 * dim, 0.0);
  matvec_t_acc(w, g, df);
  DVec dy(df.begin(), df.begin() + static_cast<std::ptrdiff_t>(dim));
  const DVec ds(df.begin() + static_cast<std::ptrdiff_t>(dim), df.end());

  DVec da(k);
  double mean = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    da[c] = dot(ds, bank.centroids[c]);
    mean += tr.attn.weights[c] * da[c];
  }
  DVec du(dim, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double dcos = tr.attn.weights[c] * (da[c] - mean);
    for (std::size_t j = 0; j < dim; ++j) du[j] += dcos * bank.units[c][j];
  }
  if (tr.y_floored) {
    for (std::size_t j = 0; j < dim; ++j) dy[j] += du[j] / tr.y_denom;
  } else {
    const double proj = dot(tr.y_unit, du);
    for (std::size_t j = 0; j < dim; ++j) dy[j] += (du[j] - proj * tr.y_unit[j]) / tr.y_denom;
  }
  return dy;
}

}  // namespace recg
