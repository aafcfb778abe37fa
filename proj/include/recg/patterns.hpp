#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "recg/binio.hpp"
#include "recg/model.hpp"
#include "recg/tensor.hpp"

namespace recg {

/// k sequential-pattern centroids over source user representations.
///
/// File layout ("PTRN" v1, little-endian): "PTRN" | u32 version | u32 k |
/// u32 d_l | k*d_l float32 centroids | 32-byte fingerprint | u32 CRC32.
struct PatternBank {
  static constexpr std::uint32_t kVersion = 1;

  Matrix centroids;  // k x d_l
  std::optional<double> inertia;  // not persisted
  Digest fingerprint{};

  std::size_t k() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.cols(); }

  Bytes encode() const;
  static PatternBank decode(std::span<const std::uint8_t> data);
  void save(const std::filesystem::path& path) const;
  static PatternBank load(const std::filesystem::path& path);
};

/// Binds a bank to the exact checkpoint bytes it was extracted under.
Digest bank_fingerprint(std::span<const std::uint8_t> checkpoint_bytes);
/// Throws FingerprintMismatch unless the bank was built from this checkpoint.
void require_fingerprint(const PatternBank& bank, std::span<const std::uint8_t> checkpoint_bytes);

struct KMeansOptions {
  std::size_t max_iterations = 300;
  double tolerance = 1e-6;  // max centroid shift
};

struct KMeansResult {
  std::vector<DVec> centroids;
  std::vector<std::size_t> assignment;
  std::vector<double> inertia_trace;  // one entry per assignment step
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::size_t reseeded = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded to
/// the point farthest from its current centroid. Throws TooFewPoints when
/// fewer than k points (or fewer than k distinct points) are given.
KMeansResult kmeans(const std::vector<DVec>& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

PatternBank extract_patterns(const std::vector<DVec>& source_user_reprs, std::size_t k,
                             std::uint64_t seed, const KMeansOptions& options = {});

struct Attention {
  DVec weights;  // k, sums to 1
  DVec pattern;  // attended pattern, d_l
};

/// Softmax over raw cosines (no temperature) between y and every centroid.
Attention attend(std::span<const double> user_repr, const PatternBank& bank);
/// g = W_f [y ; s]
DVec fuse(std::span<const double> user_repr, std::span<const double> pattern, const Matrix& fusion_w);

/// Forward record of attend+fuse for the reverse pass.
struct FusionTrace {
  DVec y;
  DVec y_unit;
  double y_denom = 1.0;
  bool y_floored = false;
  DVec cosines;
  Attention attn;
  DVec output;
};

/// Pre-normalized centroids so attend does not renormalize per user.
struct BankView {
  const PatternBank* bank = nullptr;
  std::vector<DVec> centroids;
  std::vector<DVec> units;

  explicit BankView(const PatternBank& b);
};

FusionTrace fuse_forward(const BankView& bank, const Matrix& fusion_w, DVec y);
/// Accumulates dL/dW_f into `tape` and returns dL/dy (including the path
/// through the attention weights; centroids are constants).
DVec fuse_backward(const BankView& bank, const Matrix& fusion_w, const FusionTrace& trace,
                   std::span<const double> grad_out, GradientTape& tape);

}  // namespace recg
