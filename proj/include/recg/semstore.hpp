#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "recg/binio.hpp"
#include "recg/corpus.hpp"
#include "recg/tensor.hpp"

namespace recg {

/// Raw semantic item embeddings (count x d_h, float32) keyed by item id.
///
/// On-disk layout ("SEMB" v1, little-endian):
///   "SEMB" | u32 version | u32 count | u32 dim | u64 S | S bytes JSON array of
///   item ids | count*dim float32 row-major | u32 CRC32 of all preceding bytes
class SemanticStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  SemanticStore() = default;
  SemanticStore(std::vector<std::string> ids, Matrix rows);

  std::size_t dim() const noexcept { return rows_.cols(); }
  std::size_t count() const noexcept { return rows_.rows(); }
  const Matrix& rows() const noexcept { return rows_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::optional<std::size_t> find(std::string_view id) const;
  std::span<const float> row(std::size_t r) const { return rows_.row(r); }

  Bytes encode() const;
  static SemanticStore decode(std::span<const std::uint8_t> data);

  static SemanticStore load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const SemanticStore& a, const SemanticStore& b) {
    return a.ids_ == b.ids_ && a.rows_ == b.rows_;
  }

 private:
  std::vector<std::string> ids_;
  Matrix rows_;
  IdMap index_;
};

/// Store rows resolved to corpus item order: row i is item i's embedding.
struct BoundStore {
  Matrix rows;
  std::size_t dim() const noexcept { return rows.cols(); }
};

/// Resolves every corpus item to its embedding; throws UnboundItems listing
/// the missing ids.
BoundStore bind(const SemanticStore& store, const Corpus& corpus);

/// Non-throwing probe: ids of corpus items without an embedding.
std::vector<std::string> missing_items(const SemanticStore& store, const Corpus& corpus);

}  // namespace recg
