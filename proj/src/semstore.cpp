#include "recg/semstore.hpp"

#include <nlohmann/json.hpp>

namespace recg {

SemanticStore::SemanticStore(std::vector<std::string> ids, Matrix rows)
    : ids_(std::move(ids)), rows_(std::move(rows)) {
  if (rows_.cols() == 0) throw Error(ErrorCode::ZeroDim, "embedding dim must be positive");
  if (ids_.size() != rows_.rows()) {
    throw Error(ErrorCode::CountMismatch, "id list and row count differ");
  }
  if (!all_finite(rows_.flat())) throw Error(ErrorCode::NonFinite, "embedding contains NaN/Inf");
  for (const auto& id : ids_) {
    if (index_.find(id)) throw Error(ErrorCode::CountMismatch, "duplicate item id " + id);
    index_.intern(id);
  }
}

std::optional<std::size_t> SemanticStore::find(std::string_view id) const {
  return index_.find(id);
}

Bytes SemanticStore::encode() const {
  const std::string table = nlohmann::json(ids_).dump();
  ByteWriter w;
  w.raw("SEMB");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(count()));
  w.u32(static_cast<std::uint32_t>(dim()));
  w.u64(table.size());
  w.raw(table);
  w.floats(rows_.flat());
  w.seal_crc();
  return w.take();
}

SemanticStore SemanticStore::decode(std::span<const std::uint8_t> data) {
  ByteReader r(data, ErrorCode::PayloadSizeMismatch);
  if (data.size() < 4 || r.str(4) != "SEMB") throw Error(ErrorCode::BadMagic, "not a SEMB file");
  const auto version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorCode::BadVersion, "unsupported SEMB version " + std::to_string(version));
  }
  const auto count = r.u32();
  const auto dim = r.u32();
  if (dim == 0) throw Error(ErrorCode::ZeroDim, "SEMB dim is zero");
  const auto table_len = r.u64();
  if (table_len > r.remaining()) {
    throw Error(ErrorCode::PayloadSizeMismatch, "string table exceeds file size");
  }
  const auto table = r.str(static_cast<std::size_t>(table_len));
  std::vector<std::string> ids;
  try {
    auto parsed = nlohmann::json::parse(table);
    ids = parsed.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("SEMB string table: ") + e.what());
  }
  if (ids.size() != count) {
    throw Error(ErrorCode::CountMismatch, "string table has " + std::to_string(ids.size()) +
                                              " ids but header declares " + std::to_string(count));
  }
  const std::uint64_t payload = std::uint64_t(count) * dim * sizeof(float);
  if (r.remaining() != payload + 4) {
    throw Error(ErrorCode::PayloadSizeMismatch,
                "declared payload " + std::to_string(payload) + " bytes, found " +
                    std::to_string(r.remaining() >= 4 ? r.remaining() - 4 : 0));
  }
  check_trailing_crc(data);
  Matrix rows(count, dim);
  r.floats(rows.flat());
  if (!all_finite(rows.flat())) throw Error(ErrorCode::NonFinite, "SEMB payload contains NaN/Inf");
  return SemanticStore(std::move(ids), std::move(rows));
}

SemanticStore SemanticStore::load(const std::filesystem::path& path) {
  return decode(read_file(path));
}

void SemanticStore::save(const std::filesystem::path& path) const { write_file(path, encode()); }

std::vector<std::string> missing_items(const SemanticStore& store, const Corpus& corpus) {
  std::vector<std::string> missing;
  for (const auto& item : corpus.items) {
    if (!store.find(item.item_id)) missing.push_back(item.item_id);
  }
  return missing;
}

BoundStore bind(const SemanticStore& store, const Corpus& corpus) {
  auto missing = missing_items(store, corpus);
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " corpus item(s) lack embeddings:";
    for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 5); ++i) msg += " " + missing[i];
    throw Error(ErrorCode::UnboundItems, msg, std::move(missing));
  }
  BoundStore bound;
  bound.rows = Matrix(corpus.items.size(), store.dim());
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto src = store.row(*store.find(corpus.items[i].item_id));
    std::copy(src.begin(), src.end(), bound.rows.row(i).begin());
  }
  return bound;
}

}  // namespace recg
