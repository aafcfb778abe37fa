#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "recg/corpus.hpp"
#include "recg/semstore.hpp"
#include "support.hpp"

using namespace recg;

namespace {

SemanticStore two_by_four() {
  return SemanticStore({"a", "b"}, Matrix(2, 4, 0.0f));
}

Bytes with_fixed_crc(Bytes data) {
  data.resize(data.size() - 4);
  const auto c = crc32(data);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&c);
  data.insert(data.end(), p, p + 4);
  return data;
}

ErrorCode decode_error(const Bytes& b) {
  try {
    SemanticStore::decode(b);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode accepted corrupt input");
  return ErrorCode::Parse;
}

}  // namespace

TEST_CASE("crc32 and sha256 known answers") {
  const std::string s = "123456789";
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  CHECK(crc32(bytes) == 0xCBF43926u);
  CHECK(to_hex(sha256({})) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("two zero rows load back as zero rows") {
  const auto store = SemanticStore::decode(two_by_four().encode());
  CHECK(store.count() == 2);
  CHECK(store.dim() == 4);
  for (float x : store.rows().flat()) CHECK(x == 0.0f);
  CHECK(store.find("b") == 1u);
}

TEST_CASE("SEMB layout is exactly header, id table, payload, crc") {
  const auto bytes = two_by_four().encode();
  const std::string table = R"(["a","b"])";
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 8 + table.size() + 2 * 4 * 4 + 4);
  CHECK(std::memcmp(bytes.data(), "SEMB", 4) == 0);
  std::uint32_t u;
  std::memcpy(&u, bytes.data() + 4, 4);
  CHECK(u == 1);
  std::memcpy(&u, bytes.data() + 8, 4);
  CHECK(u == 2);
  std::memcpy(&u, bytes.data() + 12, 4);
  CHECK(u == 4);
  std::uint64_t s;
  std::memcpy(&s, bytes.data() + 16, 8);
  CHECK(s == table.size());
  CHECK(std::string(bytes.begin() + 24, bytes.begin() + 24 + long(table.size())) == table);
  std::memcpy(&u, bytes.data() + bytes.size() - 4, 4);
  CHECK(u == crc32(std::span(bytes).first(bytes.size() - 4)));
}

TEST_CASE("round trip through a file is bit-identical") {
  std::mt19937_64 rng(3);
  std::vector<std::string> ids;
  for (int i = 0; i < 17; ++i) ids.push_back("item-" + std::to_string(i) + "\"quoted\" é");
  const SemanticStore store(ids, testing::random_matrix(rng, 17, 9));
  const auto path = testing::scratch_dir("semb") / "x.semb";
  store.save(path);
  const auto back = SemanticStore::load(path);
  CHECK(back == store);
  CHECK(std::memcmp(back.rows().flat().data(), store.rows().flat().data(), 17 * 9 * 4) == 0);
  CHECK(back.encode() == store.encode());
}

TEST_CASE("each corruption maps to its own error code") {
  const auto good = two_by_four().encode();

  auto magic = good;
  magic[0] = 'X';
  CHECK(decode_error(magic) == ErrorCode::BadMagic);

  auto version = good;
  version[4] = 2;
  CHECK(decode_error(with_fixed_crc(version)) == ErrorCode::BadVersion);

  auto zero_dim = good;
  std::memset(zero_dim.data() + 12, 0, 4);
  CHECK(decode_error(with_fixed_crc(zero_dim)) == ErrorCode::ZeroDim);

  auto count = good;
  count[8] = 3;
  CHECK(decode_error(with_fixed_crc(count)) == ErrorCode::CountMismatch);

  auto truncated = good;
  truncated.erase(truncated.end() - 9, truncated.end() - 4);
  CHECK(decode_error(with_fixed_crc(truncated)) == ErrorCode::PayloadSizeMismatch);
  CHECK(decode_error(Bytes(good.begin(), good.begin() + 30)) == ErrorCode::PayloadSizeMismatch);

  auto flipped = good;
  flipped[flipped.size() - 6] ^= 0x01;
  CHECK(decode_error(flipped) == ErrorCode::CrcMismatch);

  auto nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + nan.size() - 8, &q, 4);
  CHECK(decode_error(with_fixed_crc(nan)) == ErrorCode::NonFinite);
}

TEST_CASE("declared rows x dim x 4 must equal the payload length") {
  auto extra = two_by_four().encode();
  extra.insert(extra.end() - 4, {0, 0, 0, 0});
  CHECK(decode_error(with_fixed_crc(extra)) == ErrorCode::PayloadSizeMismatch);
}

TEST_CASE("constructor rejects non-finite rows and zero dims") {
  Matrix m(1, 2);
  m(0, 1) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(SemanticStore({"x"}, m), Error);
  CHECK_THROWS_AS(SemanticStore({"x"}, Matrix(1, 0)), Error);
}

namespace {

Corpus three_item_corpus() {
  const std::string meta =
      R"({"item_id":"i1","domain":"A","title":"one","features":"","description":""})" "\n"
      R"({"item_id":"i2","domain":"A","title":"two","features":"","description":""})" "\n"
      R"({"item_id":"i3","domain":"A","title":"three","features":"","description":""})" "\n";
  const std::string tsv = "u1\ti1\t1\nu1\ti2\t2\nu1\ti3\t3\n";
  return ingest_text(tsv, meta, IngestOptions{0, false}).corpus;
}

}  // namespace

TEST_CASE("bind resolves rows in corpus item order") {
  const auto corpus = three_item_corpus();
  Matrix rows(4, 2);
  const std::vector<std::string> ids = {"i3", "zz", "i1", "i2"};
  for (std::size_t r = 0; r < 4; ++r) rows(r, 0) = float(r);
  const SemanticStore store(ids, rows);
  CHECK(missing_items(store, corpus).empty());
  const auto bound = bind(store, corpus);
  REQUIRE(bound.rows.rows() == 3);
  CHECK(bound.rows(0, 0) == 2.0f);  // i1
  CHECK(bound.rows(1, 0) == 3.0f);  // i2
  CHECK(bound.rows(2, 0) == 0.0f);  // i3
}

TEST_CASE("bind lists the missing id") {
  const auto corpus = three_item_corpus();
  const SemanticStore store({"i1", "i3"}, Matrix(2, 2));
  try {
    bind(store, corpus);
    FAIL("expected unbound-items");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnboundItems);
    CHECK(e.details() == std::vector<std::string>{"i2"});
  }
}

TEST_CASE("binding an empty corpus succeeds vacuously") {
  const SemanticStore store({"i1"}, Matrix(1, 3));
  const Corpus empty;
  CHECK(missing_items(store, empty).empty());
  CHECK(bind(store, empty).rows.rows() == 0);
}
