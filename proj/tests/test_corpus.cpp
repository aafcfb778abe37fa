#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "recg/corpus.hpp"
#include "recg/synth.hpp"
#include "support.hpp"

using namespace recg;

namespace {

std::string meta_line(const std::string& id, const std::string& domain, const std::string& title = "t") {
  return R"({"item_id":")" + id + R"(","domain":")" + domain + R"(","title":")" + title +
         R"(","features":"f","description":"d"})" "\n";
}

// Each user interacts with every item `reps` times, timestamps increasing.
std::string dense_interactions(std::size_t users, std::size_t items, std::size_t reps) {
  std::string out;
  std::int64_t ts = 0;
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t r = 0; r < reps; ++r)
      for (std::size_t i = 0; i < items; ++i)
        out += "u" + std::to_string(u) + "\ti" + std::to_string(i) + "\t" + std::to_string(ts++) + "\n";
  return out;
}

std::string dense_meta(std::size_t items) {
  std::string out;
  for (std::size_t i = 0; i < items; ++i) out += meta_line("i" + std::to_string(i), "A");
  return out;
}

Corpus letters(const std::string& seq) {
  std::string meta, tsv;
  for (char c : std::string("abcdefgh")) meta += meta_line(std::string(1, c), "A");
  for (std::size_t t = 0; t < seq.size(); ++t)
    tsv += "u\t" + std::string(1, seq[t]) + "\t" + std::to_string(t) + "\n";
  return ingest_text(tsv, meta, {0, false}).corpus;
}

std::vector<std::string> ids(const Corpus& c, const std::vector<ItemIndex>& xs) {
  std::vector<std::string> out;
  for (auto x : xs) out.push_back(c.items[x].item_id);
  return out;
}

}  // namespace

TEST_CASE("user with nine interactions is dropped") {
  auto tsv = dense_interactions(3, 12, 4);
  for (int i = 0; i < 9; ++i) tsv += "short\ti" + std::to_string(i) + "\t" + std::to_string(1000 + i) + "\n";
  const auto r = ingest_text(tsv, dense_meta(12));
  CHECK(r.corpus.users.size() == 3);
  CHECK_FALSE(r.corpus.user_ids.find("short").has_value());
  CHECK(r.stats.dropped_users == 1);
}

TEST_CASE("user with exactly ten interactions is kept") {
  auto tsv = dense_interactions(3, 12, 4);
  for (int i = 0; i < 10; ++i) tsv += "edge\ti" + std::to_string(i) + "\t" + std::to_string(1000 + i) + "\n";
  CHECK(ingest_text(tsv, dense_meta(12)).corpus.users.size() == 4);
}

TEST_CASE("empty input is corpus-empty") {
  try {
    ingest_text("", "");
    FAIL("expected corpus-empty");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorpusEmpty);
  }
}

TEST_CASE("3 users x 12 shared items all retained in one pass") {
  const auto r = ingest_text(dense_interactions(3, 12, 4), dense_meta(12));
  CHECK(r.corpus.users.size() == 3);
  CHECK(r.corpus.items.size() == 12);
  CHECK(r.stats.filter_passes == 1);
  CHECK(r.corpus.interaction_count() == 3 * 12 * 4);
  // Dense interning from 0 in metadata order.
  for (ItemIndex i = 0; i < 12; ++i) CHECK(r.corpus.items[i].item_id == "i" + std::to_string(i));
}

TEST_CASE("filter cascades to a fixed point") {
  std::string tsv = dense_interactions(3, 12, 4);
  std::string meta = dense_meta(12) + meta_line("rare", "A");
  // "weak" has 10 rows: 9 on "rare" and 1 on i0. "rare" has 9 interactions
  // and is dropped in pass 1, leaving "weak" with 1 row -> dropped in pass 2.
  for (int t = 0; t < 9; ++t) tsv += "weak\trare\t" + std::to_string(5000 + t) + "\n";
  tsv += "weak\ti0\t6000\n";
  const auto r = ingest_text(tsv, meta);
  CHECK(r.corpus.users.size() == 3);
  CHECK_FALSE(r.corpus.item_ids.find("rare").has_value());
  CHECK(r.stats.filter_passes == 3);

  SUBCASE("re-running the filter on its output changes nothing") {
    const auto again = ingest_text(format_interactions(r.corpus), format_metadata(r.corpus));
    CHECK(again.stats.filter_passes == 1);
    CHECK(format_interactions(again.corpus) == format_interactions(r.corpus));
    CHECK(format_metadata(again.corpus) == format_metadata(r.corpus));
  }
}

TEST_CASE("items without text are removed") {
  auto meta = dense_meta(12) + R"({"item_id":"blank","domain":"A","title":" ","features":"","description":""})" "\n";
  auto tsv = dense_interactions(3, 12, 4);
  for (int u = 0; u < 3; ++u)
    for (int t = 0; t < 4; ++t) tsv += "u" + std::to_string(u) + "\tblank\t" + std::to_string(9000 + t) + "\n";
  const auto r = ingest_text(tsv, meta);
  CHECK(r.stats.textless_items == 1);
  CHECK_FALSE(r.corpus.item_ids.find("blank").has_value());
  CHECK(r.corpus.users.size() == 3);
}

TEST_CASE("malformed rows report their line number") {
  const auto meta = dense_meta(2);
  try {
    ingest_text("u\ti0\t1\nu\ti1\n", meta, {0, false});
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    ingest_text("u\ti0\tnot-a-time\n", meta, {0, false});
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  try {
    ingest_text("u\ti0\t1\n", meta_line("i0", "A") + "{oops\n", {0, false});
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find("metadata line 2") != std::string::npos);
  }
}

TEST_CASE("timestamp ties keep file order") {
  const std::string meta = meta_line("a", "A") + meta_line("b", "A") + meta_line("c", "A");
  const auto c = ingest_text("u\tc\t5\nu\ta\t5\nu\tb\t1\n", meta, {0, false}).corpus;
  CHECK(ids(c, c.users[0].items) == std::vector<std::string>{"b", "c", "a"});
}

TEST_CASE("item text follows the fixed template") {
  CHECK(render_item_text({"Lamp", "brass", "A desk lamp"}) ==
        "Title: Lamp. Features: brass. Description: A desk lamp.");
}

TEST_CASE("split examples") {
  auto c = letters("abcd");
  auto s = split(c);
  REQUIRE(s.users.size() == 1);
  CHECK(ids(c, s.users[0].prefix) == std::vector<std::string>{"a", "b"});
  CHECK(c.items[s.users[0].val].item_id == "c");
  CHECK(c.items[s.users[0].test].item_id == "d");

  c = letters("abc");
  s = split(c);
  REQUIRE(s.users.size() == 1);
  CHECK(ids(c, s.users[0].prefix) == std::vector<std::string>{"a"});
  CHECK(c.items[s.users[0].val].item_id == "b");
  CHECK(c.items[s.users[0].test].item_id == "c");

  // ingest never yields a 2-item user, so shorten one by hand.
  c = letters("abc");
  c.users[0].items.pop_back();
  c.users[0].timestamps.pop_back();
  s = split(c);
  CHECK(s.users.empty());
  CHECK(s.excluded == 1);
}

TEST_CASE("split of 100 users is a partition") {
  SynthConfig cfg;
  cfg.n_items = 40;
  cfg.n_users = 50;
  cfg.d_h = 4;
  cfg.n_latent_topics = 4;
  cfg.seq_len_min = 3;
  cfg.seq_len_max = 9;
  const auto out = synthesize(cfg);
  const auto s = split(out.corpus);
  CHECK(s.users.size() == 100);
  CHECK(s.excluded == 0);
  for (const auto& u : s.users) {
    auto joined = u.prefix;
    joined.push_back(u.val);
    joined.push_back(u.test);
    CHECK(joined == out.corpus.users[u.user].items);
    CHECK_FALSE(u.prefix.empty());
  }
}

TEST_CASE("corpus directory round trip and digest") {
  SynthConfig cfg;
  cfg.n_items = 30;
  cfg.n_users = 20;
  cfg.d_h = 4;
  cfg.n_latent_topics = 3;
  const auto out = synthesize(cfg);
  const auto dir = testing::scratch_dir("corpus_rt");
  write_corpus(out.corpus, dir);
  const auto back = load_corpus(dir);
  CHECK(format_interactions(back) == format_interactions(out.corpus));
  CHECK(format_metadata(back) == format_metadata(out.corpus));
  CHECK(corpus_digest(back) == corpus_digest(out.corpus));
  CHECK(corpus_digest(domain_view(out.corpus, 0)) != corpus_digest(out.corpus));
}

TEST_CASE("domain view keeps one domain's items and re-indexes them") {
  const std::string meta = meta_line("a1", "A") + meta_line("b1", "B") + meta_line("a2", "A") +
                           meta_line("a3", "A");
  const std::string tsv = "u\ta1\t1\nu\tb1\t2\nu\ta2\t3\nu\ta3\t4\nv\tb1\t1\nv\ta1\t2\n";
  const auto c = ingest_text(tsv, meta, {0, false}).corpus;
  const auto a = domain_view(c, *c.find_domain("A"));
  CHECK(a.items.size() == 3);
  REQUIRE(a.users.size() == 1);  // v has only one A item left
  CHECK(ids(a, a.users[0].items) == std::vector<std::string>{"a1", "a2", "a3"});
  CHECK_NOTHROW(a.validate());
  CHECK_THROWS_AS(domain_view(c, 7), Error);
}

TEST_CASE("split manifest lists one json line per user") {
  const auto c = letters("abcd");
  const auto m = format_split_manifest(c, split(c));
  CHECK(m == "{\"prefix_len\":2,\"test\":\"d\",\"user\":\"u\",\"val\":\"c\"}\n");
}
