#include "recg/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "recg/binio.hpp"

namespace recg {

using nlohmann::json;

std::uint32_t IdMap::intern(std::string_view id) {
  auto it = index_.find(std::string(id));
  if (it != index_.end()) return it->second;
  const auto idx = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(id);
  index_.emplace(names_.back(), idx);
  return idx;
}

std::optional<std::uint32_t> IdMap::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Corpus::validate() const {
  if (items.size() != item_ids.size() || users.size() != user_ids.size() ||
      domains.size() != domain_ids.size()) {
    throw Error(ErrorCode::CountMismatch, "id maps out of sync with records");
  }
  for (const auto& item : items) {
    if (item.domain >= domains.size()) {
      throw Error(ErrorCode::Parse, "item " + item.item_id + " has unknown domain");
    }
    if (item.text.empty()) throw Error(ErrorCode::Parse, "item " + item.item_id + " has no text");
  }
  for (const auto& u : users) {
    if (u.items.size() != u.timestamps.size()) {
      throw Error(ErrorCode::CountMismatch, "user " + u.user_id + " timestamps misaligned");
    }
    for (std::size_t i = 0; i < u.items.size(); ++i) {
      if (u.items[i] >= items.size()) {
        throw Error(ErrorCode::Parse, "user " + u.user_id + " references unknown item");
      }
      if (i > 0 && u.timestamps[i] < u.timestamps[i - 1]) {
        throw Error(ErrorCode::Parse, "user " + u.user_id + " sequence not time-ordered");
      }
    }
  }
}

std::vector<ItemIndex> Corpus::items_in_domain(DomainIndex d) const {
  std::vector<ItemIndex> out;
  for (ItemIndex i = 0; i < items.size(); ++i) {
    if (items[i].domain == d) out.push_back(i);
  }
  return out;
}

std::optional<DomainIndex> Corpus::find_domain(std::string_view name) const {
  return domain_ids.find(name);
}

std::size_t Corpus::interaction_count() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.items.size();
  return n;
}

std::string render_item_text(const ItemFields& f) {
  return "Title: " + f.title + ". Features: " + f.features + ". Description: " + f.description + ".";
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(trim_cr(text.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

struct RawMeta {
  std::string item_id;
  std::string domain;
  ItemFields fields;
};

struct RawRow {
  std::string user;
  std::string item;
  std::int64_t ts;
  std::size_t order;
};

std::string get_string_field(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) {
    throw Error(ErrorCode::Parse, "metadata line " + std::to_string(line_no) + ": field '" + key +
                                      "' is not a string");
  }
  return it->get<std::string>();
}

}  // namespace

IngestResult ingest_text(std::string_view interactions_tsv, std::string_view metadata_jsonl,
                         const IngestOptions& options) {
  IngestStats stats;

  std::vector<RawMeta> metas;
  std::unordered_map<std::string, std::size_t> meta_index;
  {
    std::size_t line_no = 0;
    for (auto line : lines_of(metadata_jsonl)) {
      ++line_no;
      if (blank(line)) continue;
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, "metadata line " + std::to_string(line_no) + ": " + e.what());
      }
      if (!obj.is_object()) {
        throw Error(ErrorCode::Parse, "metadata line " + std::to_string(line_no) + ": not an object");
      }
      RawMeta m;
      m.item_id = get_string_field(obj, "item_id", line_no);
      m.domain = get_string_field(obj, "domain", line_no);
      if (m.item_id.empty() || m.domain.empty()) {
        throw Error(ErrorCode::Parse,
                    "metadata line " + std::to_string(line_no) + ": missing item_id or domain");
      }
      m.fields.title = get_string_field(obj, "title", line_no);
      m.fields.features = get_string_field(obj, "features", line_no);
      m.fields.description = get_string_field(obj, "description", line_no);
      if (meta_index.count(m.item_id)) {
        throw Error(ErrorCode::Parse,
                    "metadata line " + std::to_string(line_no) + ": duplicate item " + m.item_id);
      }
      if (blank(m.fields.title) && blank(m.fields.features) && blank(m.fields.description)) {
        ++stats.textless_items;
        continue;
      }
      meta_index.emplace(m.item_id, metas.size());
      metas.push_back(std::move(m));
    }
  }

  std::vector<RawRow> rows;
  {
    std::size_t line_no = 0;
    for (auto line : lines_of(interactions_tsv)) {
      ++line_no;
      if (blank(line)) continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) {
        throw Error(ErrorCode::Parse,
                    "interactions line " + std::to_string(line_no) + ": expected 3 tab-separated columns");
      }
      auto user = line.substr(0, t1);
      auto item = line.substr(t1 + 1, t2 - t1 - 1);
      auto ts_str = line.substr(t2 + 1);
      std::int64_t ts = 0;
      auto [ptr, ec] = std::from_chars(ts_str.data(), ts_str.data() + ts_str.size(), ts);
      if (user.empty() || item.empty() || ec != std::errc{} || ptr != ts_str.data() + ts_str.size()) {
        throw Error(ErrorCode::Parse, "interactions line " + std::to_string(line_no) + ": malformed row");
      }
      ++stats.rows;
      rows.push_back({std::string(user), std::string(item), ts, rows.size()});
    }
  }

  // Items without text never enter the count filter.
  std::erase_if(rows, [&](const RawRow& r) { return !meta_index.count(r.item); });

  // Group per user in first-appearance order, stable-sorted by timestamp.
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<RawRow>> by_user;
  for (auto& r : rows) {
    auto [it, inserted] = by_user.try_emplace(r.user);
    if (inserted) user_order.push_back(r.user);
    it->second.push_back(std::move(r));
  }
  for (auto& [u, seq] : by_user) {
    std::stable_sort(seq.begin(), seq.end(),
                     [](const RawRow& a, const RawRow& b) { return a.ts < b.ts; });
    if (options.collapse_consecutive_duplicates) {
      seq.erase(std::unique(seq.begin(), seq.end(),
                            [](const RawRow& a, const RawRow& b) { return a.item == b.item; }),
                seq.end());
    }
  }

  // Count filter, iterated to a fixed point.
  const std::size_t min_count = options.min_interactions;
  std::unordered_map<std::string, bool> item_alive;
  for (const auto& m : metas) item_alive[m.item_id] = true;
  std::unordered_map<std::string, bool> user_alive;
  for (const auto& u : user_order) user_alive[u] = true;
  const std::size_t users_before = user_order.size();
  std::size_t items_seen = 0;
  {
    std::unordered_map<std::string, bool> seen;
    for (const auto& [u, seq] : by_user)
      for (const auto& r : seq) seen[r.item] = true;
    items_seen = seen.size();
  }
  for (;;) {
    ++stats.filter_passes;
    std::unordered_map<std::string, std::size_t> item_count;
    std::unordered_map<std::string, std::size_t> user_count;
    for (const auto& u : user_order) {
      if (!user_alive[u]) continue;
      for (const auto& r : by_user[u]) {
        if (!item_alive[r.item]) continue;
        ++item_count[r.item];
        ++user_count[u];
      }
    }
    bool changed = false;
    for (const auto& u : user_order) {
      if (user_alive[u] && user_count[u] < std::max<std::size_t>(min_count, 3)) {
        user_alive[u] = false;
        changed = true;
      }
    }
    for (const auto& m : metas) {
      if (item_alive[m.item_id] && item_count[m.item_id] < min_count) {
        item_alive[m.item_id] = false;
        changed = true;
      }
    }
    if (!changed) break;
  }

  Corpus corpus;
  // Items keep metadata order; only items with at least one surviving
  // interaction (or any item, when the filter is disabled) are retained.
  std::unordered_map<std::string, bool> item_used;
  for (const auto& u : user_order) {
    if (!user_alive[u]) continue;
    for (const auto& r : by_user[u])
      if (item_alive[r.item]) item_used[r.item] = true;
  }
  for (const auto& m : metas) {
    if (!item_alive[m.item_id]) continue;
    if (min_count > 0 && !item_used[m.item_id]) continue;
    const auto d = corpus.domain_ids.intern(m.domain);
    if (d == corpus.domains.size()) corpus.domains.push_back({m.domain});
    corpus.item_ids.intern(m.item_id);
    corpus.items.push_back({m.item_id, d, render_item_text(m.fields), m.fields});
  }
  for (const auto& u : user_order) {
    if (!user_alive[u]) continue;
    UserSequence seq;
    seq.user_id = u;
    for (const auto& r : by_user[u]) {
      if (!item_alive[r.item]) continue;
      seq.items.push_back(*corpus.item_ids.find(r.item));
      seq.timestamps.push_back(r.ts);
    }
    corpus.user_ids.intern(u);
    corpus.users.push_back(std::move(seq));
  }
  stats.dropped_users = users_before - corpus.users.size();
  stats.dropped_items = items_seen > corpus.items.size() ? items_seen - corpus.items.size() : 0;

  if (corpus.users.empty() || corpus.items.empty()) {
    throw Error(ErrorCode::CorpusEmpty, "no users or items left after filtering");
  }
  corpus.validate();
  return {std::move(corpus), stats};
}

IngestResult ingest(const std::filesystem::path& interactions_path,
                    const std::filesystem::path& metadata_path, const IngestOptions& options) {
  const auto inter = read_text(interactions_path);
  const auto meta = read_text(metadata_path);
  return ingest_text(inter, meta, options);
}

SplitSpec split(const Corpus& corpus) {
  SplitSpec spec;
  for (UserIndex u = 0; u < corpus.users.size(); ++u) {
    const auto& seq = corpus.users[u].items;
    if (seq.size() < 3) {
      ++spec.excluded;
      continue;
    }
    UserSplit s;
    s.user = u;
    s.prefix.assign(seq.begin(), seq.end() - 2);
    s.val = seq[seq.size() - 2];
    s.test = seq.back();
    spec.users.push_back(std::move(s));
  }
  return spec;
}

Corpus domain_view(const Corpus& corpus, DomainIndex domain) {
  if (domain >= corpus.domains.size()) {
    throw Error(ErrorCode::InvalidConfig, "domain index out of range");
  }
  Corpus out;
  out.domain_ids.intern(corpus.domains[domain].name);
  out.domains.push_back(corpus.domains[domain]);
  std::vector<std::optional<ItemIndex>> remap(corpus.items.size());
  for (ItemIndex i = 0; i < corpus.items.size(); ++i) {
    const auto& item = corpus.items[i];
    if (item.domain != domain) continue;
    remap[i] = static_cast<ItemIndex>(out.items.size());
    out.item_ids.intern(item.item_id);
    auto copy = item;
    copy.domain = 0;
    out.items.push_back(std::move(copy));
  }
  for (const auto& u : corpus.users) {
    UserSequence seq;
    seq.user_id = u.user_id;
    for (std::size_t i = 0; i < u.items.size(); ++i) {
      if (auto r = remap[u.items[i]]) {
        seq.items.push_back(*r);
        seq.timestamps.push_back(u.timestamps[i]);
      }
    }
    if (seq.items.size() < 3) continue;
    out.user_ids.intern(seq.user_id);
    out.users.push_back(std::move(seq));
  }
  return out;
}

std::string format_interactions(const Corpus& corpus) {
  std::string out;
  for (const auto& u : corpus.users) {
    for (std::size_t i = 0; i < u.items.size(); ++i) {
      out += u.user_id;
      out += '\t';
      out += corpus.items[u.items[i]].item_id;
      out += '\t';
      out += std::to_string(u.timestamps[i]);
      out += '\n';
    }
  }
  return out;
}

std::string format_metadata(const Corpus& corpus) {
  std::string out;
  for (const auto& item : corpus.items) {
    json obj = {{"item_id", item.item_id},
                {"domain", corpus.domains[item.domain].name},
                {"title", item.fields.title},
                {"features", item.fields.features},
                {"description", item.fields.description}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::string format_split_manifest(const Corpus& corpus, const SplitSpec& spec) {
  std::string out;
  for (const auto& s : spec.users) {
    json obj = {{"user", corpus.users[s.user].user_id},
                {"prefix_len", s.prefix.size()},
                {"val", corpus.items[s.val].item_id},
                {"test", corpus.items[s.test].item_id}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "interactions.tsv", format_interactions(corpus));
  write_text(dir / "metadata.jsonl", format_metadata(corpus));
}

Corpus load_corpus(const std::filesystem::path& dir) {
  IngestOptions opts;
  opts.min_interactions = 0;
  auto result = ingest(dir / "interactions.tsv", dir / "metadata.jsonl", opts);
  return std::move(result.corpus);
}

std::string corpus_digest(const Corpus& corpus) {
  const auto text = format_metadata(corpus) + format_interactions(corpus);
  const auto d = sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return to_hex(d);
}

}  // namespace recg
