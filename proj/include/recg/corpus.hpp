#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recg/tensor.hpp"

namespace recg {

using ItemIndex = std::uint32_t;
using UserIndex = std::uint32_t;
using DomainIndex = std::uint32_t;

/// Dense string <-> index interning table.
class IdMap {
 public:
  std::uint32_t intern(std::string_view id);
  std::optional<std::uint32_t> find(std::string_view id) const;
  const std::string& name(std::uint32_t index) const { return names_.at(index); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct ItemFields {
  std::string title;
  std::string features;
  std::string description;
};

struct ItemRecord {
  std::string item_id;
  DomainIndex domain = 0;
  std::string text;
  ItemFields fields;
};

struct UserSequence {
  std::string user_id;
  std::vector<ItemIndex> items;
  std::vector<std::int64_t> timestamps;
};

struct DomainMeta {
  std::string name;
};

/// Interned users, items and domains with time-ordered per-user sequences.
/// Immutable once built; validate() checks the structural invariants.
struct Corpus {
  std::vector<ItemRecord> items;
  std::vector<UserSequence> users;
  std::vector<DomainMeta> domains;
  IdMap user_ids;
  IdMap item_ids;
  IdMap domain_ids;

  void validate() const;
  std::vector<ItemIndex> items_in_domain(DomainIndex d) const;
  std::optional<DomainIndex> find_domain(std::string_view name) const;
  std::size_t interaction_count() const;
};

/// "Title: {title}. Features: {features}. Description: {description}."
std::string render_item_text(const ItemFields& fields);

struct IngestOptions {
  std::size_t min_interactions = 10;
  bool collapse_consecutive_duplicates = false;
};

struct IngestStats {
  std::size_t filter_passes = 0;
  std::size_t textless_items = 0;
  std::size_t dropped_users = 0;
  std::size_t dropped_items = 0;
  std::size_t rows = 0;
};

struct IngestResult {
  Corpus corpus;
  IngestStats stats;
};

IngestResult ingest(const std::filesystem::path& interactions_path,
                    const std::filesystem::path& metadata_path,
                    const IngestOptions& options = {});

/// Text-level variant used by ingest(); exposed for tests.
IngestResult ingest_text(std::string_view interactions_tsv, std::string_view metadata_jsonl,
                         const IngestOptions& options = {});

struct UserSplit {
  UserIndex user = 0;
  std::vector<ItemIndex> prefix;
  ItemIndex val = 0;
  ItemIndex test = 0;
};

/// Leave-one-out partition: last item is test, penultimate is validation.
struct SplitSpec {
  std::vector<UserSplit> users;
  std::size_t excluded = 0;
};

SplitSpec split(const Corpus& corpus);

/// Restricts the corpus to one domain: only that domain's items, each user's
/// sequence filtered to those items, users left with < 3 items dropped.
Corpus domain_view(const Corpus& corpus, DomainIndex domain);

std::string format_interactions(const Corpus& corpus);
std::string format_metadata(const Corpus& corpus);
std::string format_split_manifest(const Corpus& corpus, const SplitSpec& spec);

/// Writes interactions.tsv + metadata.jsonl into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
/// Reads a directory written by write_corpus without re-applying the count filter.
Corpus load_corpus(const std::filesystem::path& dir);

/// SHA-256 over the canonical corpus serialization.
std::string corpus_digest(const Corpus& corpus);

}  // namespace recg
