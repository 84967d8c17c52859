#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "revdict/math.hpp"

namespace revdict {

// The two word-vector spaces a head can be trained to predict.
enum class TargetKind { kElectra, kSgns };

std::string_view to_string(TargetKind k);
TargetKind target_kind_from_string(std::string_view name);

struct DictEntry {
  std::string id;
  std::string word;
  std::string gloss;
  std::optional<std::string> pos;
  std::optional<Vector> electra;
  std::optional<Vector> sgns;
  std::optional<std::string> link_id;  // counterpart id in the other language

  const std::optional<Vector>& embedding(TargetKind k) const {
    return k == TargetKind::kElectra ? electra : sgns;
  }
};

// Entries in file order with an id -> position map.
class DictionarySet {
 public:
  DictionarySet() = default;
  // Throws DataError on an empty or duplicate id, or on mixed embedding dims.
  DictionarySet(std::string language, std::string split, std::vector<DictEntry> entries);

  const std::string& language() const noexcept { return language_; }
  const std::string& split() const noexcept { return split_; }
  const std::vector<DictEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const DictEntry* find(std::string_view id) const;
  // 0 when no entry carries that embedding.
  std::size_t embedding_dim(TargetKind k) const;

 private:
  std::string language_;
  std::string split_;
  std::vector<DictEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t electra_dim_ = 0;
  std::size_t sgns_dim_ = 0;
};

// JSON array of {"id","word","gloss","pos","electra","sgns","enId"} objects.
DictionarySet load_dictionary(const std::filesystem::path& path, std::string language,
                              std::string split);
DictionarySet parse_dictionary(std::string_view json_text, std::string language,
                               std::string split);
void write_dictionary(const DictionarySet& set, const std::filesystem::path& path);

// Seeded shuffle, then the last round(N * dev_fraction) items go to dev.
std::pair<DictionarySet, DictionarySet> split_set(const DictionarySet& set, double dev_fraction,
                                                   std::uint64_t seed);

// Id-keyed encoder features of one constant dimension, in insertion order.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dim) : dim_(dim) {}

  void add(std::string id, Vector features);
  const Vector* find(std::string_view id) const;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<Vector> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSONL, one {"id": ..., "features": [...]} per line.
FeatureStore load_features(const std::filesystem::path& path);
void write_features(const FeatureStore& store, const std::filesystem::path& path);

// Deterministic character n-gram (n = 2..4) feature hashing of a gloss.
// Whitespace runs collapse to one space and the text is framed by boundary
// markers; the result is L2-normalised, and zero for an empty gloss.
Vector hashgram_encode(std::string_view gloss, std::size_t d_enc, std::uint64_t seed);

// Every entry's gloss through hashgram_encode, keyed by entry id.
FeatureStore hashgram_store(const DictionarySet& set, std::size_t d_enc, std::uint64_t seed);

// Features paired with one kind of target embedding.
struct SupervisedSet {
  Matrix features;
  Matrix targets;
  std::vector<std::string> ids;
  std::size_t dropped = 0;  // entries lacking a feature record or a target

  std::size_t size() const noexcept { return ids.size(); }
};

SupervisedSet join(const DictionarySet& set, const FeatureStore& store, TargetKind target);

// One row of the bilingual mapped dictionary.
struct MappedEntry {
  std::string target_id;  // "arId"
  std::string source_id;  // "enId"
  std::string target_word;
  std::string source_word;
  std::string target_gloss;
  std::string source_gloss;
  std::optional<Vector> electra;  // target-language embeddings only
  std::optional<Vector> sgns;
};

std::vector<MappedEntry> load_mapped(const std::filesystem::path& path);
std::vector<MappedEntry> parse_mapped(std::string_view json_text);

// A source-space embedding and its target-space counterpart.
struct AlignedPair {
  std::string src_id;
  std::string tgt_id;
  Vector src_embedding;
  Vector tgt_embedding;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace revdict
