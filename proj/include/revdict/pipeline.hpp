#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "revdict/align.hpp"
#include "revdict/data.hpp"
#include "revdict/ensemble.hpp"
#include "revdict/eval.hpp"
#include "revdict/optim.hpp"
#include "revdict/projection.hpp"
#include "revdict/retrieval.hpp"

namespace revdict {

namespace fs = std::filesystem;

// How one encoder turns glosses into feature vectors.
struct EncoderSpec {
  enum class Type { kHashgram, kFeatures } type = Type::kHashgram;
  std::size_t dim = 256;            // hashgram only
  std::uint64_t seed = 0;           // hashgram only
  std::map<std::string, fs::path> splits;  // features: split name -> JSONL
  std::optional<fs::path> translated;      // features keyed by test id for translated glosses
};

struct AlignSettings {
  std::string source_language = "en";
  std::map<std::string, fs::path> source_dictionary;  // "train" and optionally "dev"
  double dev_fraction = 0.2;
  EncoderSpec source_encoder;
  std::map<std::string, fs::path> mapped;  // "train", "dev", optionally "test"
  TargetKind target = TargetKind::kElectra;
  TargetKind source_target = TargetKind::kElectra;
  std::size_t width = 128;
  std::size_t bottleneck = 32;
  double reconstruction_weight = 0.0;
  bool use_gold_source = false;
  TrainConfig train;
};

struct ServeSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<fs::path> static_dir;
  std::optional<fs::path> index_cache;
};

// File-based run configuration (JSON). Relative paths resolve against the
// config file's directory; unknown keys and missing files are rejected.
struct RunConfig {
  std::string language = "ar";
  std::map<std::string, fs::path> dictionary;  // split -> dictionary file
  std::vector<fs::path> index;                 // lookup vocabulary; defaults to every dictionary split
  std::map<std::string, EncoderSpec> encoders;
  std::vector<TargetKind> targets = {TargetKind::kElectra, TargetKind::kSgns};
  std::optional<std::size_t> d_hidden;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::uint64_t hashgram_seed = 0;  // fallback encoder for unseen glosses
  fs::path out = "out";
  std::optional<AlignSettings> align;
  ServeSettings serve;

  static RunConfig parse(const nlohmann::json& doc, const fs::path& base_dir);
  static RunConfig load(const fs::path& path);
};

// Resolves glosses to encoder features. Feature-file encoders look up, in
// order: the translated store by id, the same id when its dictionary gloss
// matches, any entry with an identical gloss, and finally hash-gram features
// of the right width.
class GlossEncoder {
 public:
  // Feature files are read eagerly; the encoder is immutable afterwards
  // apart from index_glosses().
  GlossEncoder(std::string name, EncoderSpec spec, std::uint64_t fallback_seed);

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  bool uses_features() const noexcept { return spec_.type == EncoderSpec::Type::kFeatures; }

  // Features for the entries of a dictionary set, looked up by id in the
  // named split's file first and then in the others.
  FeatureStore store_for(const std::string& split, const DictionarySet& set) const;

  // Registers dictionary glosses so that exact-gloss hits can be found.
  void index_glosses(const std::string& split, const DictionarySet& set);

  // Writes dim() features for one gloss. Returns true when the hash-gram
  // fallback had to be used.
  bool resolve(std::string_view id, std::string_view gloss, bool use_translated, std::span<double> out) const;

 private:

  std::string name_;
  EncoderSpec spec_;
  std::uint64_t fallback_seed_;
  std::size_t dim_ = 0;
  std::map<std::string, FeatureStore> stores_;
  std::optional<FeatureStore> translated_;
  struct GlossRef {
    std::string split;
    std::string id;
  };
  const Vector* features_of(const GlossRef& ref) const;

  std::map<std::string, GlossRef, std::less<>> by_gloss_;  // first occurrence wins
  std::map<std::string, std::vector<std::pair<std::string, GlossRef>>, std::less<>> by_id_;  // id -> (gloss, ref)
};

struct Manifest {
  TargetKind target = TargetKind::kElectra;
  struct Member {
    std::string name;  // encoder name
    fs::path checkpoint;
  };
  std::vector<Member> members;
  double dev_cosine = 0.0;

  nlohmann::json to_json(const fs::path& relative_to) const;
  static Manifest load(const fs::path& path);
};

struct Predictions {
  std::vector<std::string> ids;
  Matrix embeddings;
};

// JSONL {"id": ..., "embedding": [...]}.
void write_predictions(const Predictions& p, const fs::path& path);
Predictions load_predictions(const fs::path& path);

// Loaded ensemble plus one encoder per member, in member order.
struct EnsembleRuntime {
  Ensemble ensemble;
  std::vector<GlossEncoder> encoders;

  Matrix encode_and_predict(std::span<const std::string> ids, std::span<const std::string> glosses,
                            bool use_translated, std::size_t* fallbacks = nullptr) const;
};

EnsembleRuntime load_runtime(const RunConfig& cfg, const Manifest& manifest);

// Lookup vocabulary from cfg.index (or every dictionary split), first id wins.
VocabIndex build_lookup_index(const RunConfig& cfg, TargetKind kind);

// --- commands --------------------------------------------------------------

struct TrainOutput {
  std::vector<fs::path> checkpoints;
};
TrainOutput cmd_train(const RunConfig& cfg);

struct SearchOutput {
  SearchResult result;
  fs::path csv;
  fs::path manifest;
};
// With no explicit checkpoints, uses every <encoder>.<target> head under out/heads.
SearchOutput cmd_search(const RunConfig& cfg, TargetKind target, const std::vector<fs::path>& checkpoints = {});

// Direct path: ensemble over a dictionary split's own glosses.
Predictions predict_split(const RunConfig& cfg, const Manifest& manifest, const std::string& split);

struct TranslateOutput {
  Predictions predictions;
  std::optional<EvalReport> report;  // absent when the test split has no gold embeddings
  std::vector<std::string> missing;
  std::size_t fallbacks = 0;
  fs::path predictions_path;
};
// translations: JSONL {"id": test id, "gloss": target-language gloss}.
TranslateOutput cmd_translate_test(const RunConfig& cfg, const fs::path& translations, const Manifest& manifest,
                                   bool allow_partial);

struct EvalOutput {
  EvalReport report;
  nlohmann::json json;
  std::string table;
};
EvalOutput cmd_eval(const fs::path& predictions, const fs::path& reference, TargetKind kind,
                    const std::vector<fs::path>& pool, const std::string& subtask, const std::string& split);

struct AlignOutput {
  fs::path source_head;
  fs::path aligner;
  std::map<std::string, EvalReport> reports;  // mapped split -> metrics
};
AlignOutput cmd_align(const RunConfig& cfg);

}  // namespace revdict
