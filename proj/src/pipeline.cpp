#include "revdict/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "revdict/error.hpp"

namespace revdict {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
    }
  }
}

fs::path existing_path(const json& v, const fs::path& base, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a path string");
  fs::path p = v.get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!fs::exists(p)) throw ConfigError(where + ": path does not exist: " + p.string());
  return p;
}

std::map<std::string, fs::path> split_paths(const json& obj, const fs::path& base, const std::string& where,
                                            std::initializer_list<std::string_view> allowed) {
  check_keys(obj, allowed, where);
  std::map<std::string, fs::path> out;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    out[it.key()] = existing_path(*it, base, where + "." + it.key());
  }
  return out;
}

template <typename T>
T get_as(const json& v, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": wrong type");
  }
}

EncoderSpec parse_encoder(const json& obj, const fs::path& base, const std::string& where) {
  check_keys(obj, {"type", "dim", "seed", "train", "dev", "test", "translated"}, where);
  EncoderSpec spec;
  const std::string type = get_as<std::string>(obj.value("type", json("hashgram")), where + ".type");
  if (type == "hashgram") {
    spec.type = EncoderSpec::Type::kHashgram;
    if (obj.contains("dim")) spec.dim = get_as<std::size_t>(obj["dim"], where + ".dim");
    if (obj.contains("seed")) spec.seed = get_as<std::uint64_t>(obj["seed"], where + ".seed");
    if (spec.dim < 8) throw ConfigError(where + ".dim: hash-gram features need at least 8 dimensions");
    for (const char* k : {"train", "dev", "test", "translated"}) {
      if (obj.contains(k)) throw ConfigError(where + ": '" + k + "' only applies to feature-file encoders");
    }
  } else if (type == "features") {
    spec.type = EncoderSpec::Type::kFeatures;
    if (obj.contains("dim") || obj.contains("seed")) {
      throw ConfigError(where + ": 'dim'/'seed' only apply to hash-gram encoders");
    }
    for (const char* k : {"train", "dev", "test"}) {
      if (obj.contains(k)) spec.splits[k] = existing_path(obj[k], base, where + "." + k);
    }
    if (obj.contains("translated")) spec.translated = existing_path(obj["translated"], base, where + ".translated");
    if (spec.splits.empty()) throw ConfigError(where + ": a feature-file encoder needs at least one split file");
  } else {
    throw ConfigError(where + ".type: expected 'hashgram' or 'features'");
  }
  return spec;
}

std::string join_names(const std::vector<std::string>& names, std::size_t limit) {
  std::string out;
  for (std::size_t i = 0; i < names.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  if (names.size() > limit) out += ", ...";
  return out;
}

fs::path head_path(const RunConfig& cfg, const std::string& encoder, TargetKind target) {
  return cfg.out / "heads" / (encoder + "." + std::string(to_string(target)) + ".head");
}

DictionarySet load_split(const RunConfig& cfg, const std::string& split) {
  auto it = cfg.dictionary.find(split);
  if (it == cfg.dictionary.end()) throw ConfigError("config has no '" + split + "' dictionary");
  return load_dictionary(it->second, cfg.language, split);
}

std::vector<GlossEncoder> make_encoders(const RunConfig& cfg, const std::vector<std::string>& names) {
  std::vector<GlossEncoder> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    auto it = cfg.encoders.find(name);
    if (it == cfg.encoders.end()) throw ConfigError("no encoder named '" + name + "' in the config");
    out.emplace_back(name, it->second, cfg.hashgram_seed);
  }
  return out;
}

void warn_dropped(const std::string& what, std::size_t dropped) {
  if (dropped > 0) std::cerr << "warning: " << what << ": dropped " << dropped << " entries without features or target\n";
}

// Rows of `store` for the given ids.
Matrix rows_for(const FeatureStore& store, std::span<const std::string> ids) {
  Matrix m(ids.size(), store.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Vector* v = store.find(ids[i]);
    if (v == nullptr) throw DataError("no features for id '" + ids[i] + "'");
    std::copy(v->begin(), v->end(), m.row(i).begin());
  }
  return m;
}

DictionarySet mapped_reference(std::span<const MappedEntry> entries, TargetKind kind, const std::string& split,
                               std::vector<std::size_t>& kept) {
  std::vector<DictEntry> out;
  std::set<std::string> seen;
  kept.clear();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& m = entries[i];
    const auto& emb = kind == TargetKind::kElectra ? m.electra : m.sgns;
    if (!emb || !seen.insert(m.target_id).second) continue;
    DictEntry e;
    e.id = m.target_id;
    e.word = m.target_word;
    e.gloss = m.target_gloss;
    (kind == TargetKind::kElectra ? e.electra : e.sgns) = *emb;
    e.link_id = m.source_id;
    out.push_back(std::move(e));
    kept.push_back(i);
  }
  return DictionarySet("mapped", split, std::move(out));
}

}  // namespace

// --- RunConfig ---------------------------------------------------------------

RunConfig RunConfig::parse(const json& doc, const fs::path& base) {
  check_keys(doc, {"language", "dictionary", "index", "encoders", "targets", "d_hidden", "train", "seed",
                   "hashgram_seed", "out", "align", "serve"},
             "config");
  RunConfig cfg;
  if (doc.contains("language")) cfg.language = get_as<std::string>(doc["language"], "language");
  if (!doc.contains("dictionary")) throw ConfigError("config: 'dictionary' is required");
  cfg.dictionary = split_paths(doc["dictionary"], base, "dictionary", {"train", "dev", "test"});
  if (doc.contains("index")) {
    if (!doc["index"].is_array()) throw ConfigError("index: expected a list of dictionary paths");
    for (std::size_t i = 0; i < doc["index"].size(); ++i) {
      cfg.index.push_back(existing_path(doc["index"][i], base, "index[" + std::to_string(i) + "]"));
    }
  }
  if (!doc.contains("encoders") || !doc["encoders"].is_object() || doc["encoders"].empty()) {
    throw ConfigError("config: 'encoders' must name at least one encoder");
  }
  for (auto it = doc["encoders"].begin(); it != doc["encoders"].end(); ++it) {
    if (it.key().empty() || it.key().find_first_of("/\\.") != std::string::npos) {
      throw ConfigError("encoder name '" + it.key() + "' must be non-empty and free of '/', '\\\\' and '.'");
    }
    cfg.encoders[it.key()] = parse_encoder(*it, base, "encoders." + it.key());
  }
  if (doc.contains("targets")) {
    cfg.targets.clear();
    for (const auto& t : doc["targets"]) cfg.targets.push_back(target_kind_from_string(get_as<std::string>(t, "targets")));
    if (cfg.targets.empty()) throw ConfigError("targets: at least one target embedding is required");
  }
  if (doc.contains("d_hidden") && !doc["d_hidden"].is_null()) {
    cfg.d_hidden = get_as<std::size_t>(doc["d_hidden"], "d_hidden");
  }
  if (doc.contains("seed")) cfg.seed = get_as<std::uint64_t>(doc["seed"], "seed");
  if (doc.contains("hashgram_seed")) cfg.hashgram_seed = get_as<std::uint64_t>(doc["hashgram_seed"], "hashgram_seed");
  if (doc.contains("train")) {
    if (doc["train"].contains("seed")) throw ConfigError("train: set the seed at the top level");
    cfg.train = train_config_from_json(doc["train"]);
  }
  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  if (doc.contains("out")) {
    cfg.out = get_as<std::string>(doc["out"], "out");
    if (cfg.out.is_relative()) cfg.out = base / cfg.out;
  } else {
    cfg.out = base / "out";
  }

  if (doc.contains("align")) {
    const json& a = doc["align"];
    check_keys(a, {"source_language", "source_dictionary", "dev_fraction", "source_encoder", "mapped", "target",
                   "source_target", "width", "bottleneck", "reconstruction_weight", "use_gold_source", "train"},
               "align");
    AlignSettings s;
    if (a.contains("source_language")) s.source_language = get_as<std::string>(a["source_language"], "align.source_language");
    if (!a.contains("source_dictionary") || !a.contains("mapped") || !a.contains("source_encoder")) {
      throw ConfigError("align: 'source_dictionary', 'source_encoder' and 'mapped' are required");
    }
    s.source_dictionary = split_paths(a["source_dictionary"], base, "align.source_dictionary", {"train", "dev"});
    if (!s.source_dictionary.count("train")) throw ConfigError("align.source_dictionary: 'train' is required");
    if (a.contains("dev_fraction")) s.dev_fraction = get_as<double>(a["dev_fraction"], "align.dev_fraction");
    s.source_encoder = parse_encoder(a["source_encoder"], base, "align.source_encoder");
    s.mapped = split_paths(a["mapped"], base, "align.mapped", {"train", "dev", "test"});
    if (!s.mapped.count("train") || !s.mapped.count("dev")) throw ConfigError("align.mapped: 'train' and 'dev' are required");
    if (a.contains("target")) s.target = target_kind_from_string(get_as<std::string>(a["target"], "align.target"));
    if (a.contains("source_target")) {
      s.source_target = target_kind_from_string(get_as<std::string>(a["source_target"], "align.source_target"));
    }
    if (a.contains("width")) s.width = get_as<std::size_t>(a["width"], "align.width");
    if (a.contains("bottleneck")) s.bottleneck = get_as<std::size_t>(a["bottleneck"], "align.bottleneck");
    if (a.contains("reconstruction_weight")) {
      s.reconstruction_weight = get_as<double>(a["reconstruction_weight"], "align.reconstruction_weight");
    }
    if (a.contains("use_gold_source")) s.use_gold_source = get_as<bool>(a["use_gold_source"], "align.use_gold_source");
    if (a.contains("train")) {
      if (a["train"].contains("seed")) throw ConfigError("align.train: set the seed at the top level");
      s.train = train_config_from_json(a["train"]);
    }
    s.train.seed = cfg.seed;
    s.train.validate();
    cfg.align = std::move(s);
  }

  if (doc.contains("serve")) {
    const json& sv = doc["serve"];
    check_keys(sv, {"host", "port", "static_dir", "index_cache"}, "serve");
    if (sv.contains("host")) cfg.serve.host = get_as<std::string>(sv["host"], "serve.host");
    if (sv.contains("port")) cfg.serve.port = get_as<int>(sv["port"], "serve.port");
    if (sv.contains("static_dir")) cfg.serve.static_dir = existing_path(sv["static_dir"], base, "serve.static_dir");
    if (sv.contains("index_cache")) {
      fs::path p = get_as<std::string>(sv["index_cache"], "serve.index_cache");
      cfg.serve.index_cache = p.is_relative() ? base / p : p;
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

// --- GlossEncoder ------------------------------------------------------------

GlossEncoder::GlossEncoder(std::string name, EncoderSpec spec, std::uint64_t fallback_seed)
    : name_(std::move(name)), spec_(std::move(spec)), fallback_seed_(fallback_seed) {
  if (spec_.type == EncoderSpec::Type::kHashgram) {
    dim_ = spec_.dim;
    return;
  }
  for (const auto& [split, path] : spec_.splits) {
    FeatureStore store = load_features(path);
    if (store.size() == 0) throw DataError(path.string() + ": empty feature file");
    if (dim_ == 0) dim_ = store.dim();
    if (store.dim() != dim_) throw DataError(path.string() + ": feature dimension differs from the encoder's other files");
    stores_.emplace(split, std::move(store));
  }
  if (spec_.translated) {
    translated_ = load_features(*spec_.translated);
    if (translated_->size() > 0 && translated_->dim() != dim_) {
      throw DataError(spec_.translated->string() + ": feature dimension differs from the encoder's other files");
    }
  }
}

FeatureStore GlossEncoder::store_for(const std::string& split, const DictionarySet& set) const {
  if (!uses_features()) return hashgram_store(set, spec_.dim, spec_.seed);
  FeatureStore out(dim_);
  auto preferred = stores_.find(split);
  for (const auto& e : set.entries()) {
    const Vector* v = preferred != stores_.end() ? preferred->second.find(e.id) : nullptr;
    for (auto it = stores_.begin(); v == nullptr && it != stores_.end(); ++it) v = it->second.find(e.id);
    if (v != nullptr) out.add(e.id, *v);
  }
  return out;
}

void GlossEncoder::index_glosses(const std::string& split, const DictionarySet& set) {
  if (!uses_features()) return;
  for (const auto& e : set.entries()) {
    GlossRef ref{split, e.id};
    if (features_of(ref) == nullptr) continue;
    by_gloss_.try_emplace(e.gloss, ref);
    by_id_[e.id].emplace_back(e.gloss, ref);
  }
}

const Vector* GlossEncoder::features_of(const GlossRef& ref) const {
  auto it = stores_.find(ref.split);
  if (it != stores_.end()) {
    if (const Vector* v = it->second.find(ref.id)) return v;
  }
  for (const auto& [split, store] : stores_) {
    if (const Vector* v = store.find(ref.id)) return v;
  }
  return nullptr;
}

bool GlossEncoder::resolve(std::string_view id, std::string_view gloss, bool use_translated,
                           std::span<double> out) const {
  if (out.size() != dim_) throw DimensionError("encoder output buffer has the wrong width");
  const Vector* found = nullptr;
  if (uses_features()) {
    if (use_translated && translated_) found = translated_->find(id);
    if (found == nullptr) {
      auto it = by_id_.find(id);
      if (it != by_id_.end()) {
        for (const auto& [g, ref] : it->second) {
          if (g == gloss) {
            found = features_of(ref);
            break;
          }
        }
      }
    }
    if (found == nullptr) {
      auto it = by_gloss_.find(gloss);
      if (it != by_gloss_.end()) found = features_of(it->second);
    }
  } else {
    const Vector v = hashgram_encode(gloss, spec_.dim, spec_.seed);
    std::copy(v.begin(), v.end(), out.begin());
    return false;
  }
  if (found != nullptr) {
    std::copy(found->begin(), found->end(), out.begin());
    return false;
  }
  const Vector v = hashgram_encode(gloss, dim_, fallback_seed_);
  std::copy(v.begin(), v.end(), out.begin());
  return true;
}

// --- manifests and prediction files -------------------------------------------

json Manifest::to_json(const fs::path& relative_to) const {
  json members_json = json::array();
  for (const auto& m : members) {
    members_json.push_back({{"name", m.name}, {"checkpoint", fs::relative(m.checkpoint, relative_to).generic_string()}});
  }
  return {{"target", revdict::to_string(target)}, {"members", members_json}, {"dev_cosine", dev_cosine}};
}

Manifest Manifest::load(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  Manifest m;
  try {
    m.target = target_kind_from_string(doc.at("target").get<std::string>());
    m.dev_cosine = doc.value("dev_cosine", 0.0);
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    for (const auto& mem : doc.at("members")) {
      fs::path ckpt = mem.at("checkpoint").get<std::string>();
      if (ckpt.is_relative()) ckpt = base / ckpt;
      m.members.push_back({mem.at("name").get<std::string>(), ckpt});
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed ensemble manifest: " + e.what());
  }
  if (m.members.empty()) throw DataError(path.string() + ": ensemble manifest lists no members");
  return m;
}

void write_predictions(const Predictions& p, const fs::path& path) {
  std::string out;
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    auto row = p.embeddings.row(i);
    json obj = {{"id", p.ids[i]}, {"embedding", Vector(row.begin(), row.end())}};
    out += obj.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

Predictions load_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file " + path.string());
  std::vector<Vector> rows;
  Predictions p;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      throw DataError(where + ": malformed prediction line");
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("embedding") ||
        !obj["embedding"].is_array()) {
      throw DataError(where + ": expected {\"id\": string, \"embedding\": [numbers]}");
    }
    Vector v;
    for (const auto& x : obj["embedding"]) {
      if (!x.is_number()) throw DataError(where + ": non-numeric embedding element");
      v.push_back(x.get<double>());
    }
    if (!rows.empty() && v.size() != rows.front().size()) throw DataError(where + ": embedding dimension changes");
    if (v.empty() || !all_finite(v)) throw DataError(where + ": empty or non-finite embedding");
    auto id = obj["id"].get<std::string>();
    if (!seen.insert(id).second) throw DataError(where + ": duplicate id '" + id + "'");
    p.ids.push_back(std::move(id));
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw DataError(path.string() + ": no predictions");
  p.embeddings = Matrix::from_rows(rows);
  return p;
}

// --- runtime -------------------------------------------------------------------

Matrix EnsembleRuntime::encode_and_predict(std::span<const std::string> ids, std::span<const std::string> glosses,
                                           bool use_translated, std::size_t* fallbacks) const {
  if (ids.size() != glosses.size()) throw DimensionError("one id per gloss is required");
  if (ids.empty()) throw DataError("nothing to predict");
  std::vector<Matrix> feats;
  feats.reserve(encoders.size());
  std::size_t fell_back = 0;
  for (const auto& enc : encoders) {
    Matrix m(ids.size(), enc.dim());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (enc.resolve(ids[i], glosses[i], use_translated, m.row(i))) ++fell_back;
    }
    feats.push_back(std::move(m));
  }
  if (fallbacks) *fallbacks = fell_back;
  return ensemble.predict(feats);
}

EnsembleRuntime load_runtime(const RunConfig& cfg, const Manifest& manifest) {
  std::vector<EnsembleMember> members;
  for (const auto& m : manifest.members) {
    TrainedHead head = load_head(m.checkpoint);
    if (head.head.target != manifest.target) {
      throw DataError(m.checkpoint.string() + ": head predicts " + std::string(to_string(head.head.target)) +
                      " but the manifest is for " + std::string(to_string(manifest.target)));
    }
    members.push_back({m.name, std::move(head)});
  }
  Ensemble ensemble(std::move(members));
  std::vector<std::string> names;
  for (const auto& m : ensemble.members()) names.push_back(m.head.head.encoder_id);
  std::vector<GlossEncoder> encoders = make_encoders(cfg, names);
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    if (encoders[i].dim() != ensemble.members()[i].head.head.d_enc()) {
      throw DimensionError("encoder '" + names[i] + "' produces " + std::to_string(encoders[i].dim()) +
                           " features but its head expects " + std::to_string(ensemble.members()[i].head.head.d_enc()));
    }
  }
  for (const auto& [split, path] : cfg.dictionary) {
    const DictionarySet set = load_dictionary(path, cfg.language, split);
    for (auto& enc : encoders) enc.index_glosses(split, set);
  }
  return {std::move(ensemble), std::move(encoders)};
}

VocabIndex build_lookup_index(const RunConfig& cfg, TargetKind kind) {
  std::vector<fs::path> sources = cfg.index;
  if (sources.empty()) {
    for (const auto& [split, path] : cfg.dictionary) sources.push_back(path);
  }
  std::vector<std::string> ids;
  std::vector<std::string> words;
  std::vector<Vector> rows;
  std::set<std::string> seen;
  for (const auto& path : sources) {
    const DictionarySet set = load_dictionary(path, cfg.language, "index");
    for (const auto& e : set.entries()) {
      const auto& emb = e.embedding(kind);
      if (!emb || !seen.insert(e.id).second) continue;
      ids.push_back(e.id);
      words.push_back(e.word);
      rows.push_back(*emb);
    }
  }
  if (rows.empty()) throw DataError("no " + std::string(to_string(kind)) + " embeddings available for the lookup index");
  return VocabIndex::build(std::move(ids), std::move(words), Matrix::from_rows(rows), kind);
}

// --- commands --------------------------------------------------------------------

TrainOutput cmd_train(const RunConfig& cfg) {
  const DictionarySet train = load_split(cfg, "train");
  const DictionarySet dev = load_split(cfg, "dev");
  TrainOutput out;
  for (const auto& [name, spec] : cfg.encoders) {
    const GlossEncoder enc(name, spec, cfg.hashgram_seed);
    const FeatureStore train_store = enc.store_for("train", train);
    const FeatureStore dev_store = enc.store_for("dev", dev);
    for (TargetKind target : cfg.targets) {
      const std::string tag = name + "." + std::string(to_string(target));
      const SupervisedSet train_set = join(train, train_store, target);
      const SupervisedSet dev_set = join(dev, dev_store, target);
      warn_dropped(tag + " train", train_set.dropped);
      warn_dropped(tag + " dev", dev_set.dropped);
      TrainedHead head = train_head(train_set, dev_set, cfg.train, {cfg.d_hidden, target, name});
      const fs::path path = head_path(cfg, name, target);
      save_head(head, path);
      json history = {{"encoder", name},
                      {"target", to_string(target)},
                      {"train_size", train_set.size()},
                      {"dev_size", dev_set.size()},
                      {"dropped_train", train_set.dropped},
                      {"dropped_dev", dev_set.dropped},
                      {"best_epoch", head.best_epoch},
                      {"best_dev_cosine", head.best_dev_cosine},
                      {"steps", head.steps},
                      {"history", to_json(head.history)}};
      write_text_file(cfg.out / "heads" / (tag + ".history.json"), history.dump(2) + "\n");
      std::cerr << tag << ": best dev cosine " << head.best_dev_cosine << " at epoch " << head.best_epoch << "\n";
      out.checkpoints.push_back(path);
    }
  }
  return out;
}

SearchOutput cmd_search(const RunConfig& cfg, TargetKind target, const std::vector<fs::path>& checkpoints) {
  std::vector<fs::path> paths = checkpoints;
  if (paths.empty()) {
    for (const auto& [name, spec] : cfg.encoders) {
      const fs::path p = head_path(cfg, name, target);
      if (!fs::exists(p)) throw DataError("missing checkpoint " + p.string() + " (run train first)");
      paths.push_back(p);
    }
  }
  if (paths.empty()) throw DataError("ensemble search needs at least one checkpoint");

  std::vector<TrainedHead> heads;
  std::vector<std::string> names;
  for (const auto& p : paths) {
    heads.push_back(load_head(p));
    if (heads.back().head.target != target) {
      throw DataError("mixed target kinds: " + p.string() + " predicts " +
                      std::string(to_string(heads.back().head.target)) + ", search is for " +
                      std::string(to_string(target)));
    }
    names.push_back(heads.back().head.encoder_id);
  }

  const DictionarySet dev = load_split(cfg, "dev");
  const std::vector<GlossEncoder> encoders = make_encoders(cfg, names);
  std::vector<FeatureStore> stores;
  for (const auto& enc : encoders) stores.push_back(enc.store_for("dev", dev));

  std::vector<std::string> ids;
  for (const auto& e : dev.entries()) {
    if (!e.embedding(target)) continue;
    const bool covered = std::all_of(stores.begin(), stores.end(), [&](const auto& s) { return s.find(e.id); });
    if (covered) ids.push_back(e.id);
  }
  if (ids.empty()) throw DataError("no dev entries are covered by every member's features");

  const VocabIndex pool = VocabIndex::build(dev, target);
  SearchInputs in;
  in.names = names;
  for (std::size_t i = 0; i < heads.size(); ++i) in.predictions.push_back(predict(heads[i].head, rows_for(stores[i], ids)));
  in.targets = Matrix(ids.size(), dev.embedding_dim(target));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& t = *dev.find(ids[i])->embedding(target);
    std::copy(t.begin(), t.end(), in.targets.row(i).begin());
    in.target_pool_indices.push_back(*pool.position(ids[i]));
  }
  in.pool = pool.unit_rows();

  SearchOutput out;
  out.result = subset_search(in);
  const std::string kind(to_string(target));
  out.csv = cfg.out / ("search." + kind + ".csv");
  out.manifest = cfg.out / ("ensemble." + kind + ".json");
  write_text_file(out.csv, search_to_csv(out.result));

  Manifest manifest;
  manifest.target = target;
  manifest.dev_cosine = out.result.winner().report.cosine;
  for (const auto& name : out.result.winner().members) {
    const auto it = std::find(names.begin(), names.end(), name);
    manifest.members.push_back({name, fs::absolute(paths[static_cast<std::size_t>(it - names.begin())])});
  }
  write_text_file(out.manifest, manifest.to_json(fs::absolute(cfg.out)).dump(2) + "\n");
  return out;
}

Predictions predict_split(const RunConfig& cfg, const Manifest& manifest, const std::string& split) {
  const DictionarySet set = load_split(cfg, split);
  const EnsembleRuntime runtime = load_runtime(cfg, manifest);
  Predictions p;
  std::vector<std::string> glosses;
  for (const auto& e : set.entries()) {
    p.ids.push_back(e.id);
    glosses.push_back(e.gloss);
  }
  std::size_t fallbacks = 0;
  p.embeddings = runtime.encode_and_predict(p.ids, glosses, false, &fallbacks);
  if (fallbacks > 0) std::cerr << "warning: " << fallbacks << " glosses used hash-gram fallback features\n";
  return p;
}

namespace {

std::map<std::string, std::string> load_translations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open translations file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      throw DataError(where + ": malformed translation line");
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("gloss") ||
        !obj["gloss"].is_string()) {
      throw DataError(where + ": expected {\"id\": string, \"gloss\": string}");
    }
    if (!out.emplace(obj["id"].get<std::string>(), obj["gloss"].get<std::string>()).second) {
      throw DataError(where + ": duplicate id");
    }
  }
  return out;
}

bool has_all_targets(const DictionarySet& set, std::span<const std::string> ids, TargetKind kind) {
  return std::all_of(ids.begin(), ids.end(), [&](const std::string& id) {
    const DictEntry* e = set.find(id);
    return e != nullptr && e->embedding(kind).has_value();
  });
}

}  // namespace

TranslateOutput cmd_translate_test(const RunConfig& cfg, const fs::path& translations, const Manifest& manifest,
                                   bool allow_partial) {
  const DictionarySet test = load_split(cfg, "test");
  const auto translated = load_translations(translations);
  TranslateOutput out;
  std::vector<std::string> glosses;
  for (const auto& e : test.entries()) {
    auto it = translated.find(e.id);
    if (it == translated.end()) {
      out.missing.push_back(e.id);
      continue;
    }
    out.predictions.ids.push_back(e.id);
    glosses.push_back(it->second);
  }
  if (!out.missing.empty()) {
    if (!allow_partial) {
      throw DataError(std::to_string(out.missing.size()) + " test ids have no translation: " +
                      join_names(out.missing, 20) + " (use --allow-partial to skip them)");
    }
    std::cerr << "warning: skipping " << out.missing.size() << " test ids without a translation\n";
  }
  const EnsembleRuntime runtime = load_runtime(cfg, manifest);
  out.predictions.embeddings = runtime.encode_and_predict(out.predictions.ids, glosses, true, &out.fallbacks);
  if (out.fallbacks > 0) std::cerr << "warning: " << out.fallbacks << " glosses used hash-gram fallback features\n";
  out.predictions_path = cfg.out / ("translate-test." + std::string(to_string(manifest.target)) + ".predictions.jsonl");
  write_predictions(out.predictions, out.predictions_path);
  if (has_all_targets(test, out.predictions.ids, manifest.target)) {
    const VocabIndex index = VocabIndex::build(test, manifest.target);
    out.report = evaluate_against(out.predictions.embeddings, out.predictions.ids, test, index);
  }
  return out;
}

EvalOutput cmd_eval(const fs::path& predictions, const fs::path& reference, TargetKind kind,
                    const std::vector<fs::path>& pool, const std::string& subtask, const std::string& split) {
  const Predictions preds = load_predictions(predictions);
  const DictionarySet ref = load_dictionary(reference, "", split);
  VocabIndex index;
  if (pool.empty()) {
    index = VocabIndex::build(ref, kind);
  } else {
    std::vector<std::string> ids;
    std::vector<std::string> words;
    std::vector<Vector> rows;
    std::set<std::string> seen;
    for (const auto& p : pool) {
      const DictionarySet set = load_dictionary(p, "", "pool");
      for (const auto& e : set.entries()) {
        if (!e.embedding(kind) || !seen.insert(e.id).second) continue;
        ids.push_back(e.id);
        words.push_back(e.word);
        rows.push_back(*e.embedding(kind));
      }
    }
    if (rows.empty()) throw DataError("evaluation pool holds no " + std::string(to_string(kind)) + " embeddings");
    index = VocabIndex::build(std::move(ids), std::move(words), Matrix::from_rows(rows), kind);
  }
  EvalOutput out;
  out.report = evaluate_against(preds.embeddings, preds.ids, ref, index);
  out.json = report_to_json(out.report, subtask, std::string(to_string(kind)), split);
  ReportPair pair;
  (split == "test" ? pair.test : pair.dev) = out.report;
  out.table = format_report({{{subtask, std::string(to_string(kind))}, pair}});
  return out;
}

AlignOutput cmd_align(const RunConfig& cfg) {
  if (!cfg.align) throw ConfigError("config has no 'align' section");
  const AlignSettings& a = *cfg.align;
  const fs::path dir = cfg.out / "align";

  DictionarySet src_train = load_dictionary(a.source_dictionary.at("train"), a.source_language, "train");
  DictionarySet src_dev;
  if (a.source_dictionary.count("dev")) {
    src_dev = load_dictionary(a.source_dictionary.at("dev"), a.source_language, "dev");
  } else {
    auto parts = split_set(src_train, a.dev_fraction, cfg.seed);
    src_train = std::move(parts.first);
    src_dev = std::move(parts.second);
  }

  GlossEncoder enc("source", a.source_encoder, cfg.hashgram_seed);
  const SupervisedSet head_train = join(src_train, enc.store_for("train", src_train), a.source_target);
  const SupervisedSet head_dev = join(src_dev, enc.store_for("dev", src_dev), a.source_target);
  warn_dropped("source head train", head_train.dropped);
  warn_dropped("source head dev", head_dev.dropped);
  TrainedHead head = train_head(head_train, head_dev, cfg.train, {cfg.d_hidden, a.source_target, "source"});
  AlignOutput out;
  out.source_head = dir / ("source." + std::string(to_string(a.source_target)) + ".head");
  save_head(head, out.source_head);
  std::cerr << "source head: best dev cosine " << head.best_dev_cosine << " at epoch " << head.best_epoch << "\n";
  enc.index_glosses("train", src_train);
  enc.index_glosses("dev", src_dev);

  // Source-space rows for mapped entries: head predictions on the source
  // glosses, or gold source embeddings when requested.
  auto source_rows = [&](std::span<const MappedEntry> entries, std::vector<MappedEntry>& kept) {
    kept.clear();
    std::vector<Vector> rows;
    std::size_t fallbacks = 0;
    Matrix feats(entries.size(), enc.dim());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& m = entries[i];
      if (a.use_gold_source) {
        const DictEntry* e = src_train.find(m.source_id);
        if (e == nullptr) e = src_dev.find(m.source_id);
        if (e == nullptr || !e->embedding(a.source_target)) continue;
        rows.push_back(*e->embedding(a.source_target));
        kept.push_back(m);
      } else {
        if (enc.resolve(m.source_id, m.source_gloss, false, feats.row(idx.size()))) ++fallbacks;
        idx.push_back(i);
        kept.push_back(m);
      }
    }
    if (fallbacks > 0) std::cerr << "warning: " << fallbacks << " mapped glosses used hash-gram fallback features\n";
    if (a.use_gold_source) {
      if (rows.empty()) throw DataError("no mapped entry has a gold source embedding");
      return Matrix::from_rows(rows);
    }
    if (idx.empty()) throw DataError("mapped dictionary is empty");
    Matrix used(idx.size(), enc.dim());
    for (std::size_t r = 0; r < idx.size(); ++r) std::copy(feats.row(r).begin(), feats.row(r).end(), used.row(r).begin());
    return predict(head.head, used);
  };

  std::map<std::string, std::vector<MappedEntry>> mapped;
  for (const auto& [split, path] : a.mapped) mapped[split] = load_mapped(path);

  std::vector<MappedEntry> kept_train;
  std::vector<MappedEntry> kept_dev;
  const Matrix train_src = source_rows(mapped.at("train"), kept_train);
  const Matrix dev_src = source_rows(mapped.at("dev"), kept_dev);
  const auto pairs_train = assemble_pairs(kept_train, a.target, train_src);
  const auto pairs_dev = assemble_pairs(kept_dev, a.target, dev_src);
  if (pairs_train.empty() || pairs_dev.empty()) {
    throw DataError("mapped dictionary has no " + std::string(to_string(a.target)) + " target embeddings");
  }

  TrainedAligner aligner = train_aligner(pairs_train, pairs_dev, a.train,
                                         {{0, a.width, a.bottleneck, 0}, a.reconstruction_weight});
  out.aligner = dir / ("aligner." + std::string(to_string(a.target)) + ".ckpt");
  save_aligner(aligner, out.aligner);
  std::cerr << "aligner: best dev cosine " << aligner.best_dev_cosine << " at epoch " << aligner.best_epoch << "\n";

  json reports = json::array();
  for (const auto& [split, entries] : mapped) {
    if (split == "train") continue;
    std::vector<MappedEntry> kept;
    const Matrix src = source_rows(entries, kept);
    std::vector<std::size_t> ref_rows;
    const DictionarySet ref = mapped_reference(kept, a.target, split, ref_rows);
    if (ref.size() == 0) continue;
    Predictions p;
    const Matrix all = align_forward(aligner.aligner, src);
    p.embeddings = all.gather_rows(ref_rows);
    for (const auto& e : ref.entries()) p.ids.push_back(e.id);
    write_predictions(p, dir / (split + "." + std::string(to_string(a.target)) + ".predictions.jsonl"));
    const VocabIndex index = VocabIndex::build(ref, a.target);
    out.reports[split] = evaluate_against(p.embeddings, p.ids, ref, index);
    reports.push_back(report_to_json(out.reports[split], "Subtask 2", std::string(to_string(a.target)), split));
  }
  write_text_file(dir / ("report." + std::string(to_string(a.target)) + ".json"), reports.dump(2) + "\n");
  return out;
}

}  // namespace revdict
