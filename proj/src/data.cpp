#include "revdict/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "revdict/error.hpp"
#include "revdict/random.hpp"

namespace revdict {

using nlohmann::json;

namespace {

std::string record_context(std::size_t index, std::string_view field) {
  return "record " + std::to_string(index) + ", field \"" + std::string(field) + "\"";
}

std::optional<std::string> optional_string(const json& obj, std::string_view key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(record_context(index, key) + ": expected a string");
  return it->get<std::string>();
}

std::optional<Vector> optional_vector(const json& obj, std::string_view key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw DataError(record_context(index, key) + ": expected a number array");
  Vector v;
  v.reserve(it->size());
  for (const auto& x : *it) {
    if (!x.is_number()) throw DataError(record_context(index, key) + ": non-numeric element");
    v.push_back(x.get<double>());
  }
  if (!all_finite(v)) throw DataError(record_context(index, key) + ": non-finite element");
  return v;
}

std::string required_string(const json& obj, std::string_view key, std::size_t index) {
  auto v = optional_string(obj, key, index);
  if (!v || v->empty()) throw DataError(record_context(index, key) + ": missing or empty");
  return *v;
}

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

// Byte offsets where UTF-8 code points start, plus the end offset. Stray
// continuation bytes count as their own unit.
std::vector<std::size_t> codepoint_starts(std::string_view s) {
  std::vector<std::size_t> starts;
  std::size_t i = 0;
  while (i < s.size()) {
    starts.push_back(i);
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    std::size_t j = i + 1;
    while (j < s.size() && j < i + len && (static_cast<unsigned char>(s[j]) & 0xC0) == 0x80) ++j;
    i = j;
  }
  starts.push_back(s.size());
  return starts;
}

}  // namespace

std::string_view to_string(TargetKind k) { return k == TargetKind::kElectra ? "electra" : "sgns"; }

TargetKind target_kind_from_string(std::string_view name) {
  if (name == "electra") return TargetKind::kElectra;
  if (name == "sgns") return TargetKind::kSgns;
  throw ConfigError("unknown target embedding '" + std::string(name) + "' (electra|sgns)");
}

DictionarySet::DictionarySet(std::string language, std::string split, std::vector<DictEntry> entries)
    : language_(std::move(language)), split_(std::move(split)), entries_(std::move(entries)) {
  index_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.id.empty()) throw DataError(record_context(i, "id") + ": missing or empty");
    if (!index_.emplace(e.id, i).second) throw DataError("duplicate id '" + e.id + "' at record " + std::to_string(i));
    auto check_dim = [&](const std::optional<Vector>& v, std::size_t& dim, std::string_view key) {
      if (!v) return;
      if (v->empty()) throw DataError(record_context(i, key) + ": empty embedding");
      if (dim == 0) dim = v->size();
      if (v->size() != dim) {
        throw DataError(record_context(i, key) + ": dimension " + std::to_string(v->size()) +
                        " differs from " + std::to_string(dim));
      }
    };
    check_dim(e.electra, electra_dim_, "electra");
    check_dim(e.sgns, sgns_dim_, "sgns");
  }
}

const DictEntry* DictionarySet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::size_t DictionarySet::embedding_dim(TargetKind k) const {
  return k == TargetKind::kElectra ? electra_dim_ : sgns_dim_;
}

DictionarySet parse_dictionary(std::string_view json_text, std::string language, std::string split) {
  const json doc = parse_json(json_text, "dictionary");
  if (!doc.is_array()) throw DataError("dictionary: top level must be a JSON array");
  std::vector<DictEntry> entries;
  entries.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& obj = doc[i];
    if (!obj.is_object()) throw DataError("record " + std::to_string(i) + ": expected an object");
    DictEntry e;
    e.id = required_string(obj, "id", i);
    e.word = optional_string(obj, "word", i).value_or("");
    e.gloss = optional_string(obj, "gloss", i).value_or("");
    e.pos = optional_string(obj, "pos", i);
    e.electra = optional_vector(obj, "electra", i);
    e.sgns = optional_vector(obj, "sgns", i);
    e.link_id = optional_string(obj, "enId", i);
    entries.push_back(std::move(e));
  }
  return DictionarySet(std::move(language), std::move(split), std::move(entries));
}

DictionarySet load_dictionary(const std::filesystem::path& path, std::string language, std::string split) {
  try {
    return parse_dictionary(read_text_file(path), std::move(language), std::move(split));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dictionary(const DictionarySet& set, const std::filesystem::path& path) {
  json doc = json::array();
  for (const auto& e : set.entries()) {
    json obj;
    obj["id"] = e.id;
    obj["word"] = e.word;
    obj["gloss"] = e.gloss;
    if (e.pos) obj["pos"] = *e.pos;
    if (e.electra) obj["electra"] = *e.electra;
    if (e.sgns) obj["sgns"] = *e.sgns;
    if (e.link_id) obj["enId"] = *e.link_id;
    doc.push_back(std::move(obj));
  }
  write_text_file(path, doc.dump() + "\n");
}

std::pair<DictionarySet, DictionarySet> split_set(const DictionarySet& set, double dev_fraction,
                                                   std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ConfigError("dev_fraction must lie in (0, 1)");
  const std::size_t n = set.size();
  const auto n_dev = static_cast<std::size_t>(std::llround(static_cast<double>(n) * dev_fraction));
  if (n_dev == 0 || n_dev >= n) {
    throw DataError("splitting " + std::to_string(n) + " entries at fraction " +
                    std::to_string(dev_fraction) + " leaves an empty part");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_dev));
  std::vector<std::size_t> dev_idx(order.end() - static_cast<std::ptrdiff_t>(n_dev), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(dev_idx.begin(), dev_idx.end());
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<DictEntry> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(set.entries()[i]);
    return out;
  };
  return {DictionarySet(set.language(), "train", pick(train_idx)),
          DictionarySet(set.language(), "dev", pick(dev_idx))};
}

void FeatureStore::add(std::string id, Vector features) {
  if (id.empty()) throw DataError("feature record with an empty id");
  if (dim_ == 0) dim_ = features.size();
  if (features.size() != dim_ || dim_ == 0) {
    throw DataError("feature record '" + id + "' has dimension " + std::to_string(features.size()) +
                    ", store dimension is " + std::to_string(dim_));
  }
  if (!all_finite(features)) throw DataError("feature record '" + id + "' has non-finite values");
  if (!index_.emplace(id, rows_.size()).second) throw DataError("duplicate feature id '" + id + "'");
  ids_.push_back(std::move(id));
  rows_.push_back(std::move(features));
}

const Vector* FeatureStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &rows_[it->second];
}

FeatureStore load_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  FeatureStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(where + ": expected an object");
    try {
      auto id = required_string(obj, "id", line_no - 1);
      auto feats = optional_vector(obj, "features", line_no - 1);
      if (!feats) throw DataError("missing \"features\"");
      store.add(std::move(id), std::move(*feats));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return store;
}

void write_features(const FeatureStore& store, const std::filesystem::path& path) {
  std::string out;
  for (const auto& id : store.ids()) {
    json obj;
    obj["id"] = id;
    obj["features"] = *store.find(id);
    out += obj.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

Vector hashgram_encode(std::string_view gloss, std::size_t d_enc, std::uint64_t seed) {
  if (d_enc < 8) throw DimensionError("hash-gram encoder needs d_enc >= 8");
  Vector out(d_enc, 0.0);
  const std::string text = collapse_whitespace(gloss);
  if (text.empty()) return out;
  const std::string framed = "<" + text + ">";
  const auto starts = codepoint_starts(framed);
  const std::size_t units = starts.size() - 1;
  for (std::size_t n = 2; n <= 4; ++n) {
    for (std::size_t i = 0; i + n <= units; ++i) {
      const std::string_view gram(framed.data() + starts[i], starts[i + n] - starts[i]);
      const std::uint64_t h = hash_bytes(gram, seed);
      const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
      out[h % d_enc] += sign;
    }
  }
  const double norm = l2_norm(out);
  if (norm > 0.0) {
    for (double& v : out) v /= norm;
  }
  return out;
}

FeatureStore hashgram_store(const DictionarySet& set, std::size_t d_enc, std::uint64_t seed) {
  FeatureStore store(d_enc);
  for (const auto& e : set.entries()) store.add(e.id, hashgram_encode(e.gloss, d_enc, seed));
  return store;
}

SupervisedSet join(const DictionarySet& set, const FeatureStore& store, TargetKind target) {
  std::vector<const Vector*> feats;
  std::vector<const Vector*> targets;
  SupervisedSet out;
  for (const auto& e : set.entries()) {
    const Vector* f = store.find(e.id);
    const auto& t = e.embedding(target);
    if (f == nullptr || !t) {
      ++out.dropped;
      continue;
    }
    feats.push_back(f);
    targets.push_back(&*t);
    out.ids.push_back(e.id);
  }
  if (out.ids.empty()) {
    throw DataError("joining " + set.language() + "/" + set.split() + " with features for target " +
                    std::string(to_string(target)) + " left no examples");
  }
  out.features = Matrix(feats.size(), store.dim());
  out.targets = Matrix(targets.size(), targets.front()->size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    std::copy(feats[i]->begin(), feats[i]->end(), out.features.row(i).begin());
    std::copy(targets[i]->begin(), targets[i]->end(), out.targets.row(i).begin());
  }
  return out;
}

std::vector<MappedEntry> parse_mapped(std::string_view json_text) {
  const json doc = parse_json(json_text, "mapped dictionary");
  if (!doc.is_array()) throw DataError("mapped dictionary: top level must be a JSON array");
  std::vector<MappedEntry> out;
  out.reserve(doc.size());
  std::size_t electra_dim = 0;
  std::size_t sgns_dim = 0;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& obj = doc[i];
    if (!obj.is_object()) throw DataError("record " + std::to_string(i) + ": expected an object");
    MappedEntry e;
    e.target_id = required_string(obj, "arId", i);
    e.source_id = required_string(obj, "enId", i);
    e.target_word = optional_string(obj, "arWord", i).value_or("");
    e.source_word = optional_string(obj, "enWord", i).value_or("");
    e.target_gloss = optional_string(obj, "arGloss", i).value_or("");
    e.source_gloss = optional_string(obj, "enGloss", i).value_or("");
    e.electra = optional_vector(obj, "electra", i);
    e.sgns = optional_vector(obj, "sgns", i);
    auto check = [&](const std::optional<Vector>& v, std::size_t& dim, std::string_view key) {
      if (!v) return;
      if (dim == 0) dim = v->size();
      if (v->size() != dim) throw DataError(record_context(i, key) + ": inconsistent dimension");
    };
    check(e.electra, electra_dim, "electra");
    check(e.sgns, sgns_dim, "sgns");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<MappedEntry> load_mapped(const std::filesystem::path& path) {
  try {
    return parse_mapped(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace revdict
