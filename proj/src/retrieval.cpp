#include "revdict/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "revdict/container.hpp"
#include "revdict/error.hpp"

namespace revdict {

namespace {

constexpr std::size_t kQueryChunk = 64;

}  // namespace

VocabIndex VocabIndex::build(const DictionarySet& entries, TargetKind kind) {
  std::vector<std::string> ids;
  std::vector<std::string> words;
  std::vector<Vector> rows;
  for (const auto& e : entries.entries()) {
    const auto& emb = e.embedding(kind);
    if (!emb) continue;
    ids.push_back(e.id);
    words.push_back(e.word);
    rows.push_back(*emb);
  }
  if (rows.empty()) {
    throw DataError("no " + std::string(to_string(kind)) + " embeddings to index in " + entries.language() + "/" +
                    entries.split());
  }
  return build(std::move(ids), std::move(words), Matrix::from_rows(rows), kind);
}

VocabIndex VocabIndex::build(std::vector<std::string> ids, std::vector<std::string> words, const Matrix& embeddings,
                             TargetKind kind) {
  if (ids.size() != embeddings.rows() || words.size() != ids.size()) {
    throw DimensionError("vocabulary and embedding row counts differ");
  }
  if (ids.empty()) throw DataError("cannot index an empty vocabulary");
  VocabIndex index;
  index.kind_ = kind;
  index.ids_ = std::move(ids);
  index.words_ = std::move(words);
  index.unit_ = normalize_rows(embeddings);
  index.finish();
  return index;
}

void VocabIndex::finish() {
  by_id_.clear();
  by_id_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!by_id_.emplace(ids_[i], i).second) throw DataError("duplicate vocabulary id '" + ids_[i] + "'");
  }
  zero_.assign(ids_.size(), 0);
  for (std::size_t r = 0; r < unit_.rows(); ++r) {
    auto row = unit_.row(r);
    zero_[r] = std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; }) ? 1 : 0;
  }
  std::vector<std::size_t> sorted(ids_.size());
  std::iota(sorted.begin(), sorted.end(), std::size_t{0});
  std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
  id_rank_.assign(ids_.size(), 0);
  for (std::size_t r = 0; r < sorted.size(); ++r) id_rank_[sorted[r]] = r;
  unit_t_ = unit_.transposed();
}

std::optional<std::size_t> VocabIndex::position(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::vector<std::size_t>> VocabIndex::batch_top_k(const Matrix& queries, std::size_t k) const {
  if (k == 0) throw DimensionError("k must be at least 1");
  if (queries.rows() == 0) return {};
  if (queries.cols() != dim()) {
    throw DimensionError("query dimension " + std::to_string(queries.cols()) + " does not match index dimension " +
                         std::to_string(dim()));
  }
  const std::size_t keep = std::min(k, size());
  const Matrix unit_queries = normalize_rows(queries);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(queries.rows());
  std::vector<std::size_t> scratch;
  for (std::size_t q0 = 0; q0 < queries.rows(); q0 += kQueryChunk) {
    const std::size_t q1 = std::min(queries.rows(), q0 + kQueryChunk);
    const Matrix scores = dot_scores(unit_queries, q0, q1, unit_t_);
    for (std::size_t q = q0; q < q1; ++q) out.push_back(top_k_from_scores(scores.row(q - q0), keep, scratch));
  }
  return out;
}

std::vector<std::size_t> VocabIndex::top_k_from_scores(std::span<const double> s, std::size_t k,
                                                       std::vector<std::size_t>& scratch) const {
  const std::size_t v = size();
  if (k == 0) throw DimensionError("k must be at least 1");
  if (s.size() != v) throw DimensionError("one score per vocabulary row is required");
  const std::size_t keep = std::min(k, v);
  auto better = [&](std::size_t a, std::size_t b) {
    if (zero_[a] != zero_[b]) return zero_[a] == 0;
    if (s[a] != s[b]) return s[a] > s[b];
    return id_rank_[a] < id_rank_[b];
  };
  scratch.resize(v);
  std::iota(scratch.begin(), scratch.end(), std::size_t{0});
  const auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(keep);
  if (keep < v) std::nth_element(scratch.begin(), mid, scratch.end(), better);
  std::sort(scratch.begin(), mid, better);
  return {scratch.begin(), mid};
}

std::vector<std::vector<Hit>> VocabIndex::batch_lookup(const Matrix& queries, std::size_t k) const {
  const auto top = batch_top_k(queries, k);
  if (top.empty()) return {};
  const Matrix unit_queries = normalize_rows(queries);
  std::vector<std::vector<Hit>> out;
  out.reserve(top.size());
  for (std::size_t q = 0; q < top.size(); ++q) {
    std::vector<Hit> hits;
    hits.reserve(top[q].size());
    for (std::size_t pos : top[q]) {
      hits.push_back({ids_[pos], words_[pos], zero_[pos] ? 0.0 : dot(unit_queries.row(q), unit_.row(pos))});
    }
    out.push_back(std::move(hits));
  }
  return out;
}

std::vector<Hit> VocabIndex::lookup(std::span<const double> query, std::size_t k) const {
  Matrix one(1, query.size());
  std::copy(query.begin(), query.end(), one.row(0).begin());
  auto res = batch_lookup(one, k);
  return std::move(res.front());
}

void VocabIndex::save(const std::filesystem::path& path) const {
  Container c;
  c.header = {{"arch", "index"}, {"kind", to_string(kind_)}, {"V", size()}, {"d", dim()},
              {"ids", ids_},     {"words", words_}};
  auto vals = unit_.values();
  c.tensors.emplace_back(vals.begin(), vals.end());
  write_container(path, c);
}

VocabIndex VocabIndex::load(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.header.value("arch", "") != "index") throw DataError(path.string() + ": artifact is not a vocabulary index");
  VocabIndex index;
  try {
    index.kind_ = target_kind_from_string(c.header.at("kind").get<std::string>());
    const auto v = c.header.at("V").get<std::size_t>();
    const auto d = c.header.at("d").get<std::size_t>();
    index.ids_ = c.header.at("ids").get<std::vector<std::string>>();
    index.words_ = c.header.at("words").get<std::vector<std::string>>();
    if (index.ids_.size() != v || index.words_.size() != v || c.tensors.size() != 1 ||
        c.tensors[0].size() != v * d || v == 0 || d == 0) {
      throw DataError("inconsistent index tables");
    }
    index.unit_ = Matrix(v, d);
    std::copy(c.tensors[0].begin(), c.tensors[0].end(), index.unit_.values().begin());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": corrupt index: " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": corrupt index: " + e.what());
  }
  index.finish();
  return index;
}

}  // namespace revdict
