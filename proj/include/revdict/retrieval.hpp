#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "revdict/data.hpp"
#include "revdict/math.hpp"

namespace revdict {

struct Hit {
  std::string id;
  std::string word;
  double score = 0.0;

  bool operator==(const Hit&) const = default;
};

// Exact cosine top-k index over a vocabulary. Rows are stored unit-normalised;
// zero rows are masked and always rank after every non-zero row. Ties in
// score are broken by ascending id.
class VocabIndex {
 public:
  VocabIndex() = default;

  // Entries without the chosen embedding are skipped; throws DataError when
  // none has it or an id repeats.
  static VocabIndex build(const DictionarySet& entries, TargetKind kind);
  static VocabIndex build(std::vector<std::string> ids, std::vector<std::string> words, const Matrix& embeddings,
                          TargetKind kind);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return unit_.cols(); }
  TargetKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const Matrix& unit_rows() const noexcept { return unit_; }
  const Matrix& unit_rows_t() const noexcept { return unit_t_; }
  bool masked(std::size_t row) const { return zero_[row] != 0; }
  std::optional<std::size_t> position(std::string_view id) const;

  std::vector<Hit> lookup(std::span<const double> query, std::size_t k) const;
  std::vector<std::vector<Hit>> batch_lookup(const Matrix& queries, std::size_t k) const;
  // Row positions of the top-k entries for each query.
  std::vector<std::vector<std::size_t>> batch_top_k(const Matrix& queries, std::size_t k) const;
  // Top-k row positions given one unit query's scores against every row
  // (as produced by dot_scores over unit_rows_t()). `scratch` is reused.
  std::vector<std::size_t> top_k_from_scores(std::span<const double> scores, std::size_t k,
                                             std::vector<std::size_t>& scratch) const;

  void save(const std::filesystem::path& path) const;
  static VocabIndex load(const std::filesystem::path& path);

 private:
  void finish();

  TargetKind kind_ = TargetKind::kElectra;
  std::vector<std::string> ids_;
  std::vector<std::string> words_;
  Matrix unit_;    // V x d
  Matrix unit_t_;  // d x V
  std::vector<char> zero_;
  std::vector<std::size_t> id_rank_;  // position of each id in sorted order
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace revdict
