#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "revdict/eval.hpp"
#include "revdict/math.hpp"
#include "revdict/projection.hpp"

namespace revdict {

struct EnsembleMember {
  std::string name;
  TrainedHead head;
};

// Unweighted mean of member predictions. Members are held sorted by name.
class Ensemble {
 public:
  // Throws DimensionError unless all members share d_out and target kind.
  explicit Ensemble(std::vector<EnsembleMember> members);

  const std::vector<EnsembleMember>& members() const noexcept { return members_; }
  std::size_t d_out() const { return members_.front().head.head.d_out(); }
  TargetKind target() const { return members_.front().head.head.target; }

  // One feature batch per member, in members() order.
  Matrix predict(std::span<const Matrix> features_by_member) const;

 private:
  std::vector<EnsembleMember> members_;
};

// Elementwise mean of equally shaped prediction matrices.
Matrix average_predictions(std::span<const Matrix> predictions);

struct SearchRow {
  std::vector<std::string> members;  // sorted
  EvalReport report;
};

struct SearchResult {
  std::vector<SearchRow> rows;  // bitmask order over the sorted names
  std::size_t selected = 0;     // row index with the best dev cosine

  const SearchRow& winner() const { return rows.at(selected); }
};

// Dev-set inputs shared by every subset: each head's predictions, the gold
// targets and the rank pool.
struct SearchInputs {
  std::vector<std::string> names;
  std::vector<Matrix> predictions;  // one per name, N x d
  Matrix targets;                   // N x d
  Matrix pool;                      // M x d
  std::vector<std::size_t> target_pool_indices;
};

constexpr std::size_t kMaxSearchHeads = 16;

// Scores all 2^n - 1 non-empty subsets. The winner maximises mean dev cosine;
// ties go to the lexicographically smallest member-name list.
SearchResult subset_search(const SearchInputs& inputs);

// Columns: members, mse, cosine, rank.
std::string search_to_csv(const SearchResult& result);

}  // namespace revdict
