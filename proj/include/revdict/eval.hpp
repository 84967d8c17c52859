#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "revdict/data.hpp"
#include "revdict/math.hpp"
#include "revdict/retrieval.hpp"

namespace revdict {

struct EvalReport {
  double mse = 0.0;
  double cosine = 0.0;
  double rank = 0.0;  // mean fraction of the pool strictly closer than the target; lower is better
  std::optional<double> p_at_1;
  std::optional<double> p_at_10;
  std::size_t n_items = 0;
};

// MSE (element mean per item, averaged over items), mean cosine and rank.
// target_pool_indices[i] is the pool row holding item i's target.
EvalReport evaluate(const Matrix& preds, const Matrix& targets, const Matrix& pool,
                    std::span<const std::size_t> target_pool_indices);

// Fraction of items whose target id is among the index's top-k hits.
double precision_at_k(const Matrix& preds, std::span<const std::string> target_ids, const VocabIndex& index,
                      std::size_t k);

// evaluate() with the index vocabulary as pool, plus P@1 and P@10 from one
// retrieval pass. Each prediction's id must be in the index.
EvalReport evaluate_against(const Matrix& preds, std::span<const std::string> ids, const DictionarySet& reference,
                            const VocabIndex& index);

struct ReportPair {
  std::optional<EvalReport> test;
  std::optional<EvalReport> dev;
};

// Keyed by (subtask label, embedding name).
using ReportTable = std::map<std::pair<std::string, std::string>, ReportPair>;

// Three-decimal "test / dev" cells; "N/A" for a missing half. Values are
// printed with %.3f, so exact binary halves round to even.
std::string format_report(const ReportTable& reports);
std::string format_metric(std::optional<double> v);

nlohmann::json report_to_json(const EvalReport& r, const std::string& subtask, const std::string& embedding,
                              const std::string& split);

}  // namespace revdict
