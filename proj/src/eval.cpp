#include "revdict/eval.hpp"

#include <algorithm>
#include <cstdio>

#include "revdict/error.hpp"

namespace revdict {

namespace {

constexpr std::size_t kChunk = 64;

// Sum in ascending order so the result does not depend on item order.
double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// pool_t: the unit-normalised pool, transposed (d x M). When `top` is given,
// the same score rows also yield each item's top-10 from `index`, whose rows
// must be the pool.
EvalReport evaluate_unit_pool(const Matrix& preds, const Matrix& targets, const Matrix& pool_t,
                              std::span<const std::size_t> target_pool_indices, const VocabIndex* index = nullptr,
                              std::vector<std::vector<std::size_t>>* top = nullptr) {
  const std::size_t pool_rows = pool_t.cols();
  const std::size_t n = preds.rows();
  if (n == 0 || pool_rows == 0) throw DimensionError("evaluate needs at least one item and one pool entry");
  if (targets.rows() != n || targets.cols() != preds.cols() || pool_t.rows() != preds.cols()) {
    throw DimensionError("evaluate: prediction, target and pool dimensions disagree");
  }
  if (target_pool_indices.size() != n) throw DimensionError("evaluate: one pool index per item is required");
  for (auto idx : target_pool_indices) {
    if (idx >= pool_rows) throw DimensionError("evaluate: pool index " + std::to_string(idx) + " out of range");
  }

  EvalReport r;
  r.n_items = n;
  const double d = static_cast<double>(preds.cols());
  std::vector<double> item_mse(n);
  std::vector<double> item_cos(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = preds.row(i);
    auto t = targets.row(i);
    double se = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double diff = p[k] - t[k];
      se += diff * diff;
    }
    item_mse[i] = se / d;
    item_cos[i] = cosine(p, t);
  }
  r.mse = order_free_mean(std::move(item_mse));
  r.cosine = order_free_mean(std::move(item_cos));

  // Mean of closer_i / M, computed from the integer total.
  const Matrix unit_preds = normalize_rows(preds);
  std::size_t closer_total = 0;
  std::vector<std::size_t> scratch;
  if (top) top->clear();
  for (std::size_t q0 = 0; q0 < n; q0 += kChunk) {
    const std::size_t q1 = std::min(n, q0 + kChunk);
    const Matrix scores = dot_scores(unit_preds, q0, q1, pool_t);
    for (std::size_t q = q0; q < q1; ++q) {
      auto s = scores.row(q - q0);
      const double target_score = s[target_pool_indices[q]];
      closer_total +=
          static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](double v) { return v > target_score; }));
      if (top) top->push_back(index->top_k_from_scores(s, 10, scratch));
    }
  }
  r.rank = static_cast<double>(closer_total) / (static_cast<double>(pool_rows) * static_cast<double>(n));
  return r;
}

}  // namespace

EvalReport evaluate(const Matrix& preds, const Matrix& targets, const Matrix& pool,
                    std::span<const std::size_t> target_pool_indices) {
  if (pool.cols() != preds.cols()) throw DimensionError("evaluate: prediction, target and pool dimensions disagree");
  return evaluate_unit_pool(preds, targets, normalize_rows(pool).transposed(), target_pool_indices);
}

namespace {

std::vector<std::size_t> resolve_ids(std::span<const std::string> ids, const VocabIndex& index) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto pos = index.position(id);
    if (!pos) throw DataError("target id '" + id + "' is not in the retrieval vocabulary");
    out.push_back(*pos);
  }
  return out;
}

double hit_rate(const std::vector<std::vector<std::size_t>>& top, std::span<const std::size_t> targets,
                std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top.size(); ++i) {
    const auto& row = top[i];
    const auto end = row.begin() + static_cast<std::ptrdiff_t>(std::min(k, row.size()));
    if (std::find(row.begin(), end, targets[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(top.size());
}

}  // namespace

double precision_at_k(const Matrix& preds, std::span<const std::string> target_ids, const VocabIndex& index,
                      std::size_t k) {
  if (preds.rows() != target_ids.size()) throw DimensionError("precision_at_k: one target id per prediction");
  if (preds.rows() == 0) throw DimensionError("precision_at_k on an empty prediction set");
  const auto targets = resolve_ids(target_ids, index);
  return hit_rate(index.batch_top_k(preds, k), targets, k);
}

EvalReport evaluate_against(const Matrix& preds, std::span<const std::string> ids, const DictionarySet& reference,
                            const VocabIndex& index) {
  if (preds.rows() != ids.size()) throw DimensionError("evaluate: one id per prediction");
  if (preds.rows() == 0) throw DimensionError("evaluate on an empty prediction set");
  const auto positions = resolve_ids(ids, index);
  Matrix targets(preds.rows(), preds.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const DictEntry* e = reference.find(ids[i]);
    if (e == nullptr || !e->embedding(index.kind())) {
      throw DataError("reference has no " + std::string(to_string(index.kind())) + " embedding for '" + ids[i] + "'");
    }
    const auto& t = *e->embedding(index.kind());
    if (t.size() != preds.cols()) throw DimensionError("prediction dimension differs from the reference embeddings");
    std::copy(t.begin(), t.end(), targets.row(i).begin());
  }
  // The index rows are already unit-normalised copies of the pool vectors,
  // so one scoring pass serves both rank and P@k.
  std::vector<std::vector<std::size_t>> top;
  EvalReport r = evaluate_unit_pool(preds, targets, index.unit_rows_t(), positions, &index, &top);
  r.p_at_1 = hit_rate(top, positions, 1);
  r.p_at_10 = hit_rate(top, positions, 10);
  return r;
}

std::string format_metric(std::optional<double> v) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", *v);
  return buf;
}

std::string format_report(const ReportTable& reports) {
  const std::vector<std::string> header = {"Subtask", "Embedding", "MSE", "Cosine", "Rank", "P@1", "P@10"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& [key, pair] : reports) {
    auto cell = [&](auto getter) {
      auto half = [&](const std::optional<EvalReport>& r) -> std::optional<double> {
        if (!r) return std::nullopt;
        return getter(*r);
      };
      return format_metric(half(pair.test)) + " / " + format_metric(half(pair.dev));
    };
    rows.push_back({key.first, key.second,
                    cell([](const EvalReport& r) -> std::optional<double> { return r.mse; }),
                    cell([](const EvalReport& r) -> std::optional<double> { return r.cosine; }),
                    cell([](const EvalReport& r) -> std::optional<double> { return r.rank; }),
                    cell([](const EvalReport& r) { return r.p_at_1; }),
                    cell([](const EvalReport& r) { return r.p_at_10; })});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto render = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    return line + "\n";
  };
  std::string out = render(header);
  for (const auto& row : rows) out += render(row);
  return out;
}

nlohmann::json report_to_json(const EvalReport& r, const std::string& subtask, const std::string& embedding,
                              const std::string& split) {
  nlohmann::json j = {{"subtask", subtask}, {"embedding", embedding}, {"split", split}, {"mse", r.mse},
                      {"cosine", r.cosine}, {"rank", r.rank},         {"n", r.n_items}};
  j["p1"] = r.p_at_1 ? nlohmann::json(*r.p_at_1) : nlohmann::json(nullptr);
  j["p10"] = r.p_at_10 ? nlohmann::json(*r.p_at_10) : nlohmann::json(nullptr);
  return j;
}

}  // namespace revdict
