#include "revdict/ensemble.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "revdict/error.hpp"

namespace revdict {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Ensemble::Ensemble(std::vector<EnsembleMember> members) : members_(std::move(members)) {
  if (members_.empty()) throw DimensionError("an ensemble needs at least one member");
  std::sort(members_.begin(), members_.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < members_.size(); ++i) {
    if (members_[i].name == members_[i - 1].name) throw DataError("duplicate ensemble member '" + members_[i].name + "'");
  }
  for (const auto& m : members_) {
    if (m.head.head.d_out() != d_out()) throw DimensionError("ensemble members disagree on output dimension");
    if (m.head.head.target != target()) throw DataError("ensemble members disagree on target embedding");
  }
}

Matrix Ensemble::predict(std::span<const Matrix> features_by_member) const {
  if (features_by_member.size() != members_.size()) {
    throw DimensionError("expected " + std::to_string(members_.size()) + " feature batches, got " +
                         std::to_string(features_by_member.size()));
  }
  std::vector<Matrix> preds;
  preds.reserve(members_.size());
  for (std::size_t i = 0; i < members_.size(); ++i) {
    preds.push_back(revdict::predict(members_[i].head.head, features_by_member[i]));
  }
  return average_predictions(preds);
}

Matrix average_predictions(std::span<const Matrix> predictions) {
  if (predictions.empty()) throw DimensionError("nothing to average");
  const std::size_t rows = predictions.front().rows();
  const std::size_t cols = predictions.front().cols();
  // Incremental mean: exact whenever the members agree, so identical heads
  // produce identical subset scores.
  Matrix mean = predictions.front();
  for (std::size_t i = 1; i < predictions.size(); ++i) {
    const Matrix& p = predictions[i];
    if (p.rows() != rows) throw DimensionError("ensemble members produced different batch sizes");
    if (p.cols() != cols) throw DimensionError("ensemble members produced different output dimensions");
    auto m = mean.values();
    auto v = p.values();
    const double count = static_cast<double>(i + 1);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += (v[k] - m[k]) / count;
  }
  return mean;
}

SearchResult subset_search(const SearchInputs& in) {
  const std::size_t n = in.names.size();
  if (n == 0) throw DataError("subset search needs at least one head");
  if (n > kMaxSearchHeads) {
    throw ConfigError("exhaustive subset search is limited to " + std::to_string(kMaxSearchHeads) + " heads");
  }
  if (in.predictions.size() != n) throw DimensionError("one prediction matrix per head is required");

  // Work over names in sorted order so subsets list their members sorted.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return in.names[a] < in.names[b]; });
  for (std::size_t i = 1; i < n; ++i) {
    if (in.names[order[i]] == in.names[order[i - 1]]) throw DataError("duplicate head name '" + in.names[order[i]] + "'");
  }

  SearchResult result;
  const std::size_t subsets = (std::size_t{1} << n) - 1;
  result.rows.reserve(subsets);
  for (std::size_t mask = 1; mask <= subsets; ++mask) {
    SearchRow row;
    std::vector<Matrix> chosen;
    for (std::size_t bit = 0; bit < n; ++bit) {
      if ((mask >> bit) & 1U) {
        row.members.push_back(in.names[order[bit]]);
        chosen.push_back(in.predictions[order[bit]]);
      }
    }
    row.report = evaluate(average_predictions(chosen), in.targets, in.pool, in.target_pool_indices);
    result.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    const auto& cand = result.rows[i];
    const auto& best = result.rows[result.selected];
    if (cand.report.cosine > best.report.cosine ||
        (cand.report.cosine == best.report.cosine && cand.members < best.members)) {
      result.selected = i;
    }
  }
  return result;
}

std::string search_to_csv(const SearchResult& result) {
  std::string out = "members,mse,cosine,rank\n";
  for (const auto& row : result.rows) {
    std::string names;
    for (std::size_t i = 0; i < row.members.size(); ++i) {
      if (i) names += ',';
      names += row.members[i];
    }
    out += csv_field(names) + "," + number(row.report.mse) + "," + number(row.report.cosine) + "," +
           number(row.report.rank) + "\n";
  }
  return out;
}

}  // namespace revdict
