// Shared fixtures and brute-force oracles for the unit and acceptance tests.
// The oracles are written independently of the library: plain loops, full
// sorts, no blocking.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

#include "revdict/align.hpp"
#include "revdict/data.hpp"
#include "revdict/math.hpp"
#include "revdict/projection.hpp"
#include "revdict/random.hpp"

namespace revdict::testing {

namespace fs = std::filesystem;

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

// --- finite differences --------------------------------------------------------

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // max |a - n| / allowed; <= 1 passes
};

// Central differences on mse_loss against every parameter. A parameter passes
// when |analytic - numeric| <= max(rel_tol * max(|analytic|, |numeric|), abs_floor).
inline GradCheck check_gradients(FeedForwardStack& net, const Matrix& x, const Matrix& t, double h = 1e-5,
                                 double rel_tol = 1e-4, double abs_floor = 1e-8) {
  net.set_training(true);
  const Matrix out = net.forward(x);
  const GradientSet g = net.backward(mse_loss_grad(out, t));
  net.set_training(false);
  const auto analytic = g.spans();
  auto params = net.parameters();
  GradCheck r;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      double& w = params[p][i];
      const double saved = w;
      w = saved + h;
      const double up = mse_loss(net.infer(x), t);
      w = saved - h;
      const double down = mse_loss(net.infer(x), t);
      w = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double allowed = std::max(rel_tol * std::max(std::abs(a), std::abs(numeric)), abs_floor);
      const double ratio = std::abs(a - numeric) / allowed;
      ++r.checked;
      if (ratio > 1.0) ++r.failures;
      r.worst = std::max(r.worst, ratio);
    }
  }
  return r;
}

// Moves every ReLU pre-activation at least `margin` away from the kink by
// redrawing input rows, so central differences never straddle it.
inline Matrix inputs_away_from_kinks(const FeedForwardStack& net, Rng& rng, std::size_t batch, double margin = 1e-3) {
  Matrix x(batch, net.d_in());
  for (std::size_t r = 0; r < batch; ++r) {
    for (int attempt = 0;; ++attempt) {
      for (double& v : x.row(r)) v = rng.normal();
      Vector a(x.row(r).begin(), x.row(r).end());
      bool ok = true;
      for (const auto& layer : net.layers()) {
        Vector z(layer.d_out());
        for (std::size_t o = 0; o < layer.d_out(); ++o) {
          double s = layer.bias[o];
          for (std::size_t k = 0; k < layer.d_in(); ++k) s += layer.weights(o, k) * a[k];
          z[o] = s;
          if (layer.activation == Activation::kReLU && std::abs(s) < margin) ok = false;
        }
        for (double& v : z) {
          if (layer.activation == Activation::kTanh) v = std::tanh(v);
          if (layer.activation == Activation::kReLU) v = std::max(v, 0.0);
        }
        a = std::move(z);
      }
      if (ok || attempt > 1000) break;
    }
  }
  return x;
}

// Random nonzero biases so that bias gradients are exercised too.
inline void jitter_biases(FeedForwardStack& net, Rng& rng) {
  for (std::size_t l = 0; l < net.size(); ++l) {
    for (double& b : net.layer(l).bias) b = 0.3 * rng.normal();
  }
}

inline std::size_t small_dim(Rng& rng) { return 1 + static_cast<std::size_t>(rng.below(8)); }

// Projection-shaped (tanh, identity) or aligner-shaped (relu, identity,
// relu, identity) stack with every width in [1, 8] and random biases.
inline FeedForwardStack random_small_stack(Rng& rng, bool aligner_shape) {
  FeedForwardStack net;
  if (aligner_shape) {
    AlignerDims dims{small_dim(rng), small_dim(rng), small_dim(rng), small_dim(rng)};
    net = init_aligner(dims, rng.next_u64()).net;
  } else {
    const std::size_t d_in = small_dim(rng);
    const std::size_t d_hidden = small_dim(rng);
    net = init_head(d_in, d_hidden, small_dim(rng), rng.next_u64()).stack;
  }
  jitter_biases(net, rng);
  return net;
}

// --- retrieval and metric oracles -------------------------------------------------

inline Vector unit(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  Vector out(v.begin(), v.end());
  if (n != 0.0) {
    for (double& x : out) x /= n;
  }
  return out;
}

inline double plain_dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

struct NaiveHit {
  std::size_t row;
  double score;
};

// Full sort of the whole vocabulary: non-zero rows first, then score
// descending, then id ascending.
inline std::vector<NaiveHit> naive_ranking(const Matrix& vocab, const std::vector<std::string>& ids,
                                           std::span<const double> query) {
  const Vector q = unit(query);
  std::vector<NaiveHit> all;
  for (std::size_t r = 0; r < vocab.rows(); ++r) {
    const bool zero = is_zero(vocab.row(r));
    all.push_back({r, zero ? 0.0 : plain_dot(q, unit(vocab.row(r)))});
  }
  std::sort(all.begin(), all.end(), [&](const NaiveHit& a, const NaiveHit& b) {
    const bool za = is_zero(vocab.row(a.row));
    const bool zb = is_zero(vocab.row(b.row));
    if (za != zb) return !za;
    if (a.score != b.score) return a.score > b.score;
    return ids[a.row] < ids[b.row];
  });
  return all;
}

// Mean over items of |{j : cos(pred_i, pool_j) > cos(pred_i, target_i)}| / M,
// taken from the integer total.
inline double naive_rank(const Matrix& preds, const Matrix& pool, const std::vector<std::size_t>& target_rows) {
  std::size_t closer = 0;
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    const Vector p = unit(preds.row(i));
    const double target = plain_dot(p, unit(pool.row(target_rows[i])));
    for (std::size_t j = 0; j < pool.rows(); ++j) {
      if (plain_dot(p, unit(pool.row(j))) > target) ++closer;
    }
  }
  return static_cast<double>(closer) / (static_cast<double>(pool.rows()) * static_cast<double>(preds.rows()));
}

inline double naive_mse(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double se = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) se += (a(i, k) - b(i, k)) * (a(i, k) - b(i, k));
    total += se / static_cast<double>(a.cols());
  }
  return total / static_cast<double>(a.rows());
}

inline double naive_cosine(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      ab += a(i, k) * b(i, k);
      aa += a(i, k) * a(i, k);
      bb += b(i, k) * b(i, k);
    }
    const double na = std::sqrt(aa);
    const double nb = std::sqrt(bb);
    total += (na == 0.0 || nb == 0.0) ? 0.0 : ab / (na * nb);
  }
  return total / static_cast<double>(a.rows());
}

inline double naive_precision(const Matrix& preds, const Matrix& vocab, const std::vector<std::string>& ids,
                              const std::vector<std::size_t>& target_rows, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    const auto ranking = naive_ranking(vocab, ids, preds.row(i));
    for (std::size_t j = 0; j < std::min(k, ranking.size()); ++j) {
      if (ranking[j].row == target_rows[i]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(preds.rows());
}

// Random vocabulary with deliberate ties: duplicated rows, scaled copies and
// zero rows. Ids are shuffled so that id order differs from row order.
struct TieVocab {
  std::vector<std::string> ids;
  std::vector<std::string> words;
  Matrix rows;
};

inline TieVocab tie_heavy_vocab(Rng& rng, std::size_t v, std::size_t d) {
  TieVocab out;
  out.rows = Matrix(v, d);
  for (std::size_t r = 0; r < v; ++r) {
    const double pick = rng.uniform();
    if (r > 0 && pick < 0.15) {
      const auto src = out.rows.row(rng.below(r));
      std::copy(src.begin(), src.end(), out.rows.row(r).begin());
    } else if (r > 0 && pick < 0.25) {
      const auto src = out.rows.row(rng.below(r));
      const double scale = static_cast<double>(1 + rng.below(4));
      for (std::size_t k = 0; k < d; ++k) out.rows(r, k) = src[k] * scale;
    } else if (pick < 0.3) {
      // zero row
    } else {
      // Small integers make exact score ties between distinct rows likely.
      for (double& x : out.rows.row(r)) x = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
    }
  }
  std::vector<std::size_t> labels(v);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  rng.shuffle(std::span(labels));
  for (std::size_t r = 0; r < v; ++r) {
    out.ids.push_back("w" + std::to_string(labels[r]));
    out.words.push_back("word" + std::to_string(labels[r]));
  }
  return out;
}

// --- synthetic learning tasks ---------------------------------------------------------

struct RegressionTask {
  SupervisedSet train;
  SupervisedSet dev;
};

inline SupervisedSet make_set(const Matrix& x, const Matrix& y, const std::string& prefix) {
  SupervisedSet s;
  s.features = x;
  s.targets = y;
  for (std::size_t i = 0; i < x.rows(); ++i) s.ids.push_back(prefix + std::to_string(i));
  return s;
}

// y = W x + noise with W ~ N(0, 1/d_in).
inline RegressionTask linear_task(std::uint64_t seed, std::size_t n_train, std::size_t n_dev, std::size_t d_in,
                                  std::size_t d_out, double noise = 0.1) {
  Rng rng(seed);
  const Matrix w = random_matrix(rng, d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
  auto draw = [&](std::size_t n, const std::string& prefix) {
    const Matrix x = random_matrix(rng, n, d_in);
    Matrix y(n, d_out);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < d_out; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < d_in; ++k) s += w(o, k) * x(i, k);
        y(i, o) = s + noise * rng.normal();
      }
    }
    return make_set(x, y, prefix);
  };
  RegressionTask t;
  t.train = draw(n_train, "tr");
  t.dev = draw(n_dev, "dv");
  return t;
}

// Haar-ish random orthogonal matrix by Gram-Schmidt on Gaussian columns.
inline Matrix random_rotation(Rng& rng, std::size_t d) {
  Matrix q = random_matrix(rng, d, d);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double proj = 0.0;
      for (std::size_t r = 0; r < d; ++r) proj += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < d; ++r) q(r, c) -= proj * q(r, p);
    }
    double n = 0.0;
    for (std::size_t r = 0; r < d; ++r) n += q(r, c) * q(r, c);
    n = std::sqrt(n);
    for (std::size_t r = 0; r < d; ++r) q(r, c) /= n;
  }
  return q;
}

struct AlignTask {
  std::vector<AlignedPair> train;
  std::vector<AlignedPair> dev;
  Matrix rotation;
};

inline AlignTask rotation_task(std::uint64_t seed, std::size_t n_train, std::size_t n_dev, std::size_t d) {
  Rng rng(seed);
  AlignTask t;
  t.rotation = random_rotation(rng, d);
  auto draw = [&](std::size_t n, const std::string& prefix) {
    std::vector<AlignedPair> out;
    for (std::size_t i = 0; i < n; ++i) {
      AlignedPair p;
      p.src_id = prefix + "en" + std::to_string(i);
      p.tgt_id = prefix + "ar" + std::to_string(i);
      p.src_embedding.resize(d);
      for (double& v : p.src_embedding) v = rng.normal();
      p.tgt_embedding.assign(d, 0.0);
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) p.tgt_embedding[r] += t.rotation(r, c) * p.src_embedding[c];
      }
      out.push_back(std::move(p));
    }
    return out;
  };
  t.train = draw(n_train, "tr");
  t.dev = draw(n_dev, "dv");
  return t;
}

// --- scratch directories -----------------------------------------------------------

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("revdict-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  fs::path path_;
};

}  // namespace revdict::testing
