#include "revdict/math.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "revdict/error.hpp"

namespace revdict {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kReLU:
      return x > 0.0 ? x : 0.0;
  }
  return x;
}

// Derivative expressed through the pre-activation and the activation output.
double activate_grad(Activation a, double pre, double out) {
  switch (a) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kTanh:
      return 1.0 - out * out;
    case Activation::kReLU:
      return pre > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

// Affine part only: out = x W^T + b.
Matrix affine(const DenseLayer& layer, const Matrix& x) {
  const std::size_t batch = x.rows();
  const std::size_t d_out = layer.d_out();
  Matrix out(batch, d_out);
  for (std::size_t b = 0; b < batch; ++b) {
    auto xr = x.row(b);
    for (std::size_t o = 0; o < d_out; ++o) {
      out(b, o) = layer.bias[o] + dot(layer.weights.row(o), xr);
    }
  }
  return out;
}

void apply_activation(Activation a, Matrix& m) {
  if (a == Activation::kIdentity) return;
  for (double& v : m.values()) v = activate(a, v);
}

}  // namespace

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw DimensionError("row " + std::to_string(r) + " has length " +
                           std::to_string(rows[r].size()) + ", expected " +
                           std::to_string(m.cols()));
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw DimensionError("row index out of range");
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kTanh:
      return "tanh";
    case Activation::kReLU:
      return "relu";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kReLU;
  throw DataError("unknown activation '" + std::string(name) + "'");
}

std::vector<std::span<const double>> GradientSet::spans() const {
  std::vector<std::span<const double>> out;
  out.reserve(weights.size() * 2);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.emplace_back(weights[i].values());
    out.emplace_back(biases[i]);
  }
  return out;
}

FeedForwardStack::FeedForwardStack(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DimensionError("a feed-forward stack needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.d_in() == 0 || l.d_out() == 0 || l.bias.size() != l.d_out()) {
      throw DimensionError("layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i + 1 < layers_.size() && l.d_out() != layers_[i + 1].d_in()) {
      throw DimensionError("layer " + std::to_string(i) + " output " + std::to_string(l.d_out()) +
                           " does not chain into layer input " +
                           std::to_string(layers_[i + 1].d_in()));
    }
  }
}

std::size_t FeedForwardStack::d_in() const { return layers_.front().d_in(); }
std::size_t FeedForwardStack::d_out() const { return layers_.back().d_out(); }

void FeedForwardStack::set_training(bool on) {
  training_ = on;
  if (!on) activations_.clear();
}

Matrix FeedForwardStack::infer(const Matrix& batch) const {
  if (batch.cols() != d_in()) {
    throw DimensionError("batch " + shape(batch) + " does not match stack input " +
                         std::to_string(d_in()));
  }
  if (batch.rows() == 0) throw DimensionError("empty batch");
  Matrix x = batch;
  for (const auto& layer : layers_) {
    x = affine(layer, x);
    apply_activation(layer.activation, x);
  }
  return x;
}

Matrix FeedForwardStack::forward(const Matrix& batch) {
  if (!training_) return infer(batch);
  if (batch.cols() != d_in()) {
    throw DimensionError("batch " + shape(batch) + " does not match stack input " +
                         std::to_string(d_in()));
  }
  if (batch.rows() == 0) throw DimensionError("empty batch");
  activations_.clear();
  activations_.reserve(layers_.size() + 1);
  activations_.push_back(batch);
  for (const auto& layer : layers_) {
    Matrix out = affine(layer, activations_.back());
    apply_activation(layer.activation, out);
    activations_.push_back(std::move(out));
  }
  return activations_.back();
}

GradientSet FeedForwardStack::backward(const Matrix& loss_grad) {
  if (activations_.empty()) throw StateError("backward() called without a cached forward pass");
  const Matrix& out = activations_.back();
  if (loss_grad.rows() != out.rows() || loss_grad.cols() != out.cols()) {
    throw DimensionError("loss gradient " + shape(loss_grad) + " does not match output " +
                         shape(out));
  }
  const std::size_t batch = out.rows();
  GradientSet grads;
  grads.weights.resize(layers_.size());
  grads.biases.resize(layers_.size());

  Matrix upstream = loss_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const DenseLayer& layer = layers_[li];
    const Matrix& x = activations_[li];
    const Matrix& y = activations_[li + 1];
    const std::size_t d_in = layer.d_in();
    const std::size_t d_out = layer.d_out();

    // upstream becomes d loss / d pre-activation. ReLU needs the sign of the
    // pre-activation, which equals the sign of its output.
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < d_out; ++o) {
        upstream(b, o) *= activate_grad(layer.activation, y(b, o), y(b, o));
      }
    }

    Matrix dw(d_out, d_in);
    Vector db(d_out, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      auto xr = x.row(b);
      for (std::size_t o = 0; o < d_out; ++o) {
        const double g = upstream(b, o);
        db[o] += g;
        auto dwr = dw.row(o);
        for (std::size_t i = 0; i < d_in; ++i) dwr[i] += g * xr[i];
      }
    }

    if (li > 0) {
      Matrix dx(batch, d_in);
      for (std::size_t b = 0; b < batch; ++b) {
        auto dxr = dx.row(b);
        for (std::size_t o = 0; o < d_out; ++o) {
          const double g = upstream(b, o);
          auto wr = layer.weights.row(o);
          for (std::size_t i = 0; i < d_in; ++i) dxr[i] += g * wr[i];
        }
      }
      upstream = std::move(dx);
    }
    grads.weights[li] = std::move(dw);
    grads.biases[li] = std::move(db);
  }
  activations_.clear();
  return grads;
}

std::vector<std::span<double>> FeedForwardStack::parameters() {
  std::vector<std::span<double>> out;
  out.reserve(layers_.size() * 2);
  for (auto& l : layers_) {
    out.emplace_back(l.weights.values());
    out.emplace_back(l.bias);
  }
  return out;
}

std::size_t FeedForwardStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.values().size() + l.bias.size();
  return n;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("mse_loss shape mismatch: " + shape(pred) + " vs " + shape(target));
  }
  if (pred.empty()) throw DimensionError("mse_loss on an empty batch");
  auto p = pred.values();
  auto t = target.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    sum += d * d;
  }
  return sum / static_cast<double>(p.size());
}

Matrix mse_loss_grad(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("mse_loss shape mismatch: " + shape(pred) + " vs " + shape(target));
  }
  Matrix g(pred.rows(), pred.cols());
  const double scale = 2.0 / static_cast<double>(pred.values().size());
  auto p = pred.values();
  auto t = target.values();
  auto out = g.values();
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = scale * (p[i] - t[i]);
  return g;
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("dot of vectors with different lengths");
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sum += u[i] * v[i];
  return sum;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine of vectors with different lengths");
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot(u, v) / (nu * nv);
}

double mean_row_cosine(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("mean_row_cosine shape mismatch: " + shape(a) + " vs " + shape(b));
  }
  if (a.rows() == 0) throw DimensionError("mean_row_cosine of empty matrices");
  double sum = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) sum += cosine(a.row(r), b.row(r));
  return sum / static_cast<double>(a.rows());
}

Matrix normalize_rows(const Matrix& m, std::vector<char>* zero_rows) {
  Matrix out = m;
  if (zero_rows) zero_rows->assign(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = out.row(r);
    const double n = l2_norm(row);
    if (n == 0.0) {
      if (zero_rows) (*zero_rows)[r] = 1;
      continue;
    }
    for (double& v : row) v /= n;
  }
  return out;
}

namespace {

// 4x4 register tile over a packed 4-column panel (panel[k * 4 + c]). Each
// accumulator lane starts at zero and adds terms in feature order, exactly
// as dot() does; the vectors only run several such sums side by side.
using Lanes = double __attribute__((vector_size(16)));

void tile_4x4(const double* q0, std::size_t q_stride, const double* panel, std::size_t d, double* out,
              std::size_t out_stride) {
  Lanes a0 = {}, a1 = {}, b0 = {}, b1 = {}, c0 = {}, c1 = {}, e0 = {}, e1 = {};
  const double* qa = q0;
  const double* qb = q0 + q_stride;
  const double* qc = q0 + 2 * q_stride;
  const double* qe = q0 + 3 * q_stride;
  for (std::size_t k = 0; k < d; ++k) {
    Lanes p0;
    Lanes p1;
    std::memcpy(&p0, panel + k * 4, sizeof(Lanes));
    std::memcpy(&p1, panel + k * 4 + 2, sizeof(Lanes));
    a0 += qa[k] * p0;
    a1 += qa[k] * p1;
    b0 += qb[k] * p0;
    b1 += qb[k] * p1;
    c0 += qc[k] * p0;
    c1 += qc[k] * p1;
    e0 += qe[k] * p0;
    e1 += qe[k] * p1;
  }
  const Lanes* rows[4][2] = {{&a0, &a1}, {&b0, &b1}, {&c0, &c1}, {&e0, &e1}};
  for (std::size_t r = 0; r < 4; ++r) {
    std::memcpy(out + r * out_stride, rows[r][0], sizeof(Lanes));
    std::memcpy(out + r * out_stride + 2, rows[r][1], sizeof(Lanes));
  }
}

}  // namespace

Matrix dot_scores(const Matrix& queries, std::size_t q_begin, std::size_t q_end,
                  const Matrix& pool_t) {
  if (queries.cols() != pool_t.rows()) {
    throw DimensionError("query dimension " + std::to_string(queries.cols()) +
                         " does not match pool dimension " + std::to_string(pool_t.rows()));
  }
  if (q_begin > q_end || q_end > queries.rows()) throw DimensionError("query range out of bounds");
  const std::size_t d = pool_t.rows();
  const std::size_t m = pool_t.cols();
  const std::size_t n = q_end - q_begin;
  Matrix out(n, m);
  const double* pt = pool_t.values().data();
  const double* qs = queries.values().data() + q_begin * d;
  double* os = out.values().data();

  const std::size_t m4 = m - m % 4;
  const std::size_t n4 = n - n % 4;
  std::vector<double> panel(d * 4);
  for (std::size_t jb = 0; jb < m4; jb += 4) {
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t c = 0; c < 4; ++c) panel[k * 4 + c] = pt[k * m + jb + c];
    }
    for (std::size_t i = 0; i < n4; i += 4) tile_4x4(qs + i * d, d, panel.data(), d, os + i * m + jb, m);
  }
  // Ragged edges: plain feature-order sums.
  auto single = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += qs[i * d + k] * pt[k * m + j];
    os[i * m + j] = s;
  };
  for (std::size_t i = n4; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) single(i, j);
  }
  for (std::size_t i = 0; i < n4; ++i) {
    for (std::size_t j = m4; j < m; ++j) single(i, j);
  }
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace revdict
