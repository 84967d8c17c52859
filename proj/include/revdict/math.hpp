#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace revdict {

using Vector = std::vector<double>;

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // All rows must share one length; an empty list gives a 0 x 0 matrix.
  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  Matrix transposed() const;

  // Rows picked by index, in the given order.
  Matrix gather_rows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { kIdentity, kTanh, kReLU };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  Matrix weights;  // d_out x d_in
  Vector bias;     // d_out
  Activation activation = Activation::kIdentity;

  DenseLayer() = default;
  DenseLayer(std::size_t d_in, std::size_t d_out, Activation act)
      : weights(d_out, d_in), bias(d_out, 0.0), activation(act) {}

  std::size_t d_in() const noexcept { return weights.cols(); }
  std::size_t d_out() const noexcept { return weights.rows(); }
};

// Loss gradients for every layer of a stack, same shapes as the parameters.
struct GradientSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  std::vector<std::span<const double>> spans() const;
};

// A chain of dense layers. In training mode forward() keeps the per-layer
// inputs and outputs so that backward() can run once for that batch.
class FeedForwardStack {
 public:
  FeedForwardStack() = default;
  explicit FeedForwardStack(std::vector<DenseLayer> layers);

  std::size_t d_in() const;
  std::size_t d_out() const;
  std::size_t size() const noexcept { return layers_.size(); }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  DenseLayer& layer(std::size_t i) { return layers_.at(i); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }

  void set_training(bool on);
  bool training() const noexcept { return training_; }
  bool has_cache() const noexcept { return !activations_.empty(); }

  Matrix forward(const Matrix& batch);
  // Inference path; never touches the caches.
  Matrix infer(const Matrix& batch) const;

  // Consumes the cache written by the last training-mode forward().
  GradientSet backward(const Matrix& loss_grad);

  // Weights then bias of each layer, in layer order.
  std::vector<std::span<double>> parameters();
  std::size_t parameter_count() const;

 private:
  std::vector<DenseLayer> layers_;
  bool training_ = false;
  // activations_[0] is the batch, activations_[i + 1] the output of layer i.
  std::vector<Matrix> activations_;
};

double mse_loss(const Matrix& pred, const Matrix& target);
// d mse_loss / d pred = 2 (pred - target) / (B * d).
Matrix mse_loss_grad(const Matrix& pred, const Matrix& target);

double dot(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> v);
// Zero-norm operands give 0.0.
double cosine(std::span<const double> u, std::span<const double> v);
// Mean over rows of cosine(a.row(i), b.row(i)).
double mean_row_cosine(const Matrix& a, const Matrix& b);

// Each row scaled to unit L2 norm; zero rows stay zero and are flagged.
Matrix normalize_rows(const Matrix& m, std::vector<char>* zero_rows = nullptr);

// scores(i, j) = dot(queries.row(q_begin + i), column j of pool_t), summed in
// feature order so every entry equals dot() bit for bit.
// pool_t is the transposed pool (d x M).
Matrix dot_scores(const Matrix& queries, std::size_t q_begin, std::size_t q_end,
                  const Matrix& pool_t);

bool all_finite(std::span<const double> v);

}  // namespace revdict
