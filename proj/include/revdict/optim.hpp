#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace revdict {

// One-cycle learning-rate schedule with cosine warm-up and cosine annealing.
struct OneCycleConfig {
  double max_lr = 1.0e-4;
  double pct_start = 0.2;
  double div_initial = 25.0;  // initial lr = max_lr / div_initial
  double div_final = 100.0;   // final lr = initial lr / div_final
  std::size_t total_steps = 2;

  void validate() const;
  double initial_lr() const { return max_lr / div_initial; }
  double final_lr() const { return initial_lr() / div_final; }
  // Step at which the peak is reached: round(pct_start * total_steps),
  // clamped to [1, total_steps - 1].
  std::size_t peak_step() const;
};

// Learning rate for optimizer step `step` in [0, total_steps].
double onecycle_lr(std::size_t step, const OneCycleConfig& cfg);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled-weight-decay Adam over a fixed list of parameter tensors.
class AdamW {
 public:
  explicit AdamW(AdamWHyper hyper = {}) : hyper_(hyper) {}

  // Shapes are fixed by the first call. Throws NumericError, leaving
  // parameters and state untouched, if any gradient is NaN or Inf.
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads, double lr, double weight_decay);

  std::uint64_t steps_taken() const noexcept { return t_; }
  const std::vector<std::vector<double>>& first_moment() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moment() const noexcept { return v_; }

 private:
  AdamWHyper hyper_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Optimisation loop settings; defaults are the reference hyperparameters.
struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t epochs = 20;
  double weight_decay = 1.0e-4;
  double max_lr = 1.0e-4;
  double pct_start = 0.2;
  double div_initial = 25.0;
  double div_final = 100.0;
  std::uint64_t seed = 0;

  void validate() const;
  // epochs * ceil(train_size / batch_size)
  std::size_t total_steps(std::size_t train_size) const;
  OneCycleConfig schedule(std::size_t train_size) const;
};

}  // namespace revdict
