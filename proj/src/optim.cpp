#include "revdict/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "revdict/error.hpp"
#include "revdict/math.hpp"

namespace revdict {

namespace {

// Half-cosine from a (p = 0) to b (p = 1).
double cosine_interp(double a, double b, double p) {
  return b + (a - b) * (1.0 + std::cos(std::numbers::pi * p)) / 2.0;
}

}  // namespace

void OneCycleConfig::validate() const {
  if (!(max_lr > 0.0)) throw ConfigError("max_lr must be positive");
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw ConfigError("pct_start must lie in (0, 1)");
  if (!(div_initial > 1.0) || !(div_final > 1.0)) throw ConfigError("lr divisors must exceed 1");
  if (total_steps < 2) throw ConfigError("one-cycle schedule needs at least 2 steps");
}

std::size_t OneCycleConfig::peak_step() const {
  const auto peak = static_cast<std::size_t>(std::llround(pct_start * static_cast<double>(total_steps)));
  return std::clamp<std::size_t>(peak, 1, total_steps - 1);
}

double onecycle_lr(std::size_t step, const OneCycleConfig& cfg) {
  cfg.validate();
  if (step > cfg.total_steps) {
    throw DimensionError("schedule step " + std::to_string(step) + " outside [0, " +
                         std::to_string(cfg.total_steps) + "]");
  }
  const std::size_t peak = cfg.peak_step();
  if (step <= peak) {
    const double p = static_cast<double>(step) / static_cast<double>(peak);
    return cosine_interp(cfg.initial_lr(), cfg.max_lr, p);
  }
  const double p =
      static_cast<double>(step - peak) / static_cast<double>(cfg.total_steps - peak);
  return cosine_interp(cfg.max_lr, cfg.final_lr(), p);
}

void AdamW::step(std::span<const std::span<double>> params,
                 std::span<const std::span<const double>> grads, double lr, double weight_decay) {
  if (params.size() != grads.size()) throw DimensionError("AdamW: parameter/gradient count mismatch");
  if (!(lr > 0.0)) throw ConfigError("AdamW: learning rate must be positive");
  const bool fresh = m_.empty();
  if (!fresh && m_.size() != params.size()) throw DimensionError("AdamW: parameter list changed shape");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || (!fresh && params[i].size() != m_[i].size())) {
      throw DimensionError("AdamW: tensor " + std::to_string(i) + " shape mismatch");
    }
    if (!all_finite(grads[i])) {
      throw NumericError("AdamW: non-finite gradient in tensor " + std::to_string(i) +
                         " at step " + std::to_string(t_ + 1));
    }
  }
  if (fresh) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  ++t_;
  const double b1 = hyper_.beta1;
  const double b2 = hyper_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] *= decay;
      p[k] -= lr * (m_hat / (std::sqrt(v_hat) + hyper_.eps));
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  OneCycleConfig probe{max_lr, pct_start, div_initial, div_final, 2};
  probe.validate();
}

std::size_t TrainConfig::total_steps(std::size_t train_size) const {
  return epochs * ((train_size + batch_size - 1) / batch_size);
}

OneCycleConfig TrainConfig::schedule(std::size_t train_size) const {
  OneCycleConfig s{max_lr, pct_start, div_initial, div_final, total_steps(train_size)};
  // A single-step run still needs a valid two-point schedule.
  s.total_steps = std::max<std::size_t>(s.total_steps, 2);
  return s;
}

}  // namespace revdict
