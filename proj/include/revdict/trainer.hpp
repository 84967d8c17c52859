#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"
#include "revdict/math.hpp"
#include "revdict/optim.hpp"

namespace revdict {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_cosine = 0.0;
  double dev_mse = 0.0;
  double last_lr = 0.0;
};

struct FitOptions {
  // Weight of an extra mse(output, input) term; needs d_in == d_out.
  double reconstruction_weight = 0.0;
};

struct FitResult {
  FeedForwardStack best;  // weights after best_epoch
  std::size_t best_epoch = 0;
  double best_dev_cosine = 0.0;
  std::vector<EpochRecord> history;
  std::size_t steps = 0;
};

// Glorot-uniform weights, zero biases, drawn layer by layer from `seed`.
void glorot_uniform_init(FeedForwardStack& stack, std::uint64_t seed);

// Minibatch MSE regression with AdamW and a per-step one-cycle schedule.
// After every epoch the mean dev cosine is measured and the weights are
// snapshotted whenever it strictly improves, so ties keep the earlier epoch.
FitResult fit(FeedForwardStack net, const Matrix& train_x, const Matrix& train_y, const Matrix& dev_x,
              const Matrix& dev_y, const TrainConfig& cfg, const FitOptions& opts = {});

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> history_from_json(const nlohmann::json& j);

}  // namespace revdict
