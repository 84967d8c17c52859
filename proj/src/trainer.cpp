#include "revdict/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "revdict/error.hpp"
#include "revdict/random.hpp"

namespace revdict {

using nlohmann::json;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5851f42d4c957f2dULL;

}  // namespace

void glorot_uniform_init(FeedForwardStack& stack, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < stack.size(); ++i) {
    auto& layer = stack.layer(i);
    const double a = std::sqrt(6.0 / static_cast<double>(layer.d_in() + layer.d_out()));
    for (double& w : layer.weights.values()) w = rng.uniform(-a, a);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

FitResult fit(FeedForwardStack net, const Matrix& train_x, const Matrix& train_y, const Matrix& dev_x,
              const Matrix& dev_y, const TrainConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  const std::size_t n = train_x.rows();
  if (n == 0 || dev_x.rows() == 0) throw DataError("training needs non-empty train and dev sets");
  if (train_y.rows() != n || dev_y.rows() != dev_x.rows()) throw DimensionError("feature/target row counts differ");
  if (train_x.cols() != net.d_in() || dev_x.cols() != net.d_in()) {
    throw DimensionError("feature dimension " + std::to_string(train_x.cols()) + " does not match network input " +
                         std::to_string(net.d_in()));
  }
  if (train_y.cols() != net.d_out() || dev_y.cols() != net.d_out()) {
    throw DimensionError("target dimension " + std::to_string(train_y.cols()) + " does not match network output " +
                         std::to_string(net.d_out()));
  }
  const bool reconstruct = opts.reconstruction_weight != 0.0;
  if (reconstruct && net.d_in() != net.d_out()) {
    throw ConfigError("reconstruction loss needs equal input and output dimensions");
  }

  const OneCycleConfig schedule = cfg.schedule(n);
  Rng shuffle_rng(cfg.seed ^ kShuffleStream);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  AdamW adam;
  auto params = net.parameters();
  net.set_training(true);

  FitResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    double lr = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix x = train_x.gather_rows(idx);
      const Matrix y = train_y.gather_rows(idx);

      const Matrix pred = net.forward(x);
      double loss = mse_loss(pred, y);
      Matrix grad = mse_loss_grad(pred, y);
      if (reconstruct) {
        loss += opts.reconstruction_weight * mse_loss(pred, x);
        const Matrix rg = mse_loss_grad(pred, x);
        auto g = grad.values();
        auto r = rg.values();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += opts.reconstruction_weight * r[k];
      }
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      const GradientSet grads = net.backward(grad);
      lr = onecycle_lr(std::min(step, schedule.total_steps), schedule);
      const auto gspans = grads.spans();
      adam.step(params, gspans, lr, cfg.weight_decay);
      ++step;
      loss_sum += loss * static_cast<double>(end - start);
    }

    const Matrix dev_pred = net.infer(dev_x);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.dev_cosine = mean_row_cosine(dev_pred, dev_y);
    rec.dev_mse = mse_loss(dev_pred, dev_y);
    rec.last_lr = lr;
    if (!std::isfinite(rec.dev_cosine) || !std::isfinite(rec.dev_mse)) {
      throw NumericError("non-finite dev metrics after epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (epoch == 1 || rec.dev_cosine > result.best_dev_cosine) {
      result.best_dev_cosine = rec.dev_cosine;
      result.best_epoch = epoch;
      result.best = net;
    }
  }
  result.best.set_training(false);
  result.steps = step;
  return result;
}

json to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size}, {"epochs", cfg.epochs},       {"weight_decay", cfg.weight_decay},
          {"max_lr", cfg.max_lr},         {"pct_start", cfg.pct_start}, {"div_initial", cfg.div_initial},
          {"div_final", cfg.div_final},   {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      if (key == "batch_size") {
        cfg.batch_size = it->get<std::size_t>();
      } else if (key == "epochs") {
        cfg.epochs = it->get<std::size_t>();
      } else if (key == "weight_decay") {
        cfg.weight_decay = it->get<double>();
      } else if (key == "max_lr") {
        cfg.max_lr = it->get<double>();
      } else if (key == "pct_start") {
        cfg.pct_start = it->get<double>();
      } else if (key == "div_initial") {
        cfg.div_initial = it->get<double>();
      } else if (key == "div_final") {
        cfg.div_final = it->get<double>();
      } else if (key == "seed") {
        cfg.seed = it->get<std::uint64_t>();
      } else {
        throw ConfigError("unknown training key '" + key + "'");
      }
    } catch (const json::exception&) {
      throw ConfigError("training key '" + key + "' has the wrong type");
    }
  }
  return cfg;
}

json to_json(const std::vector<EpochRecord>& history) {
  json out = json::array();
  for (const auto& r : history) {
    out.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"dev_cosine", r.dev_cosine},
                   {"dev_mse", r.dev_mse},
                   {"last_lr", r.last_lr}});
  }
  return out;
}

std::vector<EpochRecord> history_from_json(const json& j) {
  std::vector<EpochRecord> out;
  for (const auto& r : j) {
    out.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                   r.at("dev_cosine").get<double>(), r.at("dev_mse").get<double>(), r.at("last_lr").get<double>()});
  }
  return out;
}

}  // namespace revdict
