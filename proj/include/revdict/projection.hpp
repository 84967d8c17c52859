#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "revdict/data.hpp"
#include "revdict/math.hpp"
#include "revdict/optim.hpp"
#include "revdict/trainer.hpp"

namespace revdict {

// Dense(d_enc -> d_hidden, tanh) followed by Dense(d_hidden -> d_out).
struct ProjectionHead {
  FeedForwardStack stack;
  TargetKind target = TargetKind::kElectra;
  std::string encoder_id;
  std::uint64_t seed = 0;

  std::size_t d_enc() const { return stack.d_in(); }
  std::size_t d_hidden() const { return stack.layer(0).d_out(); }
  std::size_t d_out() const { return stack.d_out(); }
};

// Glorot-uniform weights and zero biases; d_hidden defaults to d_enc.
ProjectionHead init_head(std::size_t d_enc, std::optional<std::size_t> d_hidden, std::size_t d_out,
                         std::uint64_t seed);

// Inference only.
Matrix predict(const ProjectionHead& head, const Matrix& features);

struct TrainedHead {
  ProjectionHead head;  // weights of the best epoch
  std::size_t best_epoch = 0;
  double best_dev_cosine = 0.0;
  std::vector<EpochRecord> history;
  std::size_t steps = 0;
  TrainConfig config;
};

struct HeadOptions {
  std::optional<std::size_t> d_hidden;
  TargetKind target = TargetKind::kElectra;
  std::string encoder_id;
};

// Initialises a head from cfg.seed, then trains it.
TrainedHead train_head(const SupervisedSet& train, const SupervisedSet& dev, const TrainConfig& cfg,
                       const HeadOptions& opts = {});
TrainedHead train_head(ProjectionHead init, const SupervisedSet& train, const SupervisedSet& dev,
                       const TrainConfig& cfg);

void save_head(const TrainedHead& head, const std::filesystem::path& path);
TrainedHead load_head(const std::filesystem::path& path);
std::string encode_head(const TrainedHead& head);
TrainedHead decode_head(std::string_view bytes);

}  // namespace revdict
