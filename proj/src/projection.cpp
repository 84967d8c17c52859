#include "revdict/projection.hpp"

#include "revdict/container.hpp"
#include "revdict/error.hpp"

namespace revdict {

using nlohmann::json;

namespace {

constexpr const char* kArch = "projection";

void check_shape(const FeedForwardStack& stack) {
  if (stack.size() != 2 || stack.layer(0).activation != Activation::kTanh ||
      stack.layer(1).activation != Activation::kIdentity) {
    throw DataError("a projection head is exactly Dense+tanh followed by a linear Dense layer");
  }
}

Container to_container(const TrainedHead& t) {
  Container c;
  c.header["arch"] = kArch;
  c.header["layers"] = describe_stack(t.head.stack, c.tensors);
  c.header["meta"] = {{"target", to_string(t.head.target)},
                      {"encoder", t.head.encoder_id},
                      {"seed", t.head.seed},
                      {"d_hidden", t.head.d_hidden()}};
  c.header["best_epoch"] = t.best_epoch;
  c.header["best_dev_cosine"] = t.best_dev_cosine;
  c.header["steps"] = t.steps;
  c.header["config"] = to_json(t.config);
  c.header["history"] = to_json(t.history);
  return c;
}

TrainedHead from_container(const Container& c) {
  if (c.header.value("arch", "") != kArch) throw DataError("artifact is not a projection head");
  TrainedHead t;
  try {
    std::size_t next = 0;
    t.head.stack = restore_stack(c.header.at("layers"), c.tensors, next);
    check_shape(t.head.stack);
    const auto& meta = c.header.at("meta");
    t.head.target = target_kind_from_string(meta.at("target").get<std::string>());
    t.head.encoder_id = meta.at("encoder").get<std::string>();
    t.head.seed = meta.at("seed").get<std::uint64_t>();
    t.best_epoch = c.header.at("best_epoch").get<std::size_t>();
    t.best_dev_cosine = c.header.at("best_dev_cosine").get<double>();
    t.steps = c.header.at("steps").get<std::size_t>();
    t.config = train_config_from_json(c.header.at("config"));
    t.history = history_from_json(c.header.at("history"));
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt projection head: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt projection head: ") + e.what());
  }
  return t;
}

}  // namespace

ProjectionHead init_head(std::size_t d_enc, std::optional<std::size_t> d_hidden, std::size_t d_out,
                         std::uint64_t seed) {
  const std::size_t hidden = d_hidden.value_or(d_enc);
  if (d_enc == 0 || hidden == 0 || d_out == 0) throw DimensionError("projection head dimensions must be >= 1");
  ProjectionHead head;
  head.stack = FeedForwardStack({DenseLayer(d_enc, hidden, Activation::kTanh),
                                 DenseLayer(hidden, d_out, Activation::kIdentity)});
  head.seed = seed;
  glorot_uniform_init(head.stack, seed);
  return head;
}

Matrix predict(const ProjectionHead& head, const Matrix& features) { return head.stack.infer(features); }

TrainedHead train_head(const SupervisedSet& train, const SupervisedSet& dev, const TrainConfig& cfg,
                       const HeadOptions& opts) {
  if (train.size() == 0 || dev.size() == 0) throw DataError("train_head needs non-empty train and dev sets");
  ProjectionHead head = init_head(train.features.cols(), opts.d_hidden, train.targets.cols(), cfg.seed);
  head.target = opts.target;
  head.encoder_id = opts.encoder_id;
  return train_head(std::move(head), train, dev, cfg);
}

TrainedHead train_head(ProjectionHead init, const SupervisedSet& train, const SupervisedSet& dev,
                       const TrainConfig& cfg) {
  check_shape(init.stack);
  FitResult fitted = fit(init.stack, train.features, train.targets, dev.features, dev.targets, cfg);
  TrainedHead out;
  out.head = std::move(init);
  out.head.stack = std::move(fitted.best);
  out.best_epoch = fitted.best_epoch;
  out.best_dev_cosine = fitted.best_dev_cosine;
  out.history = std::move(fitted.history);
  out.steps = fitted.steps;
  out.config = cfg;
  return out;
}

std::string encode_head(const TrainedHead& head) { return encode_container(to_container(head)); }

TrainedHead decode_head(std::string_view bytes) { return from_container(decode_container(bytes)); }

void save_head(const TrainedHead& head, const std::filesystem::path& path) {
  write_container(path, to_container(head));
}

TrainedHead load_head(const std::filesystem::path& path) {
  try {
    return from_container(read_container(path));
  } catch (const DataError& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw DataError(path.string() + ": " + what);
  }
}

}  // namespace revdict
