#include "revdict/align.hpp"

#include <iostream>

#include "revdict/container.hpp"
#include "revdict/error.hpp"

namespace revdict {

using nlohmann::json;

namespace {

constexpr const char* kArch = "aligner";

void check_shape(const FeedForwardStack& net) {
  const bool ok = net.size() == 4 && net.layer(0).activation == Activation::kReLU &&
                  net.layer(1).activation == Activation::kIdentity && net.layer(2).activation == Activation::kReLU &&
                  net.layer(3).activation == Activation::kIdentity;
  if (!ok) throw DataError("an aligner is Dense+ReLU, Dense, Dense+ReLU, Dense");
}

Matrix run_layers(const FeedForwardStack& net, std::size_t first, std::size_t last, const Matrix& x) {
  std::vector<DenseLayer> layers(net.layers().begin() + static_cast<std::ptrdiff_t>(first),
                                 net.layers().begin() + static_cast<std::ptrdiff_t>(last));
  return FeedForwardStack(std::move(layers)).infer(x);
}

Matrix stack_rows(std::span<const AlignedPair> pairs, bool source) {
  std::vector<Vector> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.push_back(source ? p.src_embedding : p.tgt_embedding);
  return Matrix::from_rows(rows);
}

}  // namespace

AlignerDims AlignerAE::dims() const {
  return {net.d_in(), net.layer(0).d_out(), net.layer(1).d_out(), net.d_out()};
}

Matrix AlignerAE::encode(const Matrix& src) const { return run_layers(net, 0, 2, src); }

Matrix AlignerAE::decode(const Matrix& code) const { return run_layers(net, 2, 4, code); }

AlignerAE init_aligner(const AlignerDims& dims, std::uint64_t seed) {
  if (dims.d_in == 0 || dims.width == 0 || dims.bottleneck == 0 || dims.d_out == 0) {
    throw DimensionError("aligner dimensions must be >= 1");
  }
  AlignerAE ae;
  ae.net = FeedForwardStack({DenseLayer(dims.d_in, dims.width, Activation::kReLU),
                             DenseLayer(dims.width, dims.bottleneck, Activation::kIdentity),
                             DenseLayer(dims.bottleneck, dims.width, Activation::kReLU),
                             DenseLayer(dims.width, dims.d_out, Activation::kIdentity)});
  ae.seed = seed;
  glorot_uniform_init(ae.net, seed);
  return ae;
}

Matrix align_forward(const AlignerAE& ae, const Matrix& src) { return ae.net.infer(src); }

TrainedAligner train_aligner(std::span<const AlignedPair> train, std::span<const AlignedPair> dev,
                             const TrainConfig& cfg, AlignerOptions opts) {
  if (train.empty() || dev.empty()) throw DataError("aligner training needs non-empty train and dev pairs");
  const Matrix train_x = stack_rows(train, true);
  const Matrix train_y = stack_rows(train, false);
  const Matrix dev_x = stack_rows(dev, true);
  const Matrix dev_y = stack_rows(dev, false);
  opts.dims.d_in = train_x.cols();
  opts.dims.d_out = train_y.cols();
  AlignerAE ae = init_aligner(opts.dims, cfg.seed);
  if (ae.unusual_bottleneck()) {
    std::cerr << "warning: aligner bottleneck " << opts.dims.bottleneck << " is not narrower than its intermediate width "
              << opts.dims.width << "\n";
  }
  FitResult fitted = fit(ae.net, train_x, train_y, dev_x, dev_y, cfg, {opts.reconstruction_weight});
  TrainedAligner out;
  out.aligner = std::move(ae);
  out.aligner.net = std::move(fitted.best);
  out.best_epoch = fitted.best_epoch;
  out.best_dev_cosine = fitted.best_dev_cosine;
  out.history = std::move(fitted.history);
  out.steps = fitted.steps;
  out.config = cfg;
  out.reconstruction_weight = opts.reconstruction_weight;
  return out;
}

std::vector<AlignedPair> assemble_pairs(std::span<const MappedEntry> entries, TargetKind kind,
                                        const Matrix& source_rows) {
  if (source_rows.rows() != entries.size()) throw DimensionError("one source row per mapped entry is required");
  std::vector<AlignedPair> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& target = kind == TargetKind::kElectra ? entries[i].electra : entries[i].sgns;
    if (!target) continue;
    auto src = source_rows.row(i);
    out.push_back({entries[i].source_id, entries[i].target_id, Vector(src.begin(), src.end()), *target});
  }
  return out;
}

AlignmentPipeline::AlignmentPipeline(TrainedHead source_head, TrainedAligner aligner)
    : head_(std::move(source_head)), aligner_(std::move(aligner)) {
  if (head_.head.d_out() != aligner_.aligner.net.d_in()) {
    throw DimensionError("source head output " + std::to_string(head_.head.d_out()) +
                         " does not match aligner input " + std::to_string(aligner_.aligner.net.d_in()));
  }
}

Matrix crosslingual_predict(const AlignmentPipeline& pipeline, const Matrix& src_features) {
  return align_forward(pipeline.aligner().aligner, predict(pipeline.source_head().head, src_features));
}

void save_aligner(const TrainedAligner& t, const std::filesystem::path& path) {
  Container c;
  c.header["arch"] = kArch;
  c.header["layers"] = describe_stack(t.aligner.net, c.tensors);
  c.header["seed"] = t.aligner.seed;
  c.header["best_epoch"] = t.best_epoch;
  c.header["best_dev_cosine"] = t.best_dev_cosine;
  c.header["steps"] = t.steps;
  c.header["config"] = to_json(t.config);
  c.header["reconstruction_weight"] = t.reconstruction_weight;
  c.header["history"] = to_json(t.history);
  write_container(path, c);
}

TrainedAligner load_aligner(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.header.value("arch", "") != kArch) throw DataError(path.string() + ": artifact is not an aligner");
  TrainedAligner t;
  try {
    std::size_t next = 0;
    t.aligner.net = restore_stack(c.header.at("layers"), c.tensors, next);
    check_shape(t.aligner.net);
    t.aligner.seed = c.header.at("seed").get<std::uint64_t>();
    t.best_epoch = c.header.at("best_epoch").get<std::size_t>();
    t.best_dev_cosine = c.header.at("best_dev_cosine").get<double>();
    t.steps = c.header.at("steps").get<std::size_t>();
    t.config = train_config_from_json(c.header.at("config"));
    t.reconstruction_weight = c.header.at("reconstruction_weight").get<double>();
    t.history = history_from_json(c.header.at("history"));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": corrupt aligner: " + e.what());
  }
  return t;
}

}  // namespace revdict
