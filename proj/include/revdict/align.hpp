#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "revdict/data.hpp"
#include "revdict/math.hpp"
#include "revdict/optim.hpp"
#include "revdict/projection.hpp"
#include "revdict/trainer.hpp"

namespace revdict {

struct AlignerDims {
  std::size_t d_in = 256;
  std::size_t width = 128;  // intermediate layer inside each half
  std::size_t bottleneck = 32;
  std::size_t d_out = 256;
};

// Encoder Dense(d_in->width) ReLU Dense(width->bottleneck), then decoder
// Dense(bottleneck->width) ReLU Dense(width->d_out), held as one 4-layer stack.
struct AlignerAE {
  FeedForwardStack net;
  std::uint64_t seed = 0;

  AlignerDims dims() const;
  // A bottleneck at least as wide as the intermediate layer compresses nothing.
  bool unusual_bottleneck() const { return dims().bottleneck >= dims().width; }

  Matrix encode(const Matrix& src) const;
  Matrix decode(const Matrix& code) const;
};

AlignerAE init_aligner(const AlignerDims& dims = {}, std::uint64_t seed = 0);

Matrix align_forward(const AlignerAE& ae, const Matrix& src);

struct TrainedAligner {
  AlignerAE aligner;
  std::size_t best_epoch = 0;
  double best_dev_cosine = 0.0;
  std::vector<EpochRecord> history;
  std::size_t steps = 0;
  TrainConfig config;
  double reconstruction_weight = 0.0;
};

struct AlignerOptions {
  AlignerDims dims;
  // Extra weight on mse(output, src); 0 trains the cross-lingual map only.
  double reconstruction_weight = 0.0;
};

// Same loop contract as train_head: MSE against the target embeddings with
// AdamW, one-cycle lr and best-dev-cosine checkpointing. dims.d_in/d_out are
// taken from the pairs.
TrainedAligner train_aligner(std::span<const AlignedPair> train, std::span<const AlignedPair> dev,
                             const TrainConfig& cfg, AlignerOptions opts = {});

// Pairs built from mapped entries that carry the chosen target embedding;
// source_rows[i] is the source-space vector for entries[i].
std::vector<AlignedPair> assemble_pairs(std::span<const MappedEntry> entries, TargetKind kind,
                                        const Matrix& source_rows);

// Source-language head followed by the aligner.
class AlignmentPipeline {
 public:
  AlignmentPipeline(TrainedHead source_head, TrainedAligner aligner);

  const TrainedHead& source_head() const noexcept { return head_; }
  const TrainedAligner& aligner() const noexcept { return aligner_; }

 private:
  TrainedHead head_;
  TrainedAligner aligner_;
};

Matrix crosslingual_predict(const AlignmentPipeline& pipeline, const Matrix& src_features);

void save_aligner(const TrainedAligner& aligner, const std::filesystem::path& path);
TrainedAligner load_aligner(const std::filesystem::path& path);

}  // namespace revdict
