#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tnfn/block.hpp"
#include "tnfn/optimizer.hpp"
#include "tnfn/params.hpp"
#include "tnfn/synthetic_task.hpp"

namespace tnfn {

struct TinyTransformerConfig {
  SyntheticTask task;
  BlockDims block{2, 16, 8, 8, 32};
  std::size_t num_blocks = 2;

  void validate() const;
};

/// Token embedding, a stack of attention blocks without positional encoding,
/// mean pooling over the sequence, then a two-layer ReLU classifier.
struct TinyTransformer {
  TinyTransformerConfig cfg;
  Tensor embedding;  // vocab x D
  std::vector<BlockWeights> blocks;
  Tensor cls_hidden;       // D x D
  Tensor cls_hidden_bias;  // 1 x D
  Tensor cls_out;          // D x classes
  Tensor cls_out_bias;     // 1 x classes

  /// Weights N(0, stddev^2), biases zero.
  static TinyTransformer init(const TinyTransformerConfig& cfg, std::uint64_t seed, double stddev);

  /// 1 x classes logits of one sequence (plain forward, no dropout).
  Tensor logits(const std::vector<std::size_t>& tokens) const;
  std::size_t predict(const std::vector<std::size_t>& tokens) const;

  ParamSet to_params() const;
  static TinyTransformer from_params(const TinyTransformerConfig& cfg, const ParamSet& params);
  /// Classifier weights and biases flattened in declaration order.
  Tensor classifier_flat() const;
};

double accuracy(const TinyTransformer& model, const TaskDataset& data);

/// Batched logits [n, classes] on the tape. hidden_masks holds one mask per
/// block for the MLP hidden units (already divided by the keep probability),
/// or is empty for no dropout.
ad::Var tape_logits(const TinyTransformerConfig& cfg, const VarMap& params,
                    const std::vector<const std::vector<std::size_t>*>& batch,
                    const std::vector<Tensor>& hidden_masks);

struct TrainCell {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  double init_std = 0.3;
  double l2 = 1e-6;
  double dropout = 0.0;
  double train_fraction = 1.0;
  std::uint64_t seed = 0;
};

struct TinyTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 32;
  std::vector<std::size_t> checkpoint_epochs{10, 20, 30};
  bool track_best = true;
};

struct Snapshot {
  std::size_t epoch = 0;
  TinyTransformer model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TinyTrainResult {
  std::vector<Snapshot> checkpoints;
  /// Highest test accuracy over all epochs (earliest on ties).
  std::optional<Snapshot> best;
  std::vector<double> epoch_loss;
  bool diverged = false;
};

TinyTrainResult train_tiny_transformer(const TrainCell& cell, const TinyTransformerConfig& cfg,
                                       const TinyTrainConfig& train_cfg, const TaskDataset& train,
                                       const TaskDataset& test);

}  // namespace tnfn
