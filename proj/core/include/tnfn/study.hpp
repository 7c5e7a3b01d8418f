#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnfn/baseline.hpp"
#include "tnfn/nfn_model.hpp"
#include "tnfn/trainer.hpp"
#include "tnfn/zoo.hpp"

namespace tnfn {

struct RecordSplit {
  std::vector<CheckpointRecord> train;
  std::vector<CheckpointRecord> test;
};

/// Assigns whole cells to one side so records of the same run never straddle
/// the split. train_fraction of the cells (rounded, at least one per side)
/// go to train; the cell order is a seeded shuffle.
RecordSplit split_records(const std::vector<CheckpointRecord>& records, double train_fraction, std::uint64_t seed);

struct ExperimentConfig {
  NfnConfig nfn;
  MlpConfig mlp;
  TrainConfig nfn_train;
  TrainConfig mlp_train;
  double split = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Keys: nfn, mlp, nfn_train, mlp_train, split, seed; missing keys keep defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Kendall tau of model predictions against the stored test accuracies.
double evaluate_tau(const Predictor& model, const std::vector<CheckpointRecord>& records);

struct PredictionResult {
  std::size_t train_records = 0;
  std::size_t test_records = 0;
  double tau_nfn = 0.0;
  double tau_mlp = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Trains the NFN and the flattened MLP on split.train and scores both on split.test.
/// Model seeds derive from cfg.seed.
PredictionResult run_prediction(const RecordSplit& split, const ExperimentConfig& cfg,
                                std::unique_ptr<Predictor>* nfn_out = nullptr,
                                std::unique_ptr<Predictor>* mlp_out = nullptr);

struct AugmentRow {
  /// 0 marks the unaugmented baseline; otherwise entries are drawn from [-range, range).
  double range = 0.0;
  double tau_nfn = 0.0;
  double tau_mlp = 0.0;
  double gap = 0.0;
};

struct AugmentReport {
  std::size_t train_records = 0;
  std::size_t test_records = 0;
  std::vector<AugmentRow> rows;

  /// Largest |tau_nfn(r) - tau_nfn(baseline)| over the augmented rows.
  double nfn_spread() const;
  /// tau_mlp(baseline) minus the smallest augmented tau_mlp.
  double mlp_drop() const;
  nlohmann::json to_json() const;
};

inline constexpr const char* kAugmentSchema = "tnfn-augment/1";
inline constexpr const char* kPredictionSchema = "tnfn-prediction/1";

/// Baseline row on the plain split, then per range both models are trained
/// on augment_split(train) and scored on augment_split(test). Each record and
/// its copy share a minibatch (group_size 2).
AugmentReport run_augment_study(const RecordSplit& split, const std::vector<double>& ranges,
                                const ExperimentConfig& cfg,
                                const std::function<void(const AugmentRow&)>& on_row = {});

}  // namespace tnfn
