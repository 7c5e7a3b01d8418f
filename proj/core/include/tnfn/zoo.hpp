#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnfn/checkpoint.hpp"
#include "tnfn/tiny_transformer.hpp"

namespace tnfn {

inline constexpr const char* kCheckpointSchema = "nfnzoo/1";

/// Hyperparameter grid and run settings of a zoo.
struct ZooConfig {
  std::vector<OptimizerKind> optimizers{OptimizerKind::sgd, OptimizerKind::sgd_momentum, OptimizerKind::adam,
                                        OptimizerKind::rmsprop};
  /// Learning rates per optimizer.
  std::map<OptimizerKind, std::vector<double>> learning_rates{
      {OptimizerKind::sgd, {1e-3, 1e-2, 3e-2, 1e-1}},
      {OptimizerKind::sgd_momentum, {1e-3, 1e-2, 3e-2, 1e-1}},
      {OptimizerKind::adam, {1e-4, 1e-3, 3e-3, 1e-2}},
      {OptimizerKind::rmsprop, {1e-4, 1e-3, 3e-3, 1e-2}}};
  std::vector<double> init_stds{0.1, 0.3, 0.5};
  std::vector<double> dropouts{0.0, 0.2};
  std::vector<double> l2s{1e-6, 1e-2};
  std::vector<double> train_fractions{1.0};
  TinyTrainConfig training;
  TinyTransformerConfig model;
  std::size_t train_size = 1000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on an empty grid or out-of-range values.
  void validate() const;
  /// Cells in a fixed nested order (optimizer, lr, init std, dropout, L2, train fraction).
  std::vector<TrainCell> cells() const;
};

ZooConfig zoo_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ZooConfig& cfg);

struct CheckpointRecord {
  TinyTransformer weights;
  TrainCell cell;
  std::size_t cell_index = 0;
  /// "epoch<N>", "best", or an augmentation tag.
  std::string tag;
  std::size_t epoch = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

void save_checkpoint(const CheckpointRecord& record, const std::filesystem::path& dir);
CheckpointRecord load_checkpoint(const std::filesystem::path& dir);

/// Records of one cell: the configured checkpoint epochs, then the best epoch
/// unless it coincides with one of them. Empty when the run diverged.
std::vector<CheckpointRecord> train_cell(const ZooConfig& cfg, std::size_t cell_index, const TaskDataset& train,
                                         const TaskDataset& test, bool* diverged = nullptr);

struct ZooSummary {
  std::size_t cells = 0;
  std::size_t records = 0;
  std::vector<std::size_t> diverged_cells;
  /// Wall-clock time of generate_zoo.
  double seconds = 0.0;
};

/// Trains every cell with up to jobs worker threads and writes
///   out/records/<name>/{manifest.json, arrays.bin}, out/index.txt,
///   out/zoo_config.json, out/summary.json.
/// progress (optional) is called after each cell, possibly from worker threads
/// but never concurrently.
ZooSummary generate_zoo(const ZooConfig& cfg, const std::filesystem::path& out, std::size_t jobs,
                        const std::function<void(std::size_t done, std::size_t total)>& progress = {});

/// Reads index.txt (newline-delimited record paths relative to dir).
std::vector<std::filesystem::path> read_index(const std::filesystem::path& dir);
std::vector<CheckpointRecord> load_zoo(const std::filesystem::path& dir);

/// Each record followed by a copy whose blocks are acted on by independent
/// group elements with matrix entries in [lo, hi); labels are copied.
std::vector<CheckpointRecord> augment_split(const std::vector<CheckpointRecord>& records, double lo, double hi,
                                            std::uint64_t seed);

}  // namespace tnfn
