#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnfn/block.hpp"
#include "tnfn/params.hpp"
#include "tnfn/zoo.hpp"

namespace tnfn {

/// Network weights seen by an accuracy predictor: the attention blocks plus
/// the flattened embedding table and classifier, with the target accuracy.
struct WeightSample {
  std::vector<BlockWeights> blocks;
  Tensor embedding;   // 1 x n
  Tensor classifier;  // 1 x m
  double target = 0.0;
};

WeightSample sample_from_record(const CheckpointRecord& record);
std::vector<WeightSample> samples_from_records(const std::vector<CheckpointRecord>& records);

/// Shapes a predictor is built for.
struct InputLayout {
  BlockDims dims;
  std::size_t num_blocks = 0;
  std::size_t embedding_size = 0;
  std::size_t classifier_size = 0;

  static InputLayout of(const WeightSample& sample);
  void check(const WeightSample& sample) const;
};

/// A trainable map from weights to a predicted accuracy in (0, 1).
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string kind() const = 0;
  virtual nlohmann::json config() const = 0;
  virtual const InputLayout& layout() const = 0;
  virtual ParamSet& params() = 0;
  virtual const ParamSet& params() const = 0;

  /// Pre-sigmoid outputs [b, 1]; vars holds params() bound on the same tape.
  virtual ad::Var logits(ad::Tape& tape, const VarMap& vars, std::span<const WeightSample* const> batch) const = 0;
};

/// sigmoid(logits), evaluated in batches without gradients.
std::vector<double> predict(const Predictor& model, std::span<const WeightSample> samples, std::size_t batch = 32);
double predict_one(const Predictor& model, const WeightSample& sample);

inline constexpr const char* kModelSchema = "nfnmodel/1";

/// Stored in the checkpoint container format with meta {kind, config, layout}.
void save_predictor(const Predictor& model, const std::filesystem::path& dir);
std::unique_ptr<Predictor> load_predictor(const std::filesystem::path& dir);

}  // namespace tnfn
