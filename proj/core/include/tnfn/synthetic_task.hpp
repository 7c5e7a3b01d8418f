#pragma once

#include <cstdint>
#include <vector>

#include "tnfn/rng.hpp"

namespace tnfn {

/// Token sequences labelled by (most frequent token) mod classes.
struct SyntheticTask {
  std::size_t vocab = 8;
  std::size_t seq_len = 16;
  std::size_t classes = 4;

  void validate() const;
  /// Label of a sequence; throws std::invalid_argument unless the most
  /// frequent token is unique.
  std::size_t label(const std::vector<std::size_t>& tokens) const;
};

struct TaskDataset {
  std::vector<std::vector<std::size_t>> tokens;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

/// Class of sample i is i mod classes (then shuffled), so classes are balanced
/// to within one sample. The sequence is uniform noise in which a token of the
/// chosen class is made strictly the most frequent.
TaskDataset make_dataset(const SyntheticTask& task, std::size_t count, std::uint64_t seed);

/// Seeds of the fixed splits shared by every zoo cell.
inline constexpr std::uint64_t kTrainSplitSeed = 0x7a11;
inline constexpr std::uint64_t kTestSplitSeed = 0x7e57;

}  // namespace tnfn
