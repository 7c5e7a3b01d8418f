#include "tnfn/synthetic_task.hpp"

#include <algorithm>
#include <stdexcept>

namespace tnfn {

void SyntheticTask::validate() const {
  if (classes == 0 || vocab < classes || seq_len < 2) throw std::invalid_argument("SyntheticTask: invalid sizes");
}

std::size_t SyntheticTask::label(const std::vector<std::size_t>& tokens) const {
  std::vector<std::size_t> count(vocab, 0);
  for (auto t : tokens) {
    if (t >= vocab) throw std::invalid_argument("token id out of range");
    ++count[t];
  }
  const auto top = std::max_element(count.begin(), count.end());
  if (std::count(count.begin(), count.end(), *top) != 1) throw std::invalid_argument("most frequent token is tied");
  return static_cast<std::size_t>(top - count.begin()) % classes;
}

TaskDataset make_dataset(const SyntheticTask& task, std::size_t count, std::uint64_t seed) {
  task.validate();
  Rng rng(seed);
  std::vector<std::size_t> classes(count);
  for (std::size_t i = 0; i < count; ++i) classes[i] = i % task.classes;
  const auto order = rng.permutation(count);

  TaskDataset out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = classes[order[i]];
    // Tokens congruent to c mod classes.
    const std::size_t options = (task.vocab - 1 - c) / task.classes + 1;
    const std::size_t target = c + task.classes * rng.below(options);

    std::vector<std::size_t> seq(task.seq_len);
    for (auto& t : seq) t = rng.below(task.vocab);
    std::vector<std::size_t> freq(task.vocab, 0);
    for (auto t : seq) ++freq[t];
    auto strictly_top = [&] {
      for (std::size_t v = 0; v < task.vocab; ++v)
        if (v != target && freq[v] >= freq[target]) return false;
      return true;
    };
    while (!strictly_top()) {
      std::size_t pos = rng.below(task.seq_len);
      while (seq[pos] == target) pos = rng.below(task.seq_len);
      --freq[seq[pos]];
      seq[pos] = target;
      ++freq[target];
    }
    out.labels.push_back(task.label(seq));
    out.tokens.push_back(std::move(seq));
  }
  return out;
}

}  // namespace tnfn
