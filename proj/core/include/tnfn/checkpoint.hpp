#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnfn/tensor.hpp"

namespace tnfn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Manifest schema string differs from the one the reader expects.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// arrays.bin is shorter than the manifest's array table requires.
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// A manifest shape disagrees with its byte count or with what the reader expects.
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct NamedArray {
  std::string name;
  Tensor value;
};

/// A directory holding manifest.json and arrays.bin. The manifest carries
/// "schema", caller metadata under "meta", and an "arrays" table of
/// {name, shape, offset, nbytes}; arrays.bin is the concatenation of the
/// arrays as row-major little-endian float64.
struct Container {
  nlohmann::json meta;
  std::vector<NamedArray> arrays;

  const Tensor& array(const std::string& name) const;
  /// Like array(), but also checks the stored shape.
  const Tensor& array(const std::string& name, const Shape& expected) const;
};

void write_container(const std::filesystem::path& dir, const std::string& schema, const Container& c);
Container read_container(const std::filesystem::path& dir, const std::string& schema);

}  // namespace tnfn
