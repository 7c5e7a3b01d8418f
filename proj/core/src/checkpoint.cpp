#include "tnfn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tnfn {

namespace fs = std::filesystem;

const Tensor& Container::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a.value;
  throw CheckpointError("checkpoint has no array '" + name + "'");
}

const Tensor& Container::array(const std::string& name, const Shape& expected) const {
  const Tensor& t = array(name);
  if (t.shape() != expected)
    throw CheckpointShapeError("array '" + name + "' has shape " + shape_to_string(t.shape()) + ", expected " +
                               shape_to_string(expected));
  return t;
}

namespace {

void to_little_endian(std::vector<char>& bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + 8 <= bytes.size(); i += 8) std::reverse(bytes.begin() + i, bytes.begin() + i + 8);
  }
}

}  // namespace

void write_container(const fs::path& dir, const std::string& schema, const Container& c) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CheckpointError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["schema"] = schema;
  manifest["meta"] = c.meta;
  manifest["arrays"] = nlohmann::json::array();
  std::vector<char> payload;
  for (const auto& a : c.arrays) {
    const std::size_t nbytes = a.value.size() * sizeof(double);
    manifest["arrays"].push_back(
        {{"name", a.name}, {"shape", a.value.shape()}, {"offset", payload.size()}, {"nbytes", nbytes}});
    const std::size_t at = payload.size();
    payload.resize(at + nbytes);
    std::memcpy(payload.data() + at, a.value.data().data(), nbytes);
  }
  to_little_endian(payload);

  std::ofstream bin(dir / "arrays.bin", std::ios::binary | std::ios::trunc);
  bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!bin) throw CheckpointError("cannot write " + (dir / "arrays.bin").string());
  std::ofstream man(dir / "manifest.json", std::ios::trunc);
  man << manifest.dump(1) << '\n';
  if (!man) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
}

Container read_container(const fs::path& dir, const std::string& schema) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw CheckpointError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(man);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  const std::string found = manifest.value("schema", std::string("<missing>"));
  if (found != schema)
    throw CheckpointVersionError("manifest schema '" + found + "' in " + dir.string() + ", expected '" + schema + "'");

  std::ifstream bin(dir / "arrays.bin", std::ios::binary);
  if (!bin) throw CheckpointError("cannot open " + (dir / "arrays.bin").string());
  std::vector<char> payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  to_little_endian(payload);

  Container c;
  c.meta = manifest.value("meta", nlohmann::json::object());
  std::size_t expected_end = 0;
  try {
    for (const auto& entry : manifest.at("arrays")) {
      const std::string name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
      if (shape_size(shape) * sizeof(double) != nbytes || (shape.size() > 0 && shape_size(shape) == 0))
        throw CheckpointShapeError("array '" + name + "' shape " + shape_to_string(shape) + " does not match " +
                                   std::to_string(nbytes) + " bytes");
      if (offset + nbytes > payload.size())
        throw CheckpointTruncatedError("arrays.bin in " + dir.string() + " holds " + std::to_string(payload.size()) +
                                       " bytes but array '" + name + "' needs bytes up to " +
                                       std::to_string(offset + nbytes));
      std::vector<double> data(shape_size(shape));
      std::memcpy(data.data(), payload.data() + offset, nbytes);
      c.arrays.push_back({name, Tensor(shape, std::move(data))});
      expected_end = std::max(expected_end, offset + nbytes);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed array table in " + dir.string() + ": " + e.what());
  }
  if (payload.size() != expected_end)
    throw CheckpointError("arrays.bin in " + dir.string() + " holds " + std::to_string(payload.size()) +
                          " bytes, manifest describes " + std::to_string(expected_end));
  return c;
}

}  // namespace tnfn
