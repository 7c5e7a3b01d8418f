#include "tnfn/predictor.hpp"

#include <cmath>
#include <stdexcept>

#include "tnfn/baseline.hpp"
#include "tnfn/checkpoint.hpp"
#include "tnfn/nfn_model.hpp"

namespace tnfn {

using nlohmann::json;

WeightSample sample_from_record(const CheckpointRecord& record) {
  WeightSample s;
  s.blocks = record.weights.blocks;
  const Tensor& e = record.weights.embedding;
  s.embedding = e.reshaped({1, e.size()});
  s.classifier = record.weights.classifier_flat();
  s.target = record.test_accuracy;
  return s;
}

std::vector<WeightSample> samples_from_records(const std::vector<CheckpointRecord>& records) {
  std::vector<WeightSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(sample_from_record(r));
  return out;
}

InputLayout InputLayout::of(const WeightSample& sample) {
  if (sample.blocks.empty()) throw ShapeError("weight sample has no blocks");
  InputLayout l;
  l.dims = sample.blocks.front().dims;
  l.num_blocks = sample.blocks.size();
  l.embedding_size = sample.embedding.size();
  l.classifier_size = sample.classifier.size();
  l.check(sample);
  return l;
}

void InputLayout::check(const WeightSample& sample) const {
  if (sample.blocks.size() != num_blocks || sample.embedding.size() != embedding_size ||
      sample.classifier.size() != classifier_size)
    throw ShapeError("weight sample does not match the predictor's input layout");
  for (const auto& b : sample.blocks) {
    if (!(b.dims == dims)) throw ShapeError("weight sample block dims differ from the predictor's");
    b.check();
  }
}

std::vector<double> predict(const Predictor& model, std::span<const WeightSample> samples, std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("predict: batch must be positive");
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<const WeightSample*> ptrs;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch); ++i) ptrs.push_back(&samples[i]);
    ad::Tape tape;
    const VarMap vars = bind_params(tape, model.params(), false);
    const Tensor z = model.logits(tape, vars, ptrs).value();
    for (double v : z.data()) out.push_back(1.0 / (1.0 + std::exp(-v)));
  }
  return out;
}

double predict_one(const Predictor& model, const WeightSample& sample) {
  return predict(model, std::span<const WeightSample>(&sample, 1)).front();
}

namespace {

json layout_json(const InputLayout& l) {
  return {{"heads", l.dims.heads},
          {"model", l.dims.model},
          {"key", l.dims.key},
          {"value", l.dims.value},
          {"hidden", l.dims.hidden},
          {"blocks", l.num_blocks},
          {"embedding_size", l.embedding_size},
          {"classifier_size", l.classifier_size}};
}

InputLayout layout_from_json(const json& j) {
  InputLayout l;
  l.dims = {j.at("heads").get<std::size_t>(), j.at("model").get<std::size_t>(), j.at("key").get<std::size_t>(),
            j.at("value").get<std::size_t>(), j.at("hidden").get<std::size_t>()};
  l.num_blocks = j.at("blocks").get<std::size_t>();
  l.embedding_size = j.at("embedding_size").get<std::size_t>();
  l.classifier_size = j.at("classifier_size").get<std::size_t>();
  return l;
}

}  // namespace

void save_predictor(const Predictor& model, const std::filesystem::path& dir) {
  Container c;
  c.meta = {{"kind", model.kind()}, {"config", model.config()}, {"layout", layout_json(model.layout())}};
  for (const auto& b : model.params().blocks()) c.arrays.push_back({b.name, b.value});
  write_container(dir, kModelSchema, c);
}

std::unique_ptr<Predictor> load_predictor(const std::filesystem::path& dir) {
  const Container c = read_container(dir, kModelSchema);
  std::unique_ptr<Predictor> model;
  try {
    const std::string kind = c.meta.at("kind").get<std::string>();
    const InputLayout layout = layout_from_json(c.meta.at("layout"));
    if (kind == "nfn")
      model = std::make_unique<NfnModel>(NfnConfig::from_json(c.meta.at("config")), layout, 0);
    else if (kind == "mlp")
      model = std::make_unique<MlpBaseline>(MlpConfig::from_json(c.meta.at("config")), layout, 0);
    else
      throw CheckpointError("unknown model kind '" + kind + "' in " + dir.string());
  } catch (const json::exception& e) {
    throw CheckpointError("malformed model metadata in " + dir.string() + ": " + e.what());
  }
  if (c.arrays.size() != model->params().blocks().size())
    throw CheckpointShapeError("model in " + dir.string() + " has " + std::to_string(c.arrays.size()) +
                               " arrays, expected " + std::to_string(model->params().blocks().size()));
  for (auto& b : model->params().blocks()) b.value = c.array(b.name, b.value.shape());
  return model;
}

}  // namespace tnfn
