#include "tnfn/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

#include "tnfn/kendall.hpp"
#include "tnfn/rng.hpp"

namespace tnfn {

using nlohmann::json;

RecordSplit split_records(const std::vector<CheckpointRecord>& records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split fraction must lie strictly between 0 and 1");
  std::vector<std::size_t> cells;
  for (const auto& r : records)
    if (std::find(cells.begin(), cells.end(), r.cell_index) == cells.end()) cells.push_back(r.cell_index);
  std::sort(cells.begin(), cells.end());
  if (cells.size() < 2) throw std::invalid_argument("split needs records from at least two cells");
  Rng rng(seed);
  const auto order = rng.permutation(cells.size());
  auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(cells.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, cells.size() - 1);
  std::map<std::size_t, bool> in_train;
  for (std::size_t i = 0; i < cells.size(); ++i) in_train[cells[order[i]]] = i < n_train;
  RecordSplit s;
  for (const auto& r : records) (in_train.at(r.cell_index) ? s.train : s.test).push_back(r);
  return s;
}

void ExperimentConfig::validate() const {
  if (!(split > 0.0 && split < 1.0)) throw std::invalid_argument("experiment split must lie in (0, 1)");
  nfn_train.validate();
  mlp_train.validate();
}

json ExperimentConfig::to_json() const {
  return {{"nfn", nfn.to_json()},
          {"mlp", mlp.to_json()},
          {"nfn_train", nfn_train.to_json()},
          {"mlp_train", mlp_train.to_json()},
          {"split", split},
          {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  static const char* keys[] = {"nfn", "mlp", "nfn_train", "mlp_train", "split", "seed"};
  for (const auto& [k, v] : j.items())
    if (std::find(std::begin(keys), std::end(keys), k) == std::end(keys))
      throw std::invalid_argument("unknown experiment config key: " + k);
  ExperimentConfig c;
  if (j.contains("nfn")) c.nfn = NfnConfig::from_json(j["nfn"]);
  if (j.contains("mlp")) c.mlp = MlpConfig::from_json(j["mlp"]);
  if (j.contains("nfn_train")) c.nfn_train = TrainConfig::from_json(j["nfn_train"]);
  if (j.contains("mlp_train")) c.mlp_train = TrainConfig::from_json(j["mlp_train"]);
  c.split = j.value("split", c.split);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

double evaluate_tau(const Predictor& model, const std::vector<CheckpointRecord>& records) {
  const auto samples = samples_from_records(records);
  const auto pred = predict(model, samples);
  std::vector<double> truth;
  truth.reserve(samples.size());
  for (const auto& s : samples) truth.push_back(s.target);
  return kendall_tau(pred, truth);
}

json PredictionResult::to_json() const {
  return {{"schema", kPredictionSchema},
          {"train_records", train_records},
          {"test_records", test_records},
          {"tau_nfn", tau_nfn},
          {"tau_mlp", tau_mlp},
          {"gap", tau_nfn - tau_mlp},
          {"seconds", seconds}};
}

namespace {

struct Trained {
  std::unique_ptr<Predictor> nfn;
  std::unique_ptr<Predictor> mlp;
};

Trained train_both(const std::vector<CheckpointRecord>& train_records, const ExperimentConfig& cfg,
                   std::size_t group_size) {
  const auto data = samples_from_records(train_records);
  if (data.empty()) throw std::invalid_argument("no training records");
  const auto layout = InputLayout::of(data.front());
  Trained t;
  t.nfn = std::make_unique<NfnModel>(cfg.nfn, layout, mix_seed(cfg.seed, 11));
  t.mlp = std::make_unique<MlpBaseline>(cfg.mlp, layout, mix_seed(cfg.seed, 12));
  TrainConfig nt = cfg.nfn_train;
  nt.seed = mix_seed(cfg.seed, 13);
  nt.group_size = group_size;
  TrainConfig mt = cfg.mlp_train;
  mt.seed = mix_seed(cfg.seed, 14);
  mt.group_size = group_size;
  train(*t.nfn, data, nt);
  train(*t.mlp, data, mt);
  return t;
}

}  // namespace

PredictionResult run_prediction(const RecordSplit& split, const ExperimentConfig& cfg,
                                std::unique_ptr<Predictor>* nfn_out, std::unique_ptr<Predictor>* mlp_out) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto t = train_both(split.train, cfg, 1);
  PredictionResult r;
  r.train_records = split.train.size();
  r.test_records = split.test.size();
  r.tau_nfn = evaluate_tau(*t.nfn, split.test);
  r.tau_mlp = evaluate_tau(*t.mlp, split.test);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (nfn_out) *nfn_out = std::move(t.nfn);
  if (mlp_out) *mlp_out = std::move(t.mlp);
  return r;
}

double AugmentReport::nfn_spread() const {
  if (rows.empty()) return 0.0;
  double worst = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) worst = std::max(worst, std::abs(rows[i].tau_nfn - rows[0].tau_nfn));
  return worst;
}

double AugmentReport::mlp_drop() const {
  if (rows.size() < 2) return 0.0;
  double lowest = rows[1].tau_mlp;
  for (std::size_t i = 2; i < rows.size(); ++i) lowest = std::min(lowest, rows[i].tau_mlp);
  return rows[0].tau_mlp - lowest;
}

json AugmentReport::to_json() const {
  json table = json::array();
  for (const auto& r : rows)
    table.push_back({{"range", r.range}, {"tau_nfn", r.tau_nfn}, {"tau_mlp", r.tau_mlp}, {"gap", r.gap}});
  return {{"schema", kAugmentSchema},
          {"train_records", train_records},
          {"test_records", test_records},
          {"rows", table},
          {"nfn_spread", nfn_spread()},
          {"mlp_drop", mlp_drop()}};
}

AugmentReport run_augment_study(const RecordSplit& split, const std::vector<double>& ranges,
                                const ExperimentConfig& cfg, const std::function<void(const AugmentRow&)>& on_row) {
  cfg.validate();
  for (double r : ranges)
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("augmentation ranges must be positive");
  AugmentReport rep;
  rep.train_records = split.train.size();
  rep.test_records = split.test.size();

  auto emit = [&](double range, const std::vector<CheckpointRecord>& train_set,
                  const std::vector<CheckpointRecord>& test_set, std::size_t group) {
    const auto t = train_both(train_set, cfg, group);
    AugmentRow row;
    row.range = range;
    row.tau_nfn = evaluate_tau(*t.nfn, test_set);
    row.tau_mlp = evaluate_tau(*t.mlp, test_set);
    row.gap = row.tau_nfn - row.tau_mlp;
    rep.rows.push_back(row);
    if (on_row) on_row(row);
  };

  emit(0.0, split.train, split.test, 1);
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double r = ranges[i];
    const auto train_aug = augment_split(split.train, -r, r, mix_seed(cfg.seed, 100 + 2 * i));
    const auto test_aug = augment_split(split.test, -r, r, mix_seed(cfg.seed, 101 + 2 * i));
    emit(r, train_aug, test_aug, 2);
  }
  return rep;
}

}  // namespace tnfn
