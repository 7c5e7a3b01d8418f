#include "tnfn/zoo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "tnfn/group.hpp"
#include "tnfn/rng.hpp"

namespace tnfn {

namespace fs = std::filesystem;
using nlohmann::json;

void ZooConfig::validate() const {
  if (optimizers.empty() || init_stds.empty() || dropouts.empty() || l2s.empty() || train_fractions.empty())
    throw std::invalid_argument("zoo config: every grid axis needs at least one value");
  for (auto k : optimizers) {
    auto it = learning_rates.find(k);
    if (it == learning_rates.end() || it->second.empty())
      throw std::invalid_argument("zoo config: no learning rates for optimizer " + to_string(k));
    for (double lr : it->second)
      if (!(lr > 0.0)) throw std::invalid_argument("zoo config: learning rates must be positive");
  }
  for (double s : init_stds)
    if (!(s > 0.0)) throw std::invalid_argument("zoo config: init std must be positive");
  for (double d : dropouts)
    if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("zoo config: dropout must lie in [0, 1)");
  for (double l : l2s)
    if (!(l >= 0.0)) throw std::invalid_argument("zoo config: L2 must be non-negative");
  for (double f : train_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("zoo config: train fraction must lie in (0, 1]");
  if (training.epochs == 0 || training.batch == 0 || train_size == 0 || test_size == 0)
    throw std::invalid_argument("zoo config: epochs, batch and split sizes must be positive");
  for (auto e : training.checkpoint_epochs)
    if (e == 0 || e > training.epochs) throw std::invalid_argument("zoo config: checkpoint epoch out of range");
  model.validate();
}

std::vector<TrainCell> ZooConfig::cells() const {
  std::vector<TrainCell> out;
  for (auto k : optimizers)
    for (double lr : learning_rates.at(k))
      for (double s : init_stds)
        for (double d : dropouts)
          for (double l : l2s)
            for (double f : train_fractions) {
              TrainCell c;
              c.optimizer = k;
              c.lr = lr;
              c.init_std = s;
              c.dropout = d;
              c.l2 = l;
              c.train_fraction = f;
              c.seed = mix_seed(seed, out.size());
              out.push_back(c);
            }
  return out;
}

namespace {

const std::set<std::string> kConfigKeys = {"optimizers", "learning_rates", "init_stds",  "dropouts",   "l2",
                                           "train_fractions", "epochs", "batch", "checkpoint_epochs",
                                           "track_best", "train_size", "test_size", "seed", "model"};

json model_json(const TinyTransformerConfig& m) {
  return {{"vocab", m.task.vocab},   {"seq_len", m.task.seq_len}, {"classes", m.task.classes},
          {"heads", m.block.heads},  {"model", m.block.model},    {"key", m.block.key},
          {"value", m.block.value},  {"hidden", m.block.hidden},  {"blocks", m.num_blocks}};
}

TinyTransformerConfig model_from_json(const json& j, TinyTransformerConfig m) {
  m.task.vocab = j.value("vocab", m.task.vocab);
  m.task.seq_len = j.value("seq_len", m.task.seq_len);
  m.task.classes = j.value("classes", m.task.classes);
  m.block.heads = j.value("heads", m.block.heads);
  m.block.model = j.value("model", m.block.model);
  m.block.key = j.value("key", m.block.key);
  m.block.value = j.value("value", m.block.value);
  m.block.hidden = j.value("hidden", m.block.hidden);
  m.num_blocks = j.value("blocks", m.num_blocks);
  return m;
}

json cell_json(const TrainCell& c) {
  return {{"optimizer", to_string(c.optimizer)}, {"lr", c.lr}, {"init_std", c.init_std}, {"l2", c.l2},
          {"dropout", c.dropout}, {"train_fraction", c.train_fraction}, {"seed", c.seed}};
}

TrainCell cell_from_json(const json& j) {
  TrainCell c;
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.lr = j.at("lr").get<double>();
  c.init_std = j.at("init_std").get<double>();
  c.l2 = j.at("l2").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string record_dir_name(const CheckpointRecord& r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cell%04zu_", r.cell_index);
  return buf + r.tag;
}

}  // namespace

ZooConfig zoo_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("zoo config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kConfigKeys.count(key)) throw std::invalid_argument("zoo config: unknown key '" + key + "'");
  ZooConfig cfg;
  try {
    if (j.contains("optimizers")) {
      cfg.optimizers.clear();
      for (const auto& name : j.at("optimizers")) cfg.optimizers.push_back(parse_optimizer(name.get<std::string>()));
    }
    if (j.contains("learning_rates")) {
      const auto& lr = j.at("learning_rates");
      if (lr.is_array()) {
        for (auto k : cfg.optimizers) cfg.learning_rates[k] = lr.get<std::vector<double>>();
      } else {
        cfg.learning_rates.clear();
        for (const auto& [name, list] : lr.items()) cfg.learning_rates[parse_optimizer(name)] = list.get<std::vector<double>>();
      }
    }
    if (j.contains("init_stds")) cfg.init_stds = j.at("init_stds").get<std::vector<double>>();
    if (j.contains("dropouts")) cfg.dropouts = j.at("dropouts").get<std::vector<double>>();
    if (j.contains("l2")) cfg.l2s = j.at("l2").get<std::vector<double>>();
    if (j.contains("train_fractions")) cfg.train_fractions = j.at("train_fractions").get<std::vector<double>>();
    cfg.training.epochs = j.value("epochs", cfg.training.epochs);
    cfg.training.batch = j.value("batch", cfg.training.batch);
    if (j.contains("checkpoint_epochs"))
      cfg.training.checkpoint_epochs = j.at("checkpoint_epochs").get<std::vector<std::size_t>>();
    cfg.training.track_best = j.value("track_best", cfg.training.track_best);
    cfg.train_size = j.value("train_size", cfg.train_size);
    cfg.test_size = j.value("test_size", cfg.test_size);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"), cfg.model);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("zoo config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json to_json(const ZooConfig& cfg) {
  json j;
  j["optimizers"] = json::array();
  for (auto k : cfg.optimizers) j["optimizers"].push_back(to_string(k));
  j["learning_rates"] = json::object();
  for (const auto& [k, list] : cfg.learning_rates) j["learning_rates"][to_string(k)] = list;
  j["init_stds"] = cfg.init_stds;
  j["dropouts"] = cfg.dropouts;
  j["l2"] = cfg.l2s;
  j["train_fractions"] = cfg.train_fractions;
  j["epochs"] = cfg.training.epochs;
  j["batch"] = cfg.training.batch;
  j["checkpoint_epochs"] = cfg.training.checkpoint_epochs;
  j["track_best"] = cfg.training.track_best;
  j["train_size"] = cfg.train_size;
  j["test_size"] = cfg.test_size;
  j["seed"] = cfg.seed;
  j["model"] = model_json(cfg.model);
  return j;
}

void save_checkpoint(const CheckpointRecord& r, const fs::path& dir) {
  for (double a : {r.train_accuracy, r.test_accuracy})
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("checkpoint accuracy outside [0, 1]");
  Container c;
  c.meta = {{"dims", model_json(r.weights.cfg)},
            {"hyperparameters", cell_json(r.cell)},
            {"cell", r.cell_index},
            {"tag", r.tag},
            {"epoch", r.epoch},
            {"train_accuracy", r.train_accuracy},
            {"test_accuracy", r.test_accuracy}};
  ParamSet params = r.weights.to_params();
  for (auto& b : params.blocks()) {
    if (!all_finite(b.value)) throw std::invalid_argument("checkpoint array " + b.name + " is not finite");
    c.arrays.push_back({b.name, std::move(b.value)});
  }
  write_container(dir, kCheckpointSchema, c);
}

CheckpointRecord load_checkpoint(const fs::path& dir) {
  const Container c = read_container(dir, kCheckpointSchema);
  CheckpointRecord r;
  try {
    const TinyTransformerConfig cfg = model_from_json(c.meta.at("dims"), TinyTransformerConfig{});
    ParamSet params;
    for (const auto& a : c.arrays) params.add(a.name, a.value);
    try {
      r.weights = TinyTransformer::from_params(cfg, params);
    } catch (const ShapeError& e) {
      throw CheckpointShapeError(dir.string() + ": " + e.what());
    } catch (const std::out_of_range& e) {
      throw CheckpointError(dir.string() + ": " + e.what());
    }
    r.cell = cell_from_json(c.meta.at("hyperparameters"));
    r.cell_index = c.meta.at("cell").get<std::size_t>();
    r.tag = c.meta.at("tag").get<std::string>();
    r.epoch = c.meta.at("epoch").get<std::size_t>();
    r.train_accuracy = c.meta.at("train_accuracy").get<double>();
    r.test_accuracy = c.meta.at("test_accuracy").get<double>();
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  return r;
}

std::vector<CheckpointRecord> train_cell(const ZooConfig& cfg, std::size_t cell_index, const TaskDataset& train,
                                         const TaskDataset& test, bool* diverged) {
  const auto cells = cfg.cells();
  const TrainCell& cell = cells.at(cell_index);
  TinyTrainResult res = train_tiny_transformer(cell, cfg.model, cfg.training, train, test);
  if (diverged) *diverged = res.diverged;
  std::vector<CheckpointRecord> out;
  if (res.diverged) return out;
  for (auto& s : res.checkpoints)
    out.push_back({std::move(s.model), cell, cell_index, "epoch" + std::to_string(s.epoch), s.epoch,
                   s.train_accuracy, s.test_accuracy});
  if (res.best) {
    const auto& ce = cfg.training.checkpoint_epochs;
    if (std::find(ce.begin(), ce.end(), res.best->epoch) == ce.end())
      out.push_back({std::move(res.best->model), cell, cell_index, "best", res.best->epoch,
                     res.best->train_accuracy, res.best->test_accuracy});
  }
  return out;
}

ZooSummary generate_zoo(const ZooConfig& cfg, const fs::path& out, std::size_t jobs,
                        const std::function<void(std::size_t, std::size_t)>& progress) {
  cfg.validate();
  if (jobs == 0) throw std::invalid_argument("generate_zoo: jobs must be at least 1");
  const auto start = std::chrono::steady_clock::now();
  const TaskDataset train = make_dataset(cfg.model.task, cfg.train_size, mix_seed(cfg.seed, kTrainSplitSeed));
  const TaskDataset test = make_dataset(cfg.model.task, cfg.test_size, kTestSplitSeed);
  const std::size_t total = cfg.cells().size();

  std::error_code ec;
  fs::create_directories(out / "records", ec);
  if (ec) throw CheckpointError("cannot create " + (out / "records").string() + ": " + ec.message());

  std::vector<std::vector<std::string>> written(total);
  std::vector<char> diverged(total, 0);
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      try {
        bool div = false;
        const auto records = train_cell(cfg, i, train, test, &div);
        std::vector<std::string> names;
        for (const auto& r : records) {
          const std::string name = "records/" + record_dir_name(r);
          save_checkpoint(r, out / name);
          names.push_back(name);
        }
        std::lock_guard lock(mu);
        written[i] = std::move(names);
        diverged[i] = div ? 1 : 0;
        ++done;
        if (progress) progress(done, total);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = total;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, total); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  ZooSummary summary;
  summary.cells = total;
  std::ofstream index(out / "index.txt", std::ios::trunc);
  for (std::size_t i = 0; i < total; ++i) {
    if (diverged[i]) summary.diverged_cells.push_back(i);
    for (const auto& name : written[i]) {
      index << name << '\n';
      ++summary.records;
    }
  }
  if (!index) throw CheckpointError("cannot write " + (out / "index.txt").string());

  std::ofstream(out / "zoo_config.json") << to_json(cfg).dump(2) << '\n';
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json s = {{"schema", "nfnzoo-summary/1"},
            {"cells", summary.cells},
            {"records", summary.records},
            {"diverged_cells", summary.diverged_cells},
            {"seconds", summary.seconds}};
  std::ofstream(out / "summary.json") << s.dump(2) << '\n';
  return summary;
}

std::vector<fs::path> read_index(const fs::path& dir) {
  std::ifstream in(dir / "index.txt");
  if (!in) throw CheckpointError("cannot open " + (dir / "index.txt").string());
  std::vector<fs::path> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(dir / line);
  }
  return out;
}

std::vector<CheckpointRecord> load_zoo(const fs::path& dir) {
  std::vector<CheckpointRecord> out;
  for (const auto& p : read_index(dir)) out.push_back(load_checkpoint(p));
  return out;
}

std::vector<CheckpointRecord> augment_split(const std::vector<CheckpointRecord>& records, double lo, double hi,
                                            std::uint64_t seed) {
  std::vector<CheckpointRecord> out;
  out.reserve(2 * records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out.push_back(r);
    CheckpointRecord copy = r;
    copy.tag = r.tag + "+g";
    for (std::size_t b = 0; b < copy.weights.blocks.size(); ++b) {
      const auto g = sample_group_element(mix_seed(seed, i * copy.weights.blocks.size() + b), copy.weights.cfg.block,
                                          lo, hi);
      copy.weights.blocks[b] = act(g, r.weights.blocks[b]);
    }
    out.push_back(std::move(copy));
  }
  return out;
}

}  // namespace tnfn
