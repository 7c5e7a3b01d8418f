#include "tnfn/trainer.hpp"

#include <cmath>
#include <set>

#include "tnfn/rng.hpp"

namespace tnfn {

using nlohmann::json;

LossKind parse_loss(const std::string& name) {
  if (name == "bce") return LossKind::bce;
  if (name == "mse") return LossKind::mse;
  throw std::invalid_argument("unknown loss '" + name + "'");
}

std::string to_string(LossKind kind) { return kind == LossKind::bce ? "bce" : "mse"; }

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || epochs == 0 || batch == 0 || !(warmup_fraction >= 0.0 && warmup_fraction <= 1.0) || !(l2 >= 0.0) ||
      group_size == 0)
    throw std::invalid_argument("train config: lr must be non-negative, epochs, batch, group size positive and warmup in [0, 1]");
}

json TrainConfig::to_json() const {
  return {{"optimizer", tnfn::to_string(optimizer)}, {"lr", lr},     {"epochs", epochs},
          {"batch", batch},                          {"seed", seed}, {"loss", tnfn::to_string(loss)},
          {"warmup_fraction", warmup_fraction},      {"l2", l2},
          {"group_size", group_size}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> keys = {"optimizer", "lr", "epochs", "batch", "seed", "loss", "warmup_fraction", "l2",
                                            "group_size"};
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw std::invalid_argument("train config: unknown key '" + k + "'");
  TrainConfig c;
  try {
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.seed = j.value("seed", c.seed);
    if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.l2 = j.value("l2", c.l2);
    c.group_size = j.value("group_size", c.group_size);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

struct Forward {
  ad::Tape tape;
  VarMap vars;
  ad::Var loss;
};

void build_loss(Forward& f, const Predictor& model, std::span<const WeightSample* const> batch, LossKind kind,
                bool requires_grad) {
  f.vars = bind_params(f.tape, model.params(), requires_grad);
  const ad::Var z = model.logits(f.tape, f.vars, batch);
  const auto zv = z.value().data();
  for (std::size_t i = 0; i < zv.size(); ++i)
    if (!std::isfinite(zv[i]))
      throw NonFiniteLossError("non-finite prediction for sample " + std::to_string(i) + " of the batch", i);
  Tensor targets({batch.size(), 1});
  for (std::size_t i = 0; i < batch.size(); ++i) targets(i, 0) = batch[i]->target;
  f.loss = kind == LossKind::bce ? ad::bce_with_logits(z, targets) : ad::mean_squared_error(ad::sigmoid(z), targets);
}

}  // namespace

LossAndGrads backward(const Predictor& model, std::span<const WeightSample* const> batch, LossKind loss) {
  Forward f;
  build_loss(f, model, batch, loss, true);
  f.tape.backward(f.loss);
  LossAndGrads out;
  out.loss = f.loss.value().item();
  for (const auto& b : model.params().blocks()) out.grads.push_back(f.tape.grad(lookup(f.vars, b.name)));
  return out;
}

double batch_loss(const Predictor& model, std::span<const WeightSample* const> batch, LossKind loss) {
  Forward f;
  build_loss(f, model, batch, loss, false);
  return f.loss.value().item();
}

TrainResult train(Predictor& model, std::span<const WeightSample> data, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double)>& on_epoch) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  OptimizerConfig ocfg;
  ocfg.kind = cfg.optimizer;
  ocfg.l2 = cfg.l2;
  Optimizer opt(ocfg);
  Rng rng(mix_seed(cfg.seed, 2));
  std::vector<Tensor*> slots;
  for (auto& b : model.params().blocks()) slots.push_back(&b.value);

  if (data.size() % cfg.group_size != 0) throw std::invalid_argument("train: dataset size is not a multiple of the group size");
  const std::size_t units = data.size() / cfg.group_size;
  const std::size_t per_epoch = (units + cfg.batch - 1) / cfg.batch;
  const auto warmup =
      static_cast<std::size_t>(std::lround(cfg.warmup_fraction * static_cast<double>(per_epoch * cfg.epochs)));
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(units);
    double sum = 0.0;
    for (std::size_t start = 0; start < units; start += cfg.batch) {
      std::vector<const WeightSample*> batch;
      std::vector<std::size_t> index;
      for (std::size_t u = start; u < std::min(units, start + cfg.batch); ++u)
        for (std::size_t k = 0; k < cfg.group_size; ++k) {
          index.push_back(order[u] * cfg.group_size + k);
          batch.push_back(&data[index.back()]);
        }
      LossAndGrads lg;
      try {
        lg = backward(model, batch, cfg.loss);
      } catch (const NonFiniteLossError& e) {
        const std::size_t idx = index[e.sample()];
        throw NonFiniteLossError("training diverged at epoch " + std::to_string(epoch) + ": non-finite prediction for sample " +
                                     std::to_string(idx),
                                 idx);
      }
      opt.step(slots, lg.grads, warmup_lr(cfg.lr, step++, warmup));
      sum += lg.loss * static_cast<double>(batch.size());
    }
    result.epoch_loss.push_back(sum / static_cast<double>(data.size()));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  return result;
}

}  // namespace tnfn
