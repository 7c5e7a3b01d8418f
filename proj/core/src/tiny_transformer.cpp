#include "tnfn/tiny_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tnfn/rng.hpp"

namespace tnfn {

void TinyTransformerConfig::validate() const {
  task.validate();
  tnfn::validate(block);
  if (num_blocks == 0) throw std::invalid_argument("TinyTransformerConfig: need at least one block");
}

namespace {

std::string head_name(std::size_t b, std::size_t i, const char* what) {
  return "block" + std::to_string(b) + ".head" + std::to_string(i) + "." + what;
}

std::string block_name(std::size_t b, const char* what) { return "block" + std::to_string(b) + "." + what; }

}  // namespace

TinyTransformer TinyTransformer::init(const TinyTransformerConfig& cfg, std::uint64_t seed, double stddev) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t D = cfg.block.model, C = cfg.task.classes;
  TinyTransformer m;
  m.cfg = cfg;
  m.embedding = gaussian_tensor(rng, {cfg.task.vocab, D}, stddev);
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    BlockWeights w = BlockWeights::zeros(cfg.block);
    for (auto& h : w.heads) {
      h.query = gaussian_tensor(rng, h.query.shape(), stddev);
      h.key = gaussian_tensor(rng, h.key.shape(), stddev);
      h.value = gaussian_tensor(rng, h.value.shape(), stddev);
      h.output = gaussian_tensor(rng, h.output.shape(), stddev);
    }
    w.mlp_in = gaussian_tensor(rng, w.mlp_in.shape(), stddev);
    w.mlp_out = gaussian_tensor(rng, w.mlp_out.shape(), stddev);
    m.blocks.push_back(std::move(w));
  }
  m.cls_hidden = gaussian_tensor(rng, {D, D}, stddev);
  m.cls_hidden_bias = Tensor({1, D});
  m.cls_out = gaussian_tensor(rng, {D, C}, stddev);
  m.cls_out_bias = Tensor({1, C});
  return m;
}

Tensor TinyTransformer::logits(const std::vector<std::size_t>& tokens) const {
  const std::size_t D = cfg.block.model;
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  Tensor x({tokens.size(), D});
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    if (tokens[r] >= cfg.task.vocab) throw std::invalid_argument("token id out of range");
    for (std::size_t c = 0; c < D; ++c) x(r, c) = embedding(tokens[r], c);
  }
  for (const auto& w : blocks) x = attn_forward(x, w);
  Tensor pooled({1, D});
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t c = 0; c < D; ++c) pooled(0, c) += x(r, c);
  pooled *= 1.0 / static_cast<double>(x.dim(0));
  Tensor hidden = matmul(pooled, cls_hidden) + cls_hidden_bias;
  hidden = relu(hidden);
  return matmul(hidden, cls_out) + cls_out_bias;
}

std::size_t TinyTransformer::predict(const std::vector<std::size_t>& tokens) const {
  const Tensor z = logits(tokens);
  std::size_t best = 0;
  for (std::size_t c = 1; c < z.dim(1); ++c)
    if (z(0, c) > z(0, best)) best = c;
  return best;
}

ParamSet TinyTransformer::to_params() const {
  ParamSet p;
  p.add("embedding", embedding);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& w = blocks[b];
    for (std::size_t i = 0; i < w.heads.size(); ++i) {
      p.add(head_name(b, i, "query"), w.heads[i].query);
      p.add(head_name(b, i, "key"), w.heads[i].key);
      p.add(head_name(b, i, "value"), w.heads[i].value);
      p.add(head_name(b, i, "output"), w.heads[i].output);
    }
    p.add(block_name(b, "mlp_in"), w.mlp_in);
    p.add(block_name(b, "bias_in"), w.bias_in);
    p.add(block_name(b, "mlp_out"), w.mlp_out);
    p.add(block_name(b, "bias_out"), w.bias_out);
  }
  p.add("cls.hidden", cls_hidden);
  p.add("cls.hidden_bias", cls_hidden_bias);
  p.add("cls.out", cls_out);
  p.add("cls.out_bias", cls_out_bias);
  return p;
}

TinyTransformer TinyTransformer::from_params(const TinyTransformerConfig& cfg, const ParamSet& p) {
  cfg.validate();
  const std::size_t D = cfg.block.model, C = cfg.task.classes;
  auto get = [&](const std::string& name, const Shape& shape) {
    const Tensor& t = p.at(name);
    if (t.shape() != shape)
      throw ShapeError("parameter " + name + " has shape " + shape_to_string(t.shape()) + ", expected " +
                       shape_to_string(shape));
    return t;
  };
  TinyTransformer m;
  m.cfg = cfg;
  m.embedding = get("embedding", {cfg.task.vocab, D});
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    BlockWeights w = BlockWeights::zeros(cfg.block);
    for (std::size_t i = 0; i < w.heads.size(); ++i) {
      w.heads[i].query = get(head_name(b, i, "query"), w.heads[i].query.shape());
      w.heads[i].key = get(head_name(b, i, "key"), w.heads[i].key.shape());
      w.heads[i].value = get(head_name(b, i, "value"), w.heads[i].value.shape());
      w.heads[i].output = get(head_name(b, i, "output"), w.heads[i].output.shape());
    }
    w.mlp_in = get(block_name(b, "mlp_in"), w.mlp_in.shape());
    w.bias_in = get(block_name(b, "bias_in"), w.bias_in.shape());
    w.mlp_out = get(block_name(b, "mlp_out"), w.mlp_out.shape());
    w.bias_out = get(block_name(b, "bias_out"), w.bias_out.shape());
    m.blocks.push_back(std::move(w));
  }
  m.cls_hidden = get("cls.hidden", {D, D});
  m.cls_hidden_bias = get("cls.hidden_bias", {1, D});
  m.cls_out = get("cls.out", {D, C});
  m.cls_out_bias = get("cls.out_bias", {1, C});
  return m;
}

Tensor TinyTransformer::classifier_flat() const {
  std::vector<double> v;
  for (const Tensor* t : {&cls_hidden, &cls_hidden_bias, &cls_out, &cls_out_bias})
    v.insert(v.end(), t->data().begin(), t->data().end());
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

double accuracy(const TinyTransformer& model, const TaskDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += model.predict(data.tokens[i]) == data.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ad::Var tape_logits(const TinyTransformerConfig& cfg, const VarMap& params,
                    const std::vector<const std::vector<std::size_t>*>& batch,
                    const std::vector<Tensor>& hidden_masks) {
  if (batch.empty()) throw std::invalid_argument("tape_logits: empty batch");
  if (!hidden_masks.empty() && hidden_masks.size() != cfg.num_blocks)
    throw std::invalid_argument("tape_logits: need one dropout mask per block");
  const std::size_t n = batch.size(), L = batch.front()->size();
  std::vector<std::size_t> index;
  for (const auto* seq : batch) {
    if (seq->size() != L) throw ShapeError("tape_logits: sequences in a batch must share one length");
    index.insert(index.end(), seq->begin(), seq->end());
  }
  ad::Var x = ad::gather_rows(lookup(params, "embedding"), index);
  ad::Tape& tape = *x.tape;
  const double inv_sqrt_key = 1.0 / std::sqrt(static_cast<double>(cfg.block.key));

  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    std::vector<ad::Var> head_terms;
    for (std::size_t i = 0; i < cfg.block.heads; ++i) {
      const ad::Var q = ad::matmul(x, lookup(params, head_name(b, i, "query")));
      const ad::Var k = ad::matmul(x, lookup(params, head_name(b, i, "key")));
      const ad::Var v = ad::matmul(x, lookup(params, head_name(b, i, "value")));
      std::vector<ad::Var> rows;
      for (std::size_t s = 0; s < n; ++s) {
        const ad::Var qs = ad::slice_rows(q, s * L, L);
        const ad::Var ks = ad::slice_rows(k, s * L, L);
        const ad::Var vs = ad::slice_rows(v, s * L, L);
        const ad::Var scores = ad::scale(ad::matmul(qs, ad::transpose(ks)), inv_sqrt_key);
        rows.push_back(ad::matmul(ad::softmax_rows(scores), vs));
      }
      head_terms.push_back(ad::matmul(ad::concat_rows(rows), lookup(params, head_name(b, i, "output"))));
    }
    const ad::Var mh = ad::add_n(head_terms);
    ad::Var hidden = ad::relu(ad::add_row_bias(ad::matmul(ad::layer_norm_rows(mh), lookup(params, block_name(b, "mlp_in"))),
                                               lookup(params, block_name(b, "bias_in"))));
    if (!hidden_masks.empty()) hidden = ad::apply_mask(hidden, hidden_masks[b]);
    x = ad::layer_norm_rows(ad::add_row_bias(ad::matmul(hidden, lookup(params, block_name(b, "mlp_out"))),
                                             lookup(params, block_name(b, "bias_out"))));
  }

  Tensor pool({n, n * L});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t r = 0; r < L; ++r) pool(s, s * L + r) = 1.0 / static_cast<double>(L);
  const ad::Var pooled = ad::matmul(tape.constant(std::move(pool)), x);
  const ad::Var hidden =
      ad::relu(ad::add_row_bias(ad::matmul(pooled, lookup(params, "cls.hidden")), lookup(params, "cls.hidden_bias")));
  return ad::add_row_bias(ad::matmul(hidden, lookup(params, "cls.out")), lookup(params, "cls.out_bias"));
}

TinyTrainResult train_tiny_transformer(const TrainCell& cell, const TinyTransformerConfig& cfg,
                                       const TinyTrainConfig& train_cfg, const TaskDataset& train,
                                       const TaskDataset& test) {
  cfg.validate();
  if (!(cell.lr >= 0.0) || !(cell.init_std > 0.0) || !(cell.l2 >= 0.0) || !(cell.dropout >= 0.0 && cell.dropout < 1.0) ||
      !(cell.train_fraction > 0.0 && cell.train_fraction <= 1.0))
    throw std::invalid_argument("train_tiny_transformer: invalid hyperparameter cell");
  if (train_cfg.epochs == 0 || train_cfg.batch == 0) throw std::invalid_argument("epochs and batch must be positive");
  const std::size_t n_train =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cell.train_fraction * static_cast<double>(train.size()))));

  TinyTrainResult result;
  TinyTransformer model = TinyTransformer::init(cfg, cell.seed, cell.init_std);
  ParamSet params = model.to_params();
  OptimizerConfig ocfg;
  ocfg.kind = cell.optimizer;
  ocfg.l2 = cell.l2;
  Optimizer opt(ocfg);
  Rng rng(mix_seed(cell.seed, 1));
  const double keep = 1.0 - cell.dropout;

  std::vector<Tensor*> slots;
  for (auto& b : params.blocks()) slots.push_back(&b.value);

  double best_acc = -1.0;
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs && !result.diverged; ++epoch) {
    const auto order = rng.permutation(n_train);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_train; start += train_cfg.batch) {
      const std::size_t stop = std::min(n_train, start + train_cfg.batch);
      std::vector<const std::vector<std::size_t>*> seqs;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < stop; ++i) {
        seqs.push_back(&train.tokens[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      std::vector<Tensor> masks;
      if (cell.dropout > 0.0) {
        const std::size_t rows = seqs.size() * cfg.task.seq_len;
        for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
          Tensor m({rows, cfg.block.hidden});
          for (auto& v : m.data()) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
          masks.push_back(std::move(m));
        }
      }
      ad::Tape tape;
      const VarMap vars = bind_params(tape, params, true);
      const ad::Var loss = ad::cross_entropy(tape_logits(cfg, vars, seqs, masks), labels);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        result.diverged = true;
        break;
      }
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (const auto& b : params.blocks()) grads.push_back(tape.grad(lookup(vars, b.name)));
      opt.step(slots, grads, cell.lr);
      loss_sum += lv;
      ++batches;
    }
    for (const auto& b : params.blocks())
      if (!all_finite(b.value)) result.diverged = true;
    if (result.diverged) break;
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));

    const bool at_checkpoint = std::find(train_cfg.checkpoint_epochs.begin(), train_cfg.checkpoint_epochs.end(),
                                         epoch) != train_cfg.checkpoint_epochs.end();
    if (!at_checkpoint && !train_cfg.track_best) continue;
    model = TinyTransformer::from_params(cfg, params);
    const double test_acc = accuracy(model, test);
    if (train_cfg.track_best && test_acc > best_acc) {
      best_acc = test_acc;
      result.best = Snapshot{epoch, model, 0.0, test_acc};
    }
    if (at_checkpoint) {
      TaskDataset used;
      used.tokens.assign(train.tokens.begin(), train.tokens.begin() + static_cast<std::ptrdiff_t>(n_train));
      used.labels.assign(train.labels.begin(), train.labels.begin() + static_cast<std::ptrdiff_t>(n_train));
      result.checkpoints.push_back(Snapshot{epoch, model, accuracy(model, used), test_acc});
    }
  }
  if (result.best) {
    TaskDataset used;
    used.tokens.assign(train.tokens.begin(), train.tokens.begin() + static_cast<std::ptrdiff_t>(n_train));
    used.labels.assign(train.labels.begin(), train.labels.begin() + static_cast<std::ptrdiff_t>(n_train));
    result.best->train_accuracy = accuracy(result.best->model, used);
  }
  return result;
}

}  // namespace tnfn
