#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tnfn/predictor.hpp"
#include "tnfn/study.hpp"
#include "tnfn/verify.hpp"
#include "tnfn/zoo.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 2;
constexpr int kExitUsage = 3;

// Errors in user input or files; mapped to kExitUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad number in ") + what + ": '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

tnfn::BlockDims parse_dims(const std::string& text) {
  const auto v = parse_doubles(text, "--dims");
  if (v.size() != 5) throw UsageError("--dims takes heads,model,key,value,hidden");
  std::size_t d[5];
  for (int i = 0; i < 5; ++i) {
    if (!(v[i] >= 1) || v[i] != static_cast<double>(static_cast<std::size_t>(v[i])))
      throw UsageError("--dims entries must be positive integers");
    d[i] = static_cast<std::size_t>(v[i]);
  }
  tnfn::BlockDims dims{d[0], d[1], d[2], d[3], d[4]};
  tnfn::validate(dims);
  return dims;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct VerifyArgs {
  tnfn::VerifyOptions opts;
  std::string dims = "2,8,4,4,8";
  std::string ranges = "1,100";
  std::string report;
};

int cmd_verify(VerifyArgs& a) {
  a.opts.dims = parse_dims(a.dims);
  a.opts.scale_ranges = parse_doubles(a.ranges, "--scale-range");
  const auto rep = tnfn::run_verify(a.opts);
  for (const auto& p : rep.properties)
    std::printf("%-4s %-44s n=%-5zu %s=%.3e %s %.1e  (%.2fs)\n", p.passed ? "ok" : "FAIL", p.name.c_str(), p.instances,
                p.lower_bound ? "sep" : "err", p.max_error, p.lower_bound ? ">" : "<", p.tolerance, p.seconds);
  if (!a.report.empty()) write_json_file(a.report, rep.to_json());
  std::printf("%s\n", rep.passed() ? "all properties hold" : "some properties failed");
  return rep.passed() ? kExitOk : kExitPropertyFailure;
}

struct ZooArgs {
  std::string config;
  std::string out;
  std::size_t jobs = 1;
};

int cmd_gen_zoo(const ZooArgs& a) {
  tnfn::ZooConfig cfg;
  if (!a.config.empty()) cfg = tnfn::zoo_config_from_json(read_json_file(a.config));
  const auto t0 = std::chrono::steady_clock::now();
  const auto summary = tnfn::generate_zoo(cfg, a.out, a.jobs, [&](std::size_t done, std::size_t total) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "\rcells %zu/%zu  %.0fs", done, total, s);
    if (done == total) std::fprintf(stderr, "\n");
  });
  std::printf("cells %zu, records %zu, diverged %zu\n", summary.cells, summary.records, summary.diverged_cells.size());
  return kExitOk;
}

struct ExperimentArgs {
  std::string zoo;
  std::string config;
  std::string out;
  std::string baseline_out;
  std::string report;
  std::string ranges = "1,10,100";
  double split = -1.0;
  long long seed = -1;
};

tnfn::ExperimentConfig experiment_config(const ExperimentArgs& a) {
  tnfn::ExperimentConfig cfg;
  if (!a.config.empty()) cfg = tnfn::ExperimentConfig::from_json(read_json_file(a.config));
  if (a.split >= 0.0) cfg.split = a.split;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();
  return cfg;
}

int cmd_train_nfn(const ExperimentArgs& a) {
  const auto cfg = experiment_config(a);
  const auto split = tnfn::split_records(tnfn::load_zoo(a.zoo), cfg.split, cfg.seed);
  std::unique_ptr<tnfn::Predictor> nfn, mlp;
  const auto res = tnfn::run_prediction(split, cfg, &nfn, &mlp);
  tnfn::save_predictor(*nfn, a.out);
  if (!a.baseline_out.empty()) tnfn::save_predictor(*mlp, a.baseline_out);
  json rep = res.to_json();
  rep["config"] = cfg.to_json();
  write_json_file(a.report.empty() ? fs::path(a.out) / "report.json" : fs::path(a.report), rep);
  std::printf("train %zu  test %zu  tau_nfn %.4f  tau_mlp %.4f  (%.0fs)\n", res.train_records, res.test_records,
              res.tau_nfn, res.tau_mlp, res.seconds);
  return kExitOk;
}

int cmd_augment_study(const ExperimentArgs& a) {
  const auto cfg = experiment_config(a);
  const auto ranges = parse_doubles(a.ranges, "--ranges");
  const auto split = tnfn::split_records(tnfn::load_zoo(a.zoo), cfg.split, cfg.seed);
  std::printf("%-10s %-10s %-10s %-10s\n", "range", "tau_nfn", "tau_mlp", "gap");
  const auto rep = tnfn::run_augment_study(split, ranges, cfg, [](const tnfn::AugmentRow& r) {
    if (r.range == 0.0)
      std::printf("%-10s ", "none");
    else
      std::printf("%-10g ", r.range);
    std::printf("%-10.4f %-10.4f %-10.4f\n", r.tau_nfn, r.tau_mlp, r.gap);
    std::fflush(stdout);
  });
  json j = rep.to_json();
  j["config"] = cfg.to_json();
  write_json_file(a.out, j);
  std::printf("nfn spread %.4f  mlp drop %.4f\n", rep.nfn_spread(), rep.mlp_drop());
  return kExitOk;
}

int cmd_predict(const std::string& model_dir, const std::string& checkpoint_dir) {
  const auto model = tnfn::load_predictor(model_dir);
  const auto record = tnfn::load_checkpoint(checkpoint_dir);
  std::printf("%.6f\n", tnfn::predict_one(*model, tnfn::sample_from_record(record)));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetry checks, model zoos and weight-space predictors for small transformers"};
  app.require_subcommand(1);

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the symmetry property suite");
  verify->add_option("--seed", va.opts.seed, "Seed")->capture_default_str();
  verify->add_option("--dims", va.dims, "heads,model,key,value,hidden")->capture_default_str();
  verify->add_option("--instances", va.opts.instances, "Instances per property")->capture_default_str();
  verify->add_option("--scale-range", va.ranges, "Comma-separated r: matrix entries in [-r, r]")
      ->capture_default_str();
  verify->add_option("--report", va.report, "Write the JSON report here");
  verify->add_flag("--break-relu-placement", va.opts.break_relu_placement,
                   "Also rectify query factors (must make equivariance fail)");
  verify->add_option("--tol-unit", va.opts.tol_unit, "Tolerance for r <= 1")->capture_default_str();
  verify->add_option("--tol-wide", va.opts.tol_wide, "Tolerance for r > 1")->capture_default_str();
  verify->add_option("--tol-products", va.opts.tol_products, "Multi-head and product tolerance")
      ->capture_default_str();
  verify->add_option("--tol-layernorm", va.opts.tol_layernorm, "Layer-norm tolerance")->capture_default_str();
  verify->add_option("--layernorm-rows", va.opts.layernorm_rows, "Random rows per layer-norm check")
      ->capture_default_str();
  verify->add_option("--witness-threshold", va.opts.witness_threshold, "Required witness magnitude")
      ->capture_default_str();
  verify->add_option("--witness-instances", va.opts.witness_instances, "Instances of the witness search")
      ->capture_default_str();
  verify->add_option("--mlp-gap", va.opts.mlp_gap, "Required non-invariance of the flattened MLP")
      ->capture_default_str();

  ZooArgs za;
  auto* gen = app.add_subcommand("gen-zoo", "Train the transformer grid and write checkpoints");
  gen->add_option("--config", za.config, "Zoo config JSON (defaults otherwise)");
  gen->add_option("--out", za.out, "Output directory")->required();
  gen->add_option("--jobs", za.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  ExperimentArgs ta;
  auto* tr = app.add_subcommand("train-nfn", "Train the NFN and the flattened-MLP baseline on a zoo");
  tr->add_option("--zoo", ta.zoo, "Zoo directory")->required();
  tr->add_option("--split", ta.split, "Train fraction of cells (default 0.8)");
  tr->add_option("--config", ta.config, "Experiment config JSON");
  tr->add_option("--out", ta.out, "NFN model directory")->required();
  tr->add_option("--baseline-out", ta.baseline_out, "Also save the MLP baseline here");
  tr->add_option("--report", ta.report, "Report path (default <out>/report.json)");
  tr->add_option("--seed", ta.seed, "Seed (overrides the config)");

  std::string model_dir, checkpoint_dir;
  auto* pr = app.add_subcommand("predict", "Predict the test accuracy of one checkpoint");
  pr->add_option("--model", model_dir, "Model directory")->required();
  pr->add_option("--checkpoint", checkpoint_dir, "Checkpoint record directory")->required();

  ExperimentArgs aa;
  auto* au = app.add_subcommand("augment-study", "Compare NFN and MLP under group-action augmentation");
  au->add_option("--zoo", aa.zoo, "Zoo directory")->required();
  au->add_option("--ranges", aa.ranges, "Comma-separated r")->capture_default_str();
  au->add_option("--out", aa.out, "Report path")->required();
  au->add_option("--config", aa.config, "Experiment config JSON");
  au->add_option("--split", aa.split, "Train fraction of cells (default 0.8)");
  au->add_option("--seed", aa.seed, "Seed (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*verify) return cmd_verify(va);
    if (*gen) return cmd_gen_zoo(za);
    if (*tr) return cmd_train_nfn(ta);
    if (*pr) return cmd_predict(model_dir, checkpoint_dir);
    if (*au) return cmd_augment_study(aa);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
