// dada: train, evaluate, gradcheck and synth front end.
//
// Exit codes: 0 ok, 1 verification failure, 2 configuration error, 3 runtime/numeric/IO error.

#include "dada/checkpoint.hpp"
#include "dada/gradcheck_suite.hpp"
#include "dada/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dada;

namespace {

constexpr int kOk = 0, kVerifyFailed = 1, kConfigError = 2, kRuntimeError = 3;

std::vector<std::pair<std::string, std::string>> parse_sets(const std::vector<std::string> &sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto &s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int run_train(const TrainArgs &args) {
  auto overrides = parse_sets(args.sets);
  if (args.seed) overrides.emplace_back("train.seed", std::to_string(*args.seed));
  if (const char *env = std::getenv("DADA_OUTPUT_DIR"); env && *env) overrides.emplace_back("output.dir", env);
  const RunConfig cfg = RunConfig::load(args.config, overrides);

  const fs::path out_dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  const std::string resolved = cfg.to_ini();
  write_text(out_dir / "resolved-config.snapshot", resolved);

  const RunData data = load_run_data(cfg);
  Trainer trainer(cfg.hp, resolve_dims(cfg, data.train), data.train);

  std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write '" + (out_dir / "metrics.jsonl").string() + "'");
  TrainCallbacks cb;
  cb.on_record = [&](const MetricsRecord &rec) {
    const std::string line = rec.to_json().dump();
    metrics << line << '\n';
    metrics.flush();
    if (!metrics) throw IoError("write failed for metrics.jsonl");
    if (!args.quiet) std::cerr << line << '\n';
  };
  cb.on_epoch_end = [&](int epoch, const Trainer &t) {
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.hp.epochs)
      save_checkpoint((out_dir / ("epoch-" + std::to_string(epoch) + ".ckpt")).string(), t.models(), resolved,
                      const_cast<Trainer &>(t).rng());
  };
  const auto records = train(cfg, trainer, data, cb);
  save_checkpoint((out_dir / "final.ckpt").string(), trainer.models(), resolved, trainer.rng());
  std::cout << records.back().to_json().dump() << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;  // overrides the embedded config's data section when given
  std::vector<std::string> sets;
  std::string csv;
  std::string split = "test";
  std::string dump;
};

int run_evaluate(const EvalArgs &args) {
  Checkpoint ck = load_checkpoint(args.checkpoint);
  auto overrides = parse_sets(args.sets);
  if (!args.csv.empty()) {
    overrides.emplace_back("data.source", "csv");
    overrides.emplace_back("data.path", args.csv);
  }
  const RunConfig cfg = args.config.empty() ? RunConfig::parse(ck.config_ini, overrides) : RunConfig::load(args.config, overrides);

  FeatureDataset test, probe;
  if (args.split == "all") {
    test = cfg.data.source == "csv" ? load_csv(cfg.data.path) : synth_generate(cfg.data.synth);
    probe = test;
  } else if (args.split == "test" || args.split == "train") {
    RunData data = load_run_data(cfg);
    test = args.split == "test" ? data.test : data.train;
    probe = data.train;
  } else {
    throw ConfigError("--split must be test, train or all; got '" + args.split + "'");
  }

  const Index expected = ck.models.generator.mlp.input_dim();
  if (test.dim() != expected)
    throw DimensionError("checkpoint expects input dim " + std::to_string(expected) + " but dataset has dim " +
                         std::to_string(test.dim()));

  const EvalResult r = evaluate_models(ck.models, test, probe, cfg.ks, cfg.probe_seed);
  nlohmann::ordered_json j;
  for (const auto &[k, v] : r.recall_at) j["recall@" + std::to_string(k)] = v;
  j["map@r"] = r.map_at_r;
  j["domain_probe_acc"] = r.domain_probe_acc;
  if (!args.dump.empty()) dump_embeddings(RetrievalIndex{embed(ck.models.generator, test.features), test.labels}, args.dump);
  std::cout << j.dump() << '\n';
  return kOk;
}

struct GradArgs {
  std::string scope = "all";
  double tol = 1e-4;
  double h = 1e-5;
  int seeds = 3;
};

int run_gradcheck(const GradArgs &args) {
  if (!(args.tol > 0.0) || !(args.h > 0.0)) throw ConfigError("--tol and --step must be positive");
  if (args.seeds < 1) throw ConfigError("--seeds must be >= 1");
  const auto results = run_gradcheck_suite(args.scope, args.h, args.tol, args.seeds);
  bool ok = true;
  for (const auto &r : results) {
    const bool pass = r.report.passed();
    ok = ok && pass;
    std::printf("%-28s seed %-5llu max_rel_error %.3e  %s\n", r.scope.c_str(), static_cast<unsigned long long>(r.seed),
                r.report.max_error(), pass ? "ok" : "FAIL");
  }
  std::printf("%s (%zu checks, tol %.1e)\n", ok ? "gradcheck passed" : "gradcheck FAILED", results.size(), args.tol);
  return ok ? kOk : kVerifyFailed;
}

int run_synth(const SynthSpec &spec, const std::string &out) {
  spec.validate();
  write_csv(out, synth_generate(spec));
  return kOk;
}

template <typename F>
int guarded(F &&f) {
  try {
    return f();
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError &e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DimensionError &e) {
    std::cerr << "dimension mismatch: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError &e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const IoError &e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Proxy-based metric learning with adversarial domain alignment"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto *train_cmd = app.add_subcommand("train", "Train from an INI config; writes metrics.jsonl, final.ckpt, resolved-config.snapshot");
  train_cmd->add_option("config", train_args.config, "INI config file")->required();
  train_cmd->add_option("--set", train_args.sets, "Override a key: section.key=value (repeatable)");
  train_cmd->add_option("--seed", train_args.seed, "Training seed (overrides train.seed)");
  train_cmd->add_flag("--quiet", train_args.quiet, "Do not echo metrics to stderr");

  EvalArgs eval_args;
  auto *eval_cmd = app.add_subcommand("evaluate", "Retrieval metrics and domain probe for a checkpoint; prints JSON");
  eval_cmd->add_option("checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", eval_args.config, "Config providing the dataset (default: the one stored in the checkpoint)");
  eval_cmd->add_option("--set", eval_args.sets, "Override a key: section.key=value (repeatable)");
  eval_cmd->add_option("--csv", eval_args.csv, "Evaluate on this CSV dataset instead");
  eval_cmd->add_option("--split", eval_args.split, "test, train or all")->capture_default_str();
  eval_cmd->add_option("--dump-embeddings", eval_args.dump, "Write embeddings and labels as CSV");

  GradArgs grad_args;
  auto *grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op and objective");
  grad_cmd->add_option("--scope", grad_args.scope, "all or one check name")->capture_default_str();
  grad_cmd->add_option("--tol", grad_args.tol, "Relative tolerance")->capture_default_str();
  grad_cmd->add_option("--step", grad_args.h, "Central-difference step")->capture_default_str();
  grad_cmd->add_option("--seeds", grad_args.seeds, "Random instances per check")->capture_default_str();
  grad_cmd->add_flag_callback("--list", [] {
    for (const auto &name : gradcheck_scopes()) std::cout << name << '\n';
    std::exit(kOk);
  }, "List check names");

  SynthSpec synth_spec;
  std::string synth_out;
  auto *synth_cmd = app.add_subcommand("synth", "Write a Gaussian-cluster dataset as CSV");
  synth_cmd->add_option("--classes", synth_spec.num_classes)->capture_default_str();
  synth_cmd->add_option("--dim", synth_spec.dim)->capture_default_str();
  synth_cmd->add_option("--per-class", synth_spec.samples_per_class)->capture_default_str();
  synth_cmd->add_option("--center-scale", synth_spec.center_scale)->capture_default_str();
  synth_cmd->add_option("--noise", synth_spec.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--seed", synth_spec.seed)->capture_default_str();
  synth_cmd->add_option("out", synth_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*train_cmd) return guarded([&] { return run_train(train_args); });
  if (*eval_cmd) return guarded([&] { return run_evaluate(eval_args); });
  if (*grad_cmd) return guarded([&] { return run_gradcheck(grad_args); });
  if (*synth_cmd) return guarded([&] { return run_synth(synth_spec, synth_out); });
  return kConfigError;
}
