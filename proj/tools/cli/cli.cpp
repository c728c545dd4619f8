#include "cli/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "cafe/checkpoint.hpp"
#include "cafe/errors.hpp"
#include "cafe/hashing.hpp"
#include "cafe/synthetic_benchmark.hpp"
#include "cafe/trainer.hpp"
#include "cafe/verify/gradcheck.hpp"
#include "cli/run_config.hpp"

namespace cafe::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kGradTolerance = 1e-4;

struct Options {
  std::string config;
  std::string manifest;
  std::string out_dir = ".";
  std::string train_domain;
  std::string checkpoint;
  std::string domain;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double beta = 0.0;
  std::string drop_rate;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  bool no_mask = false;
  bool no_sep = false;
  bool no_div = false;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> lambdas{1.5};
  std::vector<double> betas{5.0};
  std::size_t cases = 1;

  CLI::App* active = nullptr;  // the parsed subcommand
};

bool given(const Options& o, const std::string& flag) {
  const CLI::Option* opt = o.active->get_option_no_throw(flag);
  return opt != nullptr && opt->count() > 0;
}

void add_data_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--manifest", o.manifest, "Feature-file manifest (overrides the config)");
  cmd->add_option("--train-domain", o.train_domain, "Domain to train on (default: the manifest source)");
  cmd->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, Options& o, bool ablation_flags) {
  cmd->add_option("--seed", o.seed, "Training seed");
  cmd->add_option("--lambda", o.lambda, "Separation loss weight");
  cmd->add_option("--beta", o.beta, "Diverse loss weight");
  cmd->add_option("--drop-rate", o.drop_rate, "Drop fraction per piece, e.g. 10/73");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  if (ablation_flags) {
    cmd->add_flag("--no-mask", o.no_mask, "FC head on the raw features (also disables sep and div)");
    cmd->add_flag("--no-sep", o.no_sep, "Disable the separation loss");
    cmd->add_flag("--no-div", o.no_div, "Disable the diverse loss");
  }
}

RunConfig resolve_run(const Options& o) {
  RunConfig run;
  if (!o.config.empty()) run = load_run_config(o.config);
  if (!o.manifest.empty()) run.manifest = fs::path(o.manifest);
  if (!o.train_domain.empty()) run.train_domain = o.train_domain;
  return run;
}

TrainConfig resolve_train(const RunConfig& run, const Options& o) {
  json t = run.train;
  if (given(o, "--seed")) t["seed"] = o.seed;
  if (given(o, "--lambda")) t["lambda"] = o.lambda;
  if (given(o, "--beta")) t["beta"] = o.beta;
  if (!o.drop_rate.empty()) t["drop_rate"] = o.drop_rate;
  if (given(o, "--epochs")) t["epochs"] = o.epochs;
  if (given(o, "--batch-size")) t["batch_size"] = o.batch_size;
  if (o.no_mask) {
    t["mask_on"] = false;
    t["sep_on"] = false;
    t["div_on"] = false;
  }
  if (o.no_sep) t["sep_on"] = false;
  if (o.no_div) t["div_on"] = false;
  return train_config_from_json(t);
}

json run_description(const json& train, const LoadedData& data, bool normalize) {
  return {{"train", train},
          {"data", data.description},
          {"train_domain", data.domains[data.source].name()},
          {"normalize_features", normalize}};
}

void stamp(CrossDomainReport& report, const LoadedData& data, bool normalize) {
  report.config = run_description(report.config, data, normalize);
  report.config_hash = config_hash(report.config);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::string fmt_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt_accuracy(const CrossDomainReport& r) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "mean " << r.mean_accuracy;
  if (r.mean_unseen_accuracy) s << " unseen " << *r.mean_unseen_accuracy;
  return s.str();
}

json history_json(const TrainResult& result) {
  json epochs = json::array();
  for (std::size_t e = 0; e < result.epochs.size(); ++e) {
    const LossRecord& r = result.epochs[e];
    epochs.push_back({{"epoch", e}, {"cls", r.cls}, {"sep", r.sep}, {"div", r.div}, {"total", r.total}});
  }
  return {{"epochs", epochs}};
}

int cmd_bench_gen(const Options& o, std::ostream& out) {
  RunConfig run = resolve_run(o);
  if (given(o, "--seed")) run.benchmark.seed = o.seed;
  const Benchmark bench = generate(run.benchmark);
  const fs::path manifest = write_benchmark(bench, o.out_dir);
  const auto oracle = nearest_mean_oracle(bench.source(), bench.domains);
  out << "wrote " << manifest.string() << '\n';
  for (std::size_t d = 0; d < bench.domains.size(); ++d) {
    out << "  " << bench.domains[d].name() << " nearest-mean " << fmt_number(oracle[d]) << "%\n";
  }
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig run = resolve_run(o);
  const TrainConfig config = resolve_train(run, o);
  const LoadedData data = load_data(run);
  const FrozenProvider provider = FrozenProvider::file_backed(run.normalize_features);

  const FeatureDataset& source = data.domains[data.source];
  const std::uint64_t before = frozen_checksum(source);
  const TrainResult trained = train(config, source, provider);
  if (frozen_checksum(source) != before) throw ContractViolation("frozen features changed during training");
  CrossDomainReport report = evaluate_cross_domain(trained.net, provider, data.domains, source.name());
  report.config = to_json(config);
  report.seed = config.seed;
  stamp(report, data, run.normalize_features);

  const fs::path dir = o.out_dir;
  write_json(dir / "report.json", to_json(report));
  write_json(dir / "history.json", history_json(trained));
  save_checkpoint(trained.net, dir / "model.ckpt", report.config);
  out << "trained on " << report.train_domain << ": " << fmt_accuracy(report) << '\n';
  out << "report " << (dir / "report.json").string() << " sha256 " << sha256_file(dir / "report.json") << '\n';
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ArgumentError("eval needs --checkpoint");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  RunConfig run = resolve_run(o);
  if (!run.train_domain && ckpt.config.contains("train_domain")) {
    run.train_domain = ckpt.config.at("train_domain").get<std::string>();
  }
  const bool normalize = ckpt.config.value("normalize_features", false);
  const LoadedData data = load_data(run);
  const FrozenProvider provider = FrozenProvider::file_backed(normalize);

  CrossDomainReport report =
      evaluate_cross_domain(ckpt.net, provider, data.domains, data.domains[data.source].name());
  report.config = run_description(ckpt.config.value("train", json::object()), data, normalize);
  report.config["checkpoint_config_hash"] = ckpt.config_hash;
  report.config_hash = config_hash(report.config);
  report.seed = ckpt.seed;

  const fs::path path = fs::path(o.out_dir) / "eval.json";
  write_json(path, to_json(report));
  out << "evaluated: " << fmt_accuracy(report) << '\n';
  out << "report " << path.string() << " sha256 " << sha256_file(path) << '\n';
  return kOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig run = resolve_run(o);
  const TrainConfig config = resolve_train(run, o);
  const LoadedData data = load_data(run);
  const FrozenProvider provider = FrozenProvider::file_backed(run.normalize_features);

  AblationTable table = run_ablation(config, data.domains, data.source, provider, o.seeds);
  for (auto& row : table.rows) {
    for (auto& rep : row.runs) stamp(rep, data, run.normalize_features);
  }
  json j = to_json(table);
  j["config"] = run_description(to_json(config), data, run.normalize_features);
  j["config_hash"] = config_hash(j["config"]);
  const fs::path path = fs::path(o.out_dir) / "ablation.json";
  write_json(path, j);
  for (const auto& row : table.rows) {
    out << row.label << ": median mean " << fmt_number(row.median_mean_accuracy) << " unseen "
        << fmt_number(row.median_mean_unseen_accuracy) << '\n';
  }
  out << "wrote " << path.string() << '\n';
  return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const RunConfig run = resolve_run(o);
  const TrainConfig config = resolve_train(run, o);
  const LoadedData data = load_data(run);
  const FrozenProvider provider = FrozenProvider::file_backed(run.normalize_features);

  std::vector<CrossDomainReport> reports =
      run_sweep(config, data.domains, data.source, provider, o.lambdas, o.betas);
  json index = json::array();
  const fs::path dir = fs::path(o.out_dir) / "sweep";
  std::size_t k = 0;
  for (double lambda : o.lambdas) {
    for (double beta : o.betas) {
      CrossDomainReport& rep = reports[k++];
      stamp(rep, data, run.normalize_features);
      const std::string name = "lambda-" + fmt_number(lambda) + "_beta-" + fmt_number(beta) + ".json";
      write_json(dir / name, to_json(rep));
      index.push_back({{"lambda", lambda},
                       {"beta", beta},
                       {"report", name},
                       {"config_hash", rep.config_hash},
                       {"mean_accuracy", rep.mean_accuracy},
                       {"mean_unseen_accuracy", rep.mean_unseen_accuracy.value_or(rep.mean_accuracy)}});
      out << "lambda " << fmt_number(lambda) << " beta " << fmt_number(beta) << ": " << fmt_accuracy(rep) << '\n';
    }
  }
  write_json(dir / "index.json", index);
  out << "wrote " << reports.size() << " reports to " << dir.string() << '\n';
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  if (o.cases == 0) throw ArgumentError("--cases must be at least 1");
  double worst = 0.0;
  for (std::size_t i = 0; i < o.cases; ++i) {
    const auto c = verify::random_gradcheck_case(o.seed + i);
    const auto r = verify::check_training_gradients(c);
    out << "case " << c.seed << " (B=" << c.batch << " D=" << c.input_dim << " H=" << c.hidden
        << " C=" << c.channels << ", " << r.num_parameters << " params): max relative error "
        << r.worst.max_rel_error << '\n';
    worst = std::max(worst, r.worst.max_rel_error);
  }
  out << "max relative error " << worst << (worst <= kGradTolerance ? " <= " : " > ") << kGradTolerance << '\n';
  return worst <= kGradTolerance ? kOk : kFailed;
}

int cmd_dump_masks(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ArgumentError("dump-masks needs --checkpoint");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  RunConfig run = resolve_run(o);
  if (!o.domain.empty()) {
    run.train_domain = o.domain;
  } else if (!run.train_domain && ckpt.config.contains("train_domain")) {
    run.train_domain = ckpt.config.at("train_domain").get<std::string>();
  }
  const LoadedData data = load_data(run);
  const TrainConfig config = train_config_from_json(ckpt.config.value("train", json::object()));
  const FeatureDataset& ds = data.domains[data.source];
  const ChannelPartition partition = make_partition(config, ds.feature_dim(), ds.num_classes());
  const MaskDump dump = dump_masks(ckpt.net, ds, partition);
  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  write_mask_csv(dump, dir / "masks.csv");
  write_piece_max_csv(dump, dir / "piece_max.csv");
  out << "wrote masks for " << ds.name() << " to " << dir.string() << '\n';
  return kOk;
}

// Reference numbers for the benchmark, from the nearest-mean oracle and the
// no-mask baseline only. margin = median absolute deviation of the baseline's
// mean-unseen accuracy over the seeds.
int cmd_calibrate(const Options& o, std::ostream& out) {
  const RunConfig run = resolve_run(o);
  TrainConfig config = resolve_train(run, o);
  config.mask_on = false;
  config.sep_on = false;
  config.div_on = false;
  const LoadedData data = load_data(run);
  const FrozenProvider provider = FrozenProvider::file_backed(run.normalize_features);
  if (o.seeds.empty()) throw ArgumentError("--seeds must not be empty");

  const std::vector<double> oracle = nearest_mean_oracle(data.domains[data.source], data.domains);
  json oracle_j = json::object();
  double oracle_unseen = 0.0;
  for (std::size_t d = 0; d < data.domains.size(); ++d) {
    oracle_j[data.domains[d].name()] = oracle[d];
    if (d != data.source) oracle_unseen += oracle[d] / static_cast<double>(data.domains.size() - 1);
  }

  std::vector<double> unseen, source;
  for (std::uint64_t seed : o.seeds) {
    config.seed = seed;
    const CrossDomainReport rep = train_and_evaluate(config, data.domains, data.source, provider);
    unseen.push_back(rep.mean_unseen_accuracy.value_or(rep.mean_accuracy));
    source.push_back(rep.domains[data.source].accuracy);
  }
  const double med = median(unseen);
  std::vector<double> deviations;
  for (double u : unseen) deviations.push_back(std::abs(u - med));
  const double margin = median(deviations);

  json j;
  j["config"] = run_description(to_json(config), data, run.normalize_features);
  j["config_hash"] = config_hash(j["config"]);
  j["seeds"] = o.seeds;
  j["oracle_accuracy"] = oracle_j;
  j["oracle_mean_unseen_accuracy"] = oracle_unseen;
  j["baseline_mean_unseen_accuracy"] = unseen;
  j["baseline_source_accuracy"] = source;
  j["baseline_median_unseen_accuracy"] = med;
  j["baseline_median_source_accuracy"] = median(source);
  j["margin_rule"] = "median absolute deviation of baseline mean-unseen accuracy over seeds";
  j["margin"] = margin;
  const fs::path path = fs::path(o.out_dir) / "calibration.json";
  write_json(path, j);
  out << "baseline median unseen " << fmt_number(med) << " source " << fmt_number(median(source))
      << ", oracle mean unseen " << fmt_number(oracle_unseen) << ", margin " << fmt_number(margin) << '\n';
  out << "wrote " << path.string() << '\n';
  return kOk;
}

int dispatch(const Options& o, std::ostream& out) {
  const std::string name = o.active->get_name();
  if (name == "bench-gen") return cmd_bench_gen(o, out);
  if (name == "train") return cmd_train(o, out);
  if (name == "eval") return cmd_eval(o, out);
  if (name == "ablate") return cmd_ablate(o, out);
  if (name == "sweep") return cmd_sweep(o, out);
  if (name == "gradcheck") return cmd_gradcheck(o, out);
  if (name == "calibrate") return cmd_calibrate(o, out);
  return cmd_dump_masks(o, out);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned feature masks over frozen embeddings: train, evaluate, ablate", "cafe"};
  app.require_subcommand(1);
  Options o;

  auto* bench = app.add_subcommand("bench-gen", "Generate the synthetic multi-domain benchmark");
  bench->add_option("--config", o.config, "JSON run config (its benchmark section is used)");
  bench->add_option("--seed", o.seed, "Benchmark seed");
  bench->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train on one domain and evaluate on all of them");
  add_data_flags(train, o);
  add_train_flags(train, o, true);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on every domain");
  add_data_flags(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();

  auto* ablate = app.add_subcommand("ablate", "Baseline / mask / mask+sep / mask+sep+div over several seeds");
  add_data_flags(ablate, o);
  add_train_flags(ablate, o, false);
  ablate->add_option("--seeds", o.seeds, "Comma-separated training seeds")->delimiter(',')->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Grid over the separation and diverse loss weights");
  add_data_flags(sweep, o);
  sweep->add_option("--seed", o.seed, "Training seed");
  sweep->add_option("--drop-rate", o.drop_rate, "Drop fraction per piece, e.g. 10/73");
  sweep->add_option("--epochs", o.epochs, "Training epochs");
  sweep->add_option("--batch-size", o.batch_size, "Mini-batch size");
  sweep->add_option("--lambda", o.lambdas, "Comma-separated lambda values")->delimiter(',')->capture_default_str();
  sweep->add_option("--beta", o.betas, "Comma-separated beta values")->delimiter(',')->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--seed", o.seed, "First case seed")->capture_default_str();
  grad->add_option("--cases", o.cases, "Number of random cases")->capture_default_str();

  auto* calibrate = app.add_subcommand("calibrate", "Oracle and baseline reference numbers for a benchmark");
  add_data_flags(calibrate, o);
  add_train_flags(calibrate, o, false);
  calibrate->add_option("--seeds", o.seeds, "Comma-separated training seeds")->delimiter(',')->capture_default_str();

  auto* dump = app.add_subcommand("dump-masks", "Write per-class mean sigmoid masks as CSV");
  add_data_flags(dump, o);
  dump->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  dump->add_option("--domain", o.domain, "Domain to summarize (default: the training domain)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kInvalid;
  }

  try {
    o.active = app.get_subcommands().front();
    return dispatch(o, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const cafe::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailed;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cafe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cafe::cli
