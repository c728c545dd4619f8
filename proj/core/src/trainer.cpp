#include "cafe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cafe/hashing.hpp"
#include "cafe/softmax.hpp"

namespace cafe {
namespace {

// Sub-streams derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kDropStream = 3;

constexpr std::size_t kInferenceChunk = 512;

std::size_t feature_width(const FrozenProvider& provider, const FeatureDataset& dataset) {
  if (provider.kind() == ProviderKind::kRandomProjection) {
    if (provider.input_dim() != dataset.input_dim()) {
      throw ArgumentError("provider input width " + std::to_string(provider.input_dim()) +
                          " does not match dataset '" + dataset.name() + "' input width " +
                          std::to_string(dataset.input_dim()));
    }
    return provider.feature_dim();
  }
  return dataset.feature_dim();
}

MatrixD gather_inputs(const FeatureDataset& ds, std::size_t lo, std::size_t hi) {
  const MatrixF& x = ds.backbone_inputs();
  MatrixD out(hi - lo, x.cols());
  for (std::size_t i = lo; i < hi; ++i) {
    auto src = x.row(i);
    std::copy(src.begin(), src.end(), out.row(i - lo).begin());
  }
  return out;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> r(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) r[i - lo] = i;
  return r;
}

void add_scaled(LossRecord& acc, const LossRecord& v, double w) {
  acc.cls += w * v.cls;
  acc.sep += w * v.sep;
  acc.div += w * v.div;
  acc.total += w * v.total;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lambda must be finite and >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ArgumentError("beta must be finite and >= 0");
  if (sep_on && !mask_on) throw ArgumentError("separation loss requires the mask (sep_on needs mask_on)");
  if (div_on && !mask_on) throw ArgumentError("diverse loss requires the mask (div_on needs mask_on)");
  if (epochs == 0) throw ArgumentError("epochs must be positive");
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  if (drop_rate.den <= 0 || drop_rate.num < 0 || drop_rate.num >= drop_rate.den) {
    throw ArgumentError("drop_rate must lie in [0, 1)");
  }
  adam.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"lambda", c.lambda},
      {"beta", c.beta},
      {"drop_rate", c.drop_rate.str()},
      {"lr", c.adam.lr},
      {"gamma", c.adam.gamma},
      {"adam_beta1", c.adam.beta1},
      {"adam_beta2", c.adam.beta2},
      {"adam_eps", c.adam.eps},
      {"weight_decay", c.adam.weight_decay},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"mask_on", c.mask_on},
      {"sep_on", c.sep_on},
      {"div_on", c.div_on},
      {"hidden", c.hidden},
      {"backbone_out", c.backbone_out},
      {"c_norm", c.c_norm},
      {"fc_bias", c.fc_bias},
      {"shuffle", c.shuffle},
      {"log_steps", c.log_steps},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("train config must be a JSON object");
  static const std::set<std::string> kKnown = {
      "lambda", "beta", "drop_rate", "lr", "gamma", "adam_beta1", "adam_beta2", "adam_eps", "weight_decay",
      "epochs", "batch_size", "seed", "mask_on", "sep_on", "div_on", "hidden", "backbone_out", "c_norm",
      "fc_bias", "shuffle", "log_steps"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.contains(key)) throw ArgumentError("unknown train config key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.lambda = j.value("lambda", c.lambda);
    c.beta = j.value("beta", c.beta);
    if (j.contains("drop_rate")) {
      const auto& d = j.at("drop_rate");
      c.drop_rate = d.is_string() ? Rational::parse(d.get<std::string>()) : Rational::parse(d.dump());
    }
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.gamma = j.value("gamma", c.adam.gamma);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.mask_on = j.value("mask_on", c.mask_on);
    c.sep_on = j.value("sep_on", c.sep_on);
    c.div_on = j.value("div_on", c.div_on);
    c.hidden = j.value("hidden", c.hidden);
    c.backbone_out = j.value("backbone_out", c.backbone_out);
    c.c_norm = j.value("c_norm", c.c_norm);
    c.fc_bias = j.value("fc_bias", c.fc_bias);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.log_steps = j.value("log_steps", c.log_steps);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const nlohmann::json& resolved) { return sha256_hex(resolved.dump()); }

NetworkShape network_shape(const TrainConfig& config, std::size_t input_dim, std::size_t feature_dim,
                           std::size_t num_classes) {
  NetworkShape s;
  s.input_dim = input_dim;
  s.hidden = config.hidden;
  s.feature_dim = feature_dim;
  s.backbone_out = config.backbone_out;
  s.num_classes = num_classes;
  s.fc_bias = config.fc_bias;
  s.use_mask = config.mask_on;
  return s;
}

ChannelPartition make_partition(const TrainConfig& config, std::size_t feature_dim, std::size_t num_classes) {
  return split_channels(feature_dim, num_classes, config.drop_rate, config.c_norm);
}

MaskNetwork initial_network(const TrainConfig& config, std::size_t input_dim, std::size_t feature_dim,
                            std::size_t num_classes) {
  return MaskNetwork(network_shape(config, input_dim, feature_dim, num_classes),
                     derive_seed(config.seed, kInitStream));
}

StepResult training_step(const MaskNetwork& net, const TrainConfig& config, const ChannelPartition& partition,
                         const MatrixD& inputs, const MatrixD& frozen, std::span<const std::uint8_t> labels,
                         const DropMask& drop, bool want_grad) {
  ModelForward fwd = net.forward(inputs, frozen);
  SoftmaxXent cls = softmax_cross_entropy(fwd.logits, labels);

  StepResult out;
  out.losses.cls = cls.loss;
  const bool sep_on = config.mask_on && config.sep_on;
  const bool div_on = config.mask_on && config.div_on;

  PiecewiseMax sep_max;
  SoftmaxXent sep;
  if (sep_on) {
    sep_max = sep_logits(fwd.masked, drop, partition);
    sep = sep_loss(sep_max.values, labels);
    out.losses.sep = sep.loss;
  }
  DiverseLoss div;
  if (div_on) {
    div = div_loss(fwd.masked, partition);
    out.losses.div = div.loss;
  }
  out.losses.total = out.losses.cls + config.lambda * out.losses.sep + config.beta * out.losses.div;

  if (want_grad) {
    MatrixD extra;
    if (sep_on || div_on) {
      ChannelUpstream up;
      if (sep_on) {
        up.sep = &sep_max;
        up.sep_grad = &sep.grad;
        up.sep_weight = config.lambda;
      }
      if (div_on) {
        up.div = &div.maxima;
        up.div_weight = config.beta;
      }
      extra = backward_channel(partition, fwd.masked.rows(), up);
    }
    out.grads = net.backward(fwd, frozen, cls.grad, extra);
  }
  out.logits = std::move(fwd.logits);
  return out;
}

TrainResult train(const TrainConfig& config, const FeatureDataset& train_set, const FrozenProvider& provider,
                  const EpochCallback& on_epoch) {
  config.validate();
  const std::size_t c = feature_width(provider, train_set);
  const std::size_t l = train_set.num_classes();
  TrainResult result{initial_network(config, train_set.input_dim(), c, l), {}, {}};
  MaskNetwork& net = result.net;
  const ChannelPartition partition = make_partition(config, c, l);
  Adam adam(config.adam, net.decay_mask());
  Rng drop_rng(derive_seed(config.seed, kDropStream));
  const std::uint64_t shuffle_seed = derive_seed(config.seed, kShuffleStream);
  // Batches larger than the dataset collapse to full-batch training.
  const std::size_t batch_size = std::min(config.batch_size, train_set.size());
  const bool sampling_drop = config.mask_on && config.sep_on;
  const DropMask no_drop = keep_all(partition);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(train_set, batch_size, derive_seed(shuffle_seed, epoch), config.shuffle);
    LossRecord sum;
    std::size_t seen = 0;
    for (std::size_t s = 0; s < batches.size(); ++s) {
      const Batch& batch = batches[s];
      const std::string where = "epoch " + std::to_string(epoch) + " step " + std::to_string(s);
      try {
        const MatrixD x = batch.inputs();
        const MatrixD f = provider.features(train_set, batch.indices());
        const auto y = batch.labels();
        const DropMask drop = sampling_drop ? sample_drop_mask(partition, drop_rng) : no_drop;
        StepResult step = training_step(net, config, partition, x, f, y, drop, true);
        if (!std::isfinite(step.losses.total)) throw TrainingDiverged("non-finite training loss");
        adam.step(net.mutable_parameters(), step.grads, epoch);
        add_scaled(sum, step.losses, static_cast<double>(batch.size()));
        seen += batch.size();
        if (config.log_steps) result.steps.push_back(step.losses);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged(where + ": " + e.what());
      }
    }
    LossRecord mean;
    add_scaled(mean, sum, 1.0 / static_cast<double>(seen));
    result.epochs.push_back(mean);
    if (on_epoch) on_epoch(epoch, net, mean);
  }
  return result;
}

Predictions predict(const MaskNetwork& net, const MatrixD& inputs, const MatrixD& frozen) {
  Predictions out;
  out.logits = net.forward(inputs, frozen).logits;
  out.labels.reserve(out.logits.rows());
  for (std::size_t i = 0; i < out.logits.rows(); ++i) {
    out.labels.push_back(static_cast<std::uint8_t>(argmax(out.logits.row(i))));
  }
  return out;
}

Predictions predict(const MaskNetwork& net, const FrozenProvider& provider, const FeatureDataset& dataset) {
  if (dataset.input_dim() != net.shape().input_dim) {
    throw ArgumentError("predict: dataset '" + dataset.name() + "' input width does not match the network");
  }
  if (feature_width(provider, dataset) != net.shape().feature_dim) {
    throw ArgumentError("predict: feature width does not match the network");
  }
  Predictions out;
  out.logits = MatrixD(dataset.size(), net.shape().num_classes);
  out.labels.reserve(dataset.size());
  for (std::size_t lo = 0; lo < dataset.size(); lo += kInferenceChunk) {
    const std::size_t hi = std::min(dataset.size(), lo + kInferenceChunk);
    const auto rows = range(lo, hi);
    Predictions part = predict(net, gather_inputs(dataset, lo, hi), provider.features(dataset, rows));
    for (std::size_t i = 0; i < part.logits.rows(); ++i) {
      auto src = part.logits.row(i);
      std::copy(src.begin(), src.end(), out.logits.row(lo + i).begin());
    }
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
  }
  return out;
}

nlohmann::json to_json(const CrossDomainReport& r) {
  nlohmann::json domains = nlohmann::json::array();
  for (const auto& d : r.domains) {
    nlohmann::json recall = nlohmann::json::array();
    for (const auto& v : d.recall) recall.push_back(optional_json(v));
    domains.push_back({{"name", d.name},
                       {"role", d.role},
                       {"samples", d.samples},
                       {"correct", d.correct},
                       {"accuracy", d.accuracy},
                       {"per_class_recall", recall}});
  }
  return {{"train_domain", r.train_domain},
          {"domains", domains},
          {"mean_accuracy", r.mean_accuracy},
          {"mean_unseen_accuracy", optional_json(r.mean_unseen_accuracy)},
          {"config", r.config},
          {"config_hash", r.config_hash},
          {"seed", r.seed}};
}

CrossDomainReport evaluate_cross_domain(const Predictor& predictor, std::span<const FeatureDataset> datasets,
                                        const std::string& train_domain) {
  if (datasets.empty()) throw ArgumentError("evaluate_cross_domain: no datasets");
  const std::uint32_t l = datasets.front().num_classes();
  for (const auto& ds : datasets) {
    if (ds.num_classes() != l) throw ArgumentError("evaluate_cross_domain: datasets disagree on L");
  }
  CrossDomainReport report;
  report.train_domain = train_domain;
  double sum = 0.0;
  double unseen_sum = 0.0;
  std::size_t unseen = 0;
  for (const auto& ds : datasets) {
    const std::vector<std::uint8_t> pred = predictor(ds);
    if (pred.size() != ds.size()) throw ArgumentError("evaluate_cross_domain: predictor returned wrong count");
    DomainResult d;
    d.name = ds.name();
    d.role = ds.name() == train_domain ? "source" : "unseen";
    d.samples = ds.size();
    std::vector<std::size_t> class_total(l, 0);
    std::vector<std::size_t> class_hit(l, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::uint8_t y = ds.labels()[i];
      ++class_total[y];
      if (pred[i] == y) {
        ++d.correct;
        ++class_hit[y];
      }
    }
    d.accuracy = 100.0 * static_cast<double>(d.correct) / static_cast<double>(d.samples);
    for (std::uint32_t k = 0; k < l; ++k) {
      d.recall.push_back(class_total[k] == 0 ? std::nullopt
                                             : std::optional<double>(100.0 * static_cast<double>(class_hit[k]) /
                                                                     static_cast<double>(class_total[k])));
    }
    sum += d.accuracy;
    if (d.role == "unseen") {
      unseen_sum += d.accuracy;
      ++unseen;
    }
    report.domains.push_back(std::move(d));
  }
  report.mean_accuracy = sum / static_cast<double>(report.domains.size());
  if (unseen > 0) report.mean_unseen_accuracy = unseen_sum / static_cast<double>(unseen);
  return report;
}

CrossDomainReport evaluate_cross_domain(const MaskNetwork& net, const FrozenProvider& provider,
                                        std::span<const FeatureDataset> datasets, const std::string& train_domain) {
  for (const auto& ds : datasets) {
    if (ds.num_classes() != net.shape().num_classes) {
      throw ArgumentError("evaluate_cross_domain: dataset '" + ds.name() + "' has a different class count");
    }
  }
  return evaluate_cross_domain([&](const FeatureDataset& ds) { return predict(net, provider, ds).labels; },
                               datasets, train_domain);
}

CrossDomainReport train_and_evaluate(const TrainConfig& config, std::span<const FeatureDataset> datasets,
                                     std::size_t source, const FrozenProvider& provider, TrainResult* trained) {
  if (source >= datasets.size()) throw ArgumentError("train_and_evaluate: source index out of range");
  TrainResult result = train(config, datasets[source], provider);
  CrossDomainReport report = evaluate_cross_domain(result.net, provider, datasets, datasets[source].name());
  report.config = to_json(config);
  report.config_hash = config_hash(report.config);
  report.seed = config.seed;
  if (trained) *trained = std::move(result);
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

nlohmann::json to_json(const AblationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& rep : r.runs) runs.push_back(to_json(rep));
    nlohmann::json per_domain = nlohmann::json::object();
    if (!r.runs.empty()) {
      for (std::size_t d = 0; d < r.runs.front().domains.size(); ++d) {
        std::vector<double> acc;
        for (const auto& rep : r.runs) acc.push_back(rep.domains[d].accuracy);
        per_domain[r.runs.front().domains[d].name] = median(acc);
      }
    }
    rows.push_back({{"label", r.label},
                    {"mask", r.mask_on},
                    {"separation", r.sep_on},
                    {"diverse", r.div_on},
                    {"median_domain_accuracy", per_domain},
                    {"median_mean_accuracy", r.median_mean_accuracy},
                    {"median_mean_unseen_accuracy", r.median_mean_unseen_accuracy},
                    {"runs", runs}});
  }
  return {{"train_domain", t.train_domain}, {"seeds", t.seeds}, {"rows", rows}};
}

AblationTable run_ablation(const TrainConfig& config, std::span<const FeatureDataset> datasets, std::size_t source,
                           const FrozenProvider& provider, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ArgumentError("run_ablation: need at least one seed");
  if (source >= datasets.size()) throw ArgumentError("run_ablation: source index out of range");
  struct Variant {
    const char* label;
    bool mask, sep, div;
  };
  static constexpr Variant kVariants[] = {
      {"baseline", false, false, false},
      {"mask", true, false, false},
      {"mask+sep", true, true, false},
      {"mask+sep+div", true, true, true},
  };
  AblationTable table;
  table.train_domain = datasets[source].name();
  table.seeds.assign(seeds.begin(), seeds.end());
  for (const Variant& v : kVariants) {
    AblationRow row{v.label, v.mask, v.sep, v.div, {}, 0.0, 0.0};
    std::vector<double> means;
    std::vector<double> unseen;
    for (std::uint64_t seed : seeds) {
      TrainConfig c = config;
      c.mask_on = v.mask;
      c.sep_on = v.sep;
      c.div_on = v.div;
      c.seed = seed;
      row.runs.push_back(train_and_evaluate(c, datasets, source, provider));
      means.push_back(row.runs.back().mean_accuracy);
      unseen.push_back(row.runs.back().mean_unseen_accuracy.value_or(row.runs.back().mean_accuracy));
    }
    row.median_mean_accuracy = median(means);
    row.median_mean_unseen_accuracy = median(unseen);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<CrossDomainReport> run_sweep(const TrainConfig& config, std::span<const FeatureDataset> datasets,
                                         std::size_t source, const FrozenProvider& provider,
                                         std::span<const double> lambdas, std::span<const double> betas) {
  if (lambdas.empty() || betas.empty()) throw ArgumentError("run_sweep: empty grid");
  std::vector<CrossDomainReport> out;
  for (double lambda : lambdas) {
    for (double beta : betas) {
      TrainConfig c = config;
      c.lambda = lambda;
      c.beta = beta;
      out.push_back(train_and_evaluate(c, datasets, source, provider));
    }
  }
  return out;
}

MaskDump dump_masks(const MaskNetwork& net, const FeatureDataset& dataset, const ChannelPartition& partition) {
  if (!net.shape().use_mask) throw ArgumentError("dump_masks: network has no mask path");
  const std::size_t c = net.shape().feature_dim;
  const std::size_t l = net.shape().num_classes;
  if (partition.channels() != c || partition.classes() != l) {
    throw ArgumentError("dump_masks: partition does not match the network");
  }
  if (dataset.num_classes() != l) throw ArgumentError("dump_masks: dataset class count differs");
  MaskDump dump{MatrixD(l, c), std::vector<bool>(l, false), MatrixD(l, l)};
  std::vector<std::size_t> counts(l, 0);
  for (std::size_t lo = 0; lo < dataset.size(); lo += kInferenceChunk) {
    const std::size_t hi = std::min(dataset.size(), lo + kInferenceChunk);
    const ForwardCache fwd = net.forward_mask(gather_inputs(dataset, lo, hi));
    const PiecewiseMax maxima = piece_max(fwd.mask_sigmoid, partition);
    for (std::size_t i = 0; i < hi - lo; ++i) {
      const std::uint8_t y = dataset.labels()[lo + i];
      ++counts[y];
      auto src = fwd.mask_sigmoid.row(i);
      auto dst = dump.class_means.row(y);
      for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
      for (std::size_t j = 0; j < l; ++j) dump.piece_max(y, j) += maxima.values(i, j);
    }
  }
  for (std::size_t k = 0; k < l; ++k) {
    if (counts[k] == 0) continue;
    dump.present[k] = true;
    const double inv = 1.0 / static_cast<double>(counts[k]);
    for (double& v : dump.class_means.row(k)) v *= inv;
    for (double& v : dump.piece_max.row(k)) v *= inv;
  }
  return dump;
}

namespace {
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void write_mask_csv(const MaskDump& dump, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "class";
  for (std::size_t k = 0; k < dump.class_means.cols(); ++k) out << ',' << k;
  out << '\n';
  for (std::size_t r = 0; r < dump.class_means.rows(); ++r) {
    out << r;
    if (!dump.present[r]) {
      out << ",absent\n";
      continue;
    }
    for (double v : dump.class_means.row(r)) out << ',' << fmt_double(v);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_piece_max_csv(const MaskDump& dump, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "class,piece,mean_max\n";
  for (std::size_t r = 0; r < dump.piece_max.rows(); ++r) {
    if (!dump.present[r]) continue;
    for (std::size_t j = 0; j < dump.piece_max.cols(); ++j) {
      out << r << ',' << j << ',' << fmt_double(dump.piece_max(r, j)) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

MaskCsv read_mask_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("mask csv: missing header");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<std::vector<double>> rows;
  std::vector<bool> present;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (static_cast<std::size_t>(std::stoul(cell)) != rows.size()) {
      throw ValidationError("mask csv: class rows out of order");
    }
    std::vector<double> values(cols, 0.0);
    std::getline(ss, cell, ',');
    if (cell == "absent") {
      present.push_back(false);
    } else {
      present.push_back(true);
      std::size_t k = 0;
      do {
        if (k >= cols) throw ValidationError("mask csv: too many columns");
        values[k++] = std::stod(cell);
      } while (std::getline(ss, cell, ','));
      if (k != cols) throw ValidationError("mask csv: too few columns");
    }
    rows.push_back(std::move(values));
  }
  MaskCsv out{MatrixD(rows.size(), cols), std::move(present)};
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), out.values.row(r).begin());
  return out;
}

double mean_piece_max(const MaskNetwork& net, const FrozenProvider& provider, const FeatureDataset& dataset,
                      const ChannelPartition& partition) {
  double sum = 0.0;
  for (std::size_t lo = 0; lo < dataset.size(); lo += kInferenceChunk) {
    const std::size_t hi = std::min(dataset.size(), lo + kInferenceChunk);
    const auto rows = range(lo, hi);
    const ModelForward fwd = net.forward(gather_inputs(dataset, lo, hi), provider.features(dataset, rows));
    for (double v : piece_max(fwd.masked, partition).values.values()) sum += v;
  }
  return sum / (static_cast<double>(dataset.size()) * static_cast<double>(partition.classes()));
}

}  // namespace cafe
