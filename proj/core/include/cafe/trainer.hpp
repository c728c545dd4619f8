#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cafe/channel_modules.hpp"
#include "cafe/feature_store.hpp"
#include "cafe/frozen_provider.hpp"
#include "cafe/mask_network.hpp"
#include "cafe/optimizer.hpp"

namespace cafe {

struct TrainConfig {
  double lambda = 1.5;  // weight of the separation loss
  double beta = 5.0;    // weight of the channel-diverse loss
  Rational drop_rate{10, 73};
  AdamConfig adam;
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool mask_on = true;
  bool sep_on = true;
  bool div_on = true;
  std::vector<std::size_t> hidden{128};
  std::size_t backbone_out = 0;
  std::size_t c_norm = 0;  // 0 -> floor(C / L)
  bool fc_bias = true;
  bool shuffle = true;
  bool log_steps = false;

  /// Throws ArgumentError on negative weights or sep/div without the mask.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
std::string config_hash(const nlohmann::json& resolved);

NetworkShape network_shape(const TrainConfig& config, std::size_t input_dim, std::size_t feature_dim,
                           std::size_t num_classes);
ChannelPartition make_partition(const TrainConfig& config, std::size_t feature_dim, std::size_t num_classes);

/// The untrained network train() starts from.
MaskNetwork initial_network(const TrainConfig& config, std::size_t input_dim, std::size_t feature_dim,
                            std::size_t num_classes);

struct LossRecord {
  double cls = 0.0;
  double sep = 0.0;
  double div = 0.0;
  double total = 0.0;  // cls + lambda * sep + beta * div
};

struct StepResult {
  LossRecord losses;
  MatrixD logits;              // FC logits (the inference path)
  std::vector<double> grads;   // empty unless requested
};

/// One evaluation of the combined training loss on a batch with a fixed drop
/// mask; disabled terms are recorded as 0 and contribute no gradient.
StepResult training_step(const MaskNetwork& net, const TrainConfig& config, const ChannelPartition& partition,
                         const MatrixD& inputs, const MatrixD& frozen, std::span<const std::uint8_t> labels,
                         const DropMask& drop, bool want_grad);

struct TrainResult {
  MaskNetwork net;
  std::vector<LossRecord> epochs;  // per-epoch means weighted by batch size
  std::vector<LossRecord> steps;
};

using EpochCallback = std::function<void(std::size_t epoch, const MaskNetwork& net, const LossRecord& mean)>;

TrainResult train(const TrainConfig& config, const FeatureDataset& train_set, const FrozenProvider& provider,
                  const EpochCallback& on_epoch = {});

struct Predictions {
  std::vector<std::uint8_t> labels;
  MatrixD logits;
};

/// Inference: mask path and FC head only. Ties go to the lowest class index.
Predictions predict(const MaskNetwork& net, const MatrixD& inputs, const MatrixD& frozen);
Predictions predict(const MaskNetwork& net, const FrozenProvider& provider, const FeatureDataset& dataset);

struct DomainResult {
  std::string name;
  std::string role;  // "source" or "unseen"
  std::size_t samples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;                       // percent
  std::vector<std::optional<double>> recall;   // per class, percent; nullopt if class absent
};

struct CrossDomainReport {
  std::string train_domain;
  std::vector<DomainResult> domains;
  double mean_accuracy = 0.0;                  // over every listed domain
  std::optional<double> mean_unseen_accuracy;  // over domains other than train_domain
  nlohmann::json config = nlohmann::json::object();
  std::string config_hash;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const CrossDomainReport& report);

using Predictor = std::function<std::vector<std::uint8_t>(const FeatureDataset&)>;

CrossDomainReport evaluate_cross_domain(const Predictor& predictor, std::span<const FeatureDataset> datasets,
                                        const std::string& train_domain);
CrossDomainReport evaluate_cross_domain(const MaskNetwork& net, const FrozenProvider& provider,
                                        std::span<const FeatureDataset> datasets, const std::string& train_domain);

/// Train on `datasets[source]`, evaluate on all of them, embed the config.
CrossDomainReport train_and_evaluate(const TrainConfig& config, std::span<const FeatureDataset> datasets,
                                     std::size_t source, const FrozenProvider& provider,
                                     TrainResult* trained = nullptr);

struct AblationRow {
  std::string label;
  bool mask_on = false;
  bool sep_on = false;
  bool div_on = false;
  std::vector<CrossDomainReport> runs;  // one per seed
  double median_mean_accuracy = 0.0;
  double median_mean_unseen_accuracy = 0.0;
};

struct AblationTable {
  std::string train_domain;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // baseline, mask, mask+sep, mask+sep+div
};

nlohmann::json to_json(const AblationTable& table);

AblationTable run_ablation(const TrainConfig& config, std::span<const FeatureDataset> datasets, std::size_t source,
                           const FrozenProvider& provider, std::span<const std::uint64_t> seeds);

/// One report per (lambda, beta) pair, lambda-major.
std::vector<CrossDomainReport> run_sweep(const TrainConfig& config, std::span<const FeatureDataset> datasets,
                                         std::size_t source, const FrozenProvider& provider,
                                         std::span<const double> lambdas, std::span<const double> betas);

double median(std::vector<double> values);

struct MaskDump {
  MatrixD class_means;       // L x C mean of M_s per class
  std::vector<bool> present; // false when a class has no samples; its rows stay zero
  MatrixD piece_max;         // L x L: class x piece, mean of the per-piece max of M_s
};

MaskDump dump_masks(const MaskNetwork& net, const FeatureDataset& dataset, const ChannelPartition& partition);

/// Header "class,0,1,...,C-1"; one row per class; absent classes are written as "<class>,absent".
void write_mask_csv(const MaskDump& dump, const std::filesystem::path& path);
/// Header "class,piece,mean_max".
void write_piece_max_csv(const MaskDump& dump, const std::filesystem::path& path);

struct MaskCsv {
  MatrixD values;
  std::vector<bool> present;
};
MaskCsv read_mask_csv(const std::filesystem::path& path);

/// Mean over samples and pieces of the per-piece max of F~.
double mean_piece_max(const MaskNetwork& net, const FrozenProvider& provider, const FeatureDataset& dataset,
                      const ChannelPartition& partition);

}  // namespace cafe
